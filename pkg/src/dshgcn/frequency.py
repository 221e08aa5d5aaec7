"""Clique-expansion graph with paired low-pass / high-pass convolution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .hypergraph import build_topology
from .numerics import Tape, Var


@dataclass(frozen=True)
class PairGraphTopology:
    n_students: int
    adjacency: np.ndarray
    degree: np.ndarray        # 1-D node degrees
    laplacian: np.ndarray
    filter_low: np.ndarray
    filter_high: np.ndarray
    copies: int = 1

    def tile(self, copies: int) -> "PairGraphTopology":
        if self.copies != 1:
            raise ValueError("tile() expects a single-classroom topology")
        eye = np.eye(copies)
        return PairGraphTopology(self.n_students, np.kron(eye, self.adjacency), np.tile(self.degree, copies),
                                 np.kron(eye, self.laplacian), np.kron(eye, self.filter_low),
                                 np.kron(eye, self.filter_high), copies)


def build_pair_graph(n_students: int) -> PairGraphTopology:
    """Connect every pair of nodes sharing a hyperedge; no self-loops."""
    H = build_topology(n_students).incidence
    A = (H @ H.T > 0).astype(float)
    np.fill_diagonal(A, 0.0)
    deg = A.sum(axis=1)
    inv_sqrt = 1.0 / np.sqrt(deg)
    norm_adj = inv_sqrt[:, None] * A * inv_sqrt[None, :]
    eye = np.eye(A.shape[0])
    lap = eye - norm_adj
    return PairGraphTopology(n_students, A, deg, lap, eye + norm_adj, lap)


def init_params(rng: np.random.Generator, hidden: int, layers: int) -> dict[str, np.ndarray]:
    bound = 1.0 / np.sqrt(hidden)
    params = {}
    for k in range(layers):
        params[f"frequency.low{k}"] = rng.uniform(-bound, bound, size=(hidden, hidden))
        params[f"frequency.high{k}"] = rng.uniform(-bound, bound, size=(hidden, hidden))
    return params


def freq_layer(tape: Tape, F: Var, low: Var, high: Var, W_low: Var, W_high: Var) -> Var:
    """``ReLU((F_l F) W_l + (F_h F) W_h)``."""
    smooth = tape.matmul(tape.matmul(low, F), W_low)
    sharp = tape.matmul(tape.matmul(high, F), W_high)
    return tape.relu(tape.add(smooth, sharp))


def multifrequency_forward(tape: Tape, F: Var, topo: PairGraphTopology, weights: dict[str, Var],
                           layers: int, dropout: Optional[Callable[[Var], Var]] = None) -> Var:
    if layers < 1:
        raise ValueError("frequency stream needs at least one layer")
    low = tape.const(topo.filter_low)
    high = tape.const(topo.filter_high)
    for k in range(layers):
        F = freq_layer(tape, F, low, high, weights[f"frequency.low{k}"], weights[f"frequency.high{k}"])
        if dropout is not None:
            F = dropout(F)
    return F

