"""Contagion hypergraph and the attention-weighted hypergraph convolution stream.

Node ``3*i + t`` is feature type ``t`` (emotional, attentional, upper_body)
of student ``i``.  Columns ``0..N-1`` of the incidence matrix are the
per-student hyperedges, columns ``N..N+2`` the per-type group hyperedges.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional

import numpy as np

from .numerics import Tape, Var

N_TYPES = 3
ATTENTION_SLOPE = 0.2


@dataclass(frozen=True)
class HypergraphTopology:
    n_students: int
    incidence: np.ndarray          # binary, (3N, N+3) per copy
    kinds: tuple                   # ("student", i) or ("group", t) per column
    copies: int = 1

    @property
    def n_nodes(self) -> int:
        return self.incidence.shape[0]

    @property
    def n_edges(self) -> int:
        return self.incidence.shape[1]

    def node(self, student: int, ftype: int) -> int:
        return N_TYPES * student + ftype

    @cached_property
    def edge_slot(self) -> np.ndarray:
        """Index of each column's learnable hyperedge weight (shared across copies)."""
        return np.tile(np.arange(self.n_students + N_TYPES), self.copies)

    @cached_property
    def member_mean(self) -> np.ndarray:
        """``B^-1 H^T`` on the binary incidence: hyperedge = mean of its member nodes."""
        return self.incidence.T / self.incidence.sum(axis=0)[:, None]

    def tile(self, copies: int) -> "HypergraphTopology":
        """Disjoint union of ``copies`` classrooms (block-diagonal incidence)."""
        if self.copies != 1:
            raise ValueError("tile() expects a single-classroom topology")
        return HypergraphTopology(self.n_students, np.kron(np.eye(copies), self.incidence),
                                  self.kinds * copies, copies)


def build_topology(n_students: int) -> HypergraphTopology:
    if n_students < 1:
        raise ValueError(f"hypergraph needs at least one student, got {n_students}")
    n = n_students
    H = np.zeros((N_TYPES * n, n + N_TYPES))
    for i in range(n):
        for t in range(N_TYPES):
            H[N_TYPES * i + t, i] = 1.0
            H[N_TYPES * i + t, n + t] = 1.0
    kinds = tuple(("student", i) for i in range(n)) + tuple(("group", t) for t in range(N_TYPES))
    return HypergraphTopology(n, H, kinds)


def init_params(rng: np.random.Generator, n_students: int, hidden: int, layers: int) -> dict[str, np.ndarray]:
    bound = 1.0 / np.sqrt(hidden)
    params = {"hypergraph.edge_weight": np.ones((n_students + N_TYPES, 1)),
              "hypergraph.attention": rng.uniform(-1.0 / np.sqrt(2 * hidden), 1.0 / np.sqrt(2 * hidden),
                                                  size=(2 * hidden, 1))}
    for layer in range(layers):
        params[f"hypergraph.P{layer}"] = rng.uniform(-bound, bound, size=(hidden, hidden))
    return params


def attention_weights(tape: Tape, X: Var, topo: HypergraphTopology, a: Var) -> Var:
    """Attention-weighted incidence from projected node features ``X = Q P``.

    Score of node v in hyperedge e is LeakyReLU(a . [x_v ; x_e]) with x_e the
    mean of e's members; each node's scores are softmax-normalised over the
    hyperedges it belongs to.
    """
    hidden = X.shape[1]
    node_part = tape.matmul(X, tape.rows(a, np.arange(hidden)))
    edge_feats = tape.matmul(tape.const(topo.member_mean), X)
    edge_part = tape.matmul(edge_feats, tape.rows(a, np.arange(hidden, 2 * hidden)))
    scores = tape.leaky_relu(tape.outer_add(node_part, tape.transpose(edge_part)), ATTENTION_SLOPE)
    return tape.masked_softmax_rows(scores, topo.incidence)


def propagate(tape: Tape, X: Var, H: Var, edge_weight: Var) -> Var:
    """``D_H^-1 H W_e B^-1 H^T X`` evaluated right to left, degrees taken from ``H``."""
    node_deg = tape.row_sums(H)
    edge_deg = tape.transpose(tape.col_sums(H))
    for deg, what in ((node_deg, "node"), (edge_deg, "hyperedge")):
        zero = np.flatnonzero(deg.value[:, 0] == 0.0)
        if zero.size:
            raise ZeroDivisionError(f"degenerate {what} {int(zero[0])}: zero degree")
    Y = tape.matmul(tape.transpose(H), X)
    Y = tape.scale_rows(Y, tape.reciprocal(edge_deg))
    Y = tape.scale_rows(Y, edge_weight)
    Z = tape.matmul(H, Y)
    return tape.scale_rows(Z, tape.reciprocal(node_deg))


def hyperconv_layer(tape: Tape, Q: Var, H: Var, P: Var, edge_weight: Var) -> Var:
    return tape.relu(propagate(tape, tape.matmul(Q, P), H, edge_weight))


def multivariate_forward(tape: Tape, Q: Var, topo: HypergraphTopology, weights: dict[str, Var],
                         layers: int, attention: bool = True, attention_per_layer: bool = True,
                         dropout: Optional[Callable[[Var], Var]] = None) -> Var:
    """Stack ``layers`` hypergraph convolutions; returns the last layer's node features."""
    if layers < 1:
        raise ValueError("hypergraph stream needs at least one layer")
    edge_weight = tape.rows(weights["hypergraph.edge_weight"], topo.edge_slot)
    binary = tape.const(topo.incidence)
    H = binary
    for layer in range(layers):
        P = weights[f"hypergraph.P{layer}"]
        X = tape.matmul(Q, P)
        if attention and (attention_per_layer or layer == 0):
            H = attention_weights(tape, X, topo, weights["hypergraph.attention"])
        Q = tape.relu(propagate(tape, X, H, edge_weight))
        if dropout is not None:
            Q = dropout(Q)
    return Q
