"""Stream fusion, engagement classifier and the regularised weighted loss."""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .hypergraph import N_TYPES
from .numerics import Tape, Var


def init_params(rng: np.random.Generator, in_width: int, n_classes: int) -> dict[str, np.ndarray]:
    bound = 1.0 / np.sqrt(in_width)
    return {"head.weight": rng.uniform(-bound, bound, size=(in_width, n_classes)),
            "head.bias": np.zeros((1, n_classes))}


def fuse(tape: Tape, streams: Sequence[Var]) -> Var:
    """Per-student concatenation of node features.

    With streams ``(v, f)`` each student's row is
    ``v_e | f_e | v_a | f_a | v_u | f_u``; a single stream gives ``v_e | v_a | v_u``.
    """
    if not streams:
        raise ValueError("fuse: no stream outputs to concatenate")
    n_nodes, hidden = streams[0].shape
    for s in streams:
        if s.shape != (n_nodes, hidden):
            raise ValueError(f"fuse: stream shapes differ {[v.shape for v in streams]}")
    joined = streams[0] if len(streams) == 1 else tape.concat(list(streams))
    return tape.reshape(joined, n_nodes // N_TYPES, N_TYPES * len(streams) * hidden)


def classify(tape: Tape, mu: Var, weight: Var, bias: Var) -> Var:
    """Class probabilities ``softmax(ReLU(mu) W + b)``, one row per student."""
    logits = tape.add_row(tape.matmul(tape.relu(mu), weight), bias)
    return tape.softmax_rows(logits)


def predict(probs: np.ndarray) -> np.ndarray:
    # np.argmax returns the first maximum, i.e. the lowest class index on ties
    return np.argmax(probs, axis=1)


def loss(tape: Tape, probs: Var, labels, class_weights, params: Iterable[Var], l2: float) -> Var:
    """Weighted cross-entropy averaged over students plus ``l2 * sum(theta^2)``."""
    labels = np.asarray(labels, dtype=np.intp)
    n_classes = probs.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        bad = int(np.flatnonzero((labels < 0) | (labels >= n_classes))[0])
        raise ValueError(f"label {int(labels[bad])} at sample {bad} outside [0, {n_classes})")
    if l2 < 0:
        raise ValueError("l2 strength must be non-negative")
    w = np.asarray(class_weights, dtype=float)[labels][:, None]
    picked = tape.pick(tape.log(probs), labels)
    total = tape.scale(tape.sum(tape.mask(picked, w)), -1.0 / len(labels))
    if l2 > 0:
        for p in params:
            total = tape.add(total, tape.scale(tape.sum_squares(p), l2))
    return total
