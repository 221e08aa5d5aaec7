"""Per-type affine projections plus a shared student-identity embedding."""

from __future__ import annotations

import numpy as np

from .numerics import ShapeError, Tape, Var

FEATURE_TYPES = ("emotional", "attentional", "upper_body")


def init_params(rng: np.random.Generator, dims: dict[str, int], hidden: int, n_max: int) -> dict[str, np.ndarray]:
    """Uniform(+-1/sqrt(fan_in)) weights, zero biases, N(0, 0.02) embedding table."""
    params = {}
    for t in FEATURE_TYPES:
        bound = 1.0 / np.sqrt(dims[t])
        params[f"encoder.{t}.weight"] = rng.uniform(-bound, bound, size=(dims[t], hidden))
        params[f"encoder.{t}.bias"] = np.zeros((1, hidden))
    params["encoder.student_embedding"] = rng.normal(0.0, 0.02, size=(n_max, hidden))
    return params


def project(tape: Tape, x: Var, weight: Var, bias: Var) -> Var:
    """``x @ W + b`` for a stack of raw feature rows (one row per student)."""
    if x.shape[1] != weight.shape[0]:
        raise ShapeError(f"project: features of width {x.shape[1]} do not match weight {weight.shape}")
    return tape.add_row(tape.matmul(x, weight), bias)


def student_embedding(tape: Tape, table: Var, student_index) -> Var:
    """Row lookup in the embedding table; equivalent to multiplying by one-hot ids."""
    idx = np.atleast_1d(np.asarray(student_index))
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"student index out of range [0, {table.shape[0]})")
    return tape.rows(table, idx)


def encode(tape: Tape, raw: dict[str, Var], student_index, weights: dict[str, Var],
           dropped: tuple = ()) -> Var:
    """Encode S students into the 3S x D_h node matrix.

    Rows are student-major with type order (emotional, attentional,
    upper_body).  Types listed in ``dropped`` contribute only the embedding,
    so their projection receives no gradient.
    """
    emb = student_embedding(tape, weights["encoder.student_embedding"], student_index)
    s, hidden = emb.shape
    blocks = []
    for t in FEATURE_TYPES:
        if t in dropped:
            blocks.append(emb)
            continue
        c = project(tape, raw[t], weights[f"encoder.{t}.weight"], weights[f"encoder.{t}.bias"])
        blocks.append(tape.add(c, emb))
    # (S, 3*D) rows [e | a | u] reshape to student-major (3S, D)
    return tape.reshape(tape.concat(blocks), 3 * s, hidden)
