"""Dense 64-bit matrix arithmetic with a reverse-mode tape.

Every value is a 2-D ``float64`` numpy array wrapped in a :class:`Var`.
Operations are methods on a :class:`Tape`, which records one node per
operation so :meth:`Tape.backward` can replay them in reverse.  Tapes share
no state, so independent tapes can run in separate threads.

    tape = Tape()
    W = tape.param("W", np.ones((3, 2)))
    x = tape.const(np.ones((1, 3)))
    loss = tape.sum(tape.matmul(x, W))
    grads = tape.backward(loss)   # {"W": array of ones}
"""

from __future__ import annotations

from typing import Callable, Optional, Sequence

import numpy as np

DTYPE = np.float64
LOG_FLOOR = 1e-12


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested operation."""


class Var:
    __slots__ = ("value", "index", "requires_grad", "name")

    def __init__(self, value: np.ndarray, index: int, requires_grad: bool, name: Optional[str] = None):
        self.value = value
        self.index = index
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple:
        return self.value.shape

    def __repr__(self) -> str:
        label = f" {self.name!r}" if self.name else ""
        return f"Var{label}(shape={self.value.shape}, index={self.index})"


# A backward rule maps the upstream gradient to one gradient per parent.
Rule = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


class _Node:
    __slots__ = ("out", "parents", "rule", "op")

    def __init__(self, out: Var, parents: tuple, rule: Optional[Rule], op: str):
        self.out = out
        self.parents = parents
        self.rule = rule
        self.op = op


def as_matrix(value, what: str = "value") -> np.ndarray:
    arr = np.array(value, dtype=DTYPE)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(1, -1)
    elif arr.ndim != 2:
        raise ShapeError(f"{what}: expected a matrix, got array of shape {arr.shape}")
    return arr


def _same_shape(op: str, a: Var, b: Var) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{op}: shape mismatch {a.shape} vs {b.shape}")


class Tape:
    """Records operations in execution order; ``nodes[i]`` only reads nodes ``< i``."""

    def __init__(self):
        self.nodes: list[_Node] = []
        self.params: dict[str, Var] = {}

    # -- leaves ---------------------------------------------------------

    def _push(self, value: np.ndarray, parents: tuple, rule: Optional[Rule], op: str,
              name: Optional[str] = None) -> Var:
        needs = any(p.requires_grad for p in parents)
        var = Var(value, len(self.nodes), needs, name)
        self.nodes.append(_Node(var, parents, rule if needs else None, op))
        return var

    def param(self, name: str, value) -> Var:
        """Register a trainable leaf.  Gradients are reported under ``name``."""
        if name in self.params:
            raise KeyError(f"parameter {name!r} already on tape")
        var = Var(as_matrix(value, name), len(self.nodes), True, name)
        self.nodes.append(_Node(var, (), None, "param"))
        self.params[name] = var
        return var

    def const(self, value) -> Var:
        var = Var(as_matrix(value), len(self.nodes), False)
        self.nodes.append(_Node(var, (), None, "const"))
        return var

    # -- linear algebra -------------------------------------------------

    def matmul(self, a: Var, b: Var) -> Var:
        if a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul: cannot multiply {a.shape} by {b.shape}")
        av, bv = a.value, b.value

        def rule(g):
            return (g @ bv.T if a.requires_grad else None,
                    av.T @ g if b.requires_grad else None)

        return self._push(av @ bv, (a, b), rule, "matmul")

    def transpose(self, a: Var) -> Var:
        return self._push(a.value.T.copy(), (a,), lambda g: (g.T,), "transpose")

    def reshape(self, a: Var, rows: int, cols: int) -> Var:
        if rows * cols != a.value.size:
            raise ShapeError(f"reshape: cannot view {a.shape} as {(rows, cols)}")
        shape = a.shape
        return self._push(a.value.reshape(rows, cols), (a,),
                          lambda g: (g.reshape(shape),), "reshape")

    def concat(self, parts: Sequence[Var]) -> Var:
        """Join matrices side by side; row vectors concatenate into one row vector."""
        if not parts:
            raise ShapeError("concat: empty list of parts")
        rows = parts[0].shape[0]
        for p in parts:
            if p.shape[0] != rows:
                raise ShapeError(f"concat: row counts differ {[q.shape for q in parts]}")
        bounds = np.cumsum([0] + [p.shape[1] for p in parts])

        def rule(g):
            return tuple(g[:, bounds[i]:bounds[i + 1]] for i in range(len(parts)))

        return self._push(np.concatenate([p.value for p in parts], axis=1),
                          tuple(parts), rule, "concat")

    def rows(self, a: Var, index) -> Var:
        """Gather rows ``a[index]``; repeated indices accumulate in backward."""
        index = np.asarray(index, dtype=np.intp)
        n = a.shape[0]
        if index.size and (index.min() < 0 or index.max() >= n):
            raise IndexError(f"rows: index out of range for {n} rows")
        shape = a.shape

        def rule(g):
            out = np.zeros(shape, dtype=DTYPE)
            np.add.at(out, index, g)
            return (out,)

        return self._push(a.value[index], (a,), rule, "rows")

    # -- elementwise ----------------------------------------------------

    def add(self, a: Var, b: Var) -> Var:
        _same_shape("add", a, b)
        return self._push(a.value + b.value, (a, b), lambda g: (g, g), "add")

    def sub(self, a: Var, b: Var) -> Var:
        _same_shape("sub", a, b)
        return self._push(a.value - b.value, (a, b), lambda g: (g, -g), "sub")

    def hadamard(self, a: Var, b: Var) -> Var:
        _same_shape("hadamard", a, b)
        av, bv = a.value, b.value
        return self._push(av * bv, (a, b), lambda g: (g * bv, g * av), "hadamard")

    def scale(self, a: Var, c: float) -> Var:
        c = float(c)
        return self._push(a.value * c, (a,), lambda g: (g * c,), "scale")

    def add_row(self, a: Var, bias: Var) -> Var:
        """Add a 1 x cols bias row to every row of ``a``."""
        if bias.shape != (1, a.shape[1]):
            raise ShapeError(f"add_row: bias {bias.shape} does not fit {a.shape}")
        return self._push(a.value + bias.value, (a, bias),
                          lambda g: (g, g.sum(axis=0, keepdims=True)), "add_row")

    def outer_add(self, col: Var, row: Var) -> Var:
        """``out[i, j] = col[i] + row[j]`` for an m x 1 column and a 1 x n row."""
        if col.shape[1] != 1 or row.shape[0] != 1:
            raise ShapeError(f"outer_add: need column and row, got {col.shape}, {row.shape}")
        return self._push(col.value + row.value, (col, row),
                          lambda g: (g.sum(axis=1, keepdims=True), g.sum(axis=0, keepdims=True)),
                          "outer_add")

    def relu(self, a: Var) -> Var:
        mask = a.value > 0.0
        return self._push(np.where(mask, a.value, 0.0), (a,), lambda g: (g * mask,), "relu")

    def leaky_relu(self, a: Var, slope: float = 0.2) -> Var:
        factor = np.where(a.value > 0.0, 1.0, slope)
        return self._push(a.value * factor, (a,), lambda g: (g * factor,), "leaky_relu")

    def reciprocal(self, a: Var) -> Var:
        if np.any(a.value == 0.0):
            raise ZeroDivisionError(f"reciprocal: zero entry at {np.argwhere(a.value == 0.0)[0].tolist()}")
        inv = 1.0 / a.value
        return self._push(inv, (a,), lambda g: (-g * inv * inv,), "reciprocal")

    def log(self, a: Var, floor: float = LOG_FLOOR) -> Var:
        """Natural log of ``max(a, floor)``; clamped entries pass no gradient."""
        clamped = np.maximum(a.value, floor)
        live = a.value > floor
        return self._push(np.log(clamped), (a,), lambda g: (np.where(live, g / clamped, 0.0),), "log")

    def mask(self, a: Var, mask: np.ndarray) -> Var:
        """Multiply by a fixed array (dropout masks, selectors)."""
        m = np.asarray(mask, dtype=DTYPE)
        if m.shape != a.shape:
            raise ShapeError(f"mask: shape mismatch {a.shape} vs {m.shape}")
        return self._push(a.value * m, (a,), lambda g: (g * m,), "mask")

    # -- diagonal scalings ---------------------------------------------

    def scale_rows(self, a: Var, d: Var) -> Var:
        """``diag(d) @ a`` for an m x 1 column ``d``."""
        if d.shape != (a.shape[0], 1):
            raise ShapeError(f"scale_rows: {d.shape} cannot scale rows of {a.shape}")
        av, dv = a.value, d.value
        return self._push(av * dv, (a, d),
                          lambda g: (g * dv, (g * av).sum(axis=1, keepdims=True)), "scale_rows")

    def scale_cols(self, a: Var, d: Var) -> Var:
        """``a @ diag(d)`` for a 1 x n row ``d``."""
        if d.shape != (1, a.shape[1]):
            raise ShapeError(f"scale_cols: {d.shape} cannot scale columns of {a.shape}")
        av, dv = a.value, d.value
        return self._push(av * dv, (a, d),
                          lambda g: (g * dv, (g * av).sum(axis=0, keepdims=True)), "scale_cols")

    # -- reductions -----------------------------------------------------

    def sum(self, a: Var) -> Var:
        shape = a.shape
        return self._push(np.array([[a.value.sum()]]), (a,),
                          lambda g: (np.full(shape, g[0, 0]),), "sum")

    def row_sums(self, a: Var) -> Var:
        shape = a.shape
        return self._push(a.value.sum(axis=1, keepdims=True), (a,),
                          lambda g: (np.broadcast_to(g, shape).copy(),), "row_sums")

    def col_sums(self, a: Var) -> Var:
        shape = a.shape
        return self._push(a.value.sum(axis=0, keepdims=True), (a,),
                          lambda g: (np.broadcast_to(g, shape).copy(),), "col_sums")

    def sum_squares(self, a: Var) -> Var:
        av = a.value
        return self._push(np.array([[np.sum(av * av)]]), (a,),
                          lambda g: (2.0 * g[0, 0] * av,), "sum_squares")

    def pick(self, a: Var, cols) -> Var:
        """Column ``cols[i]`` of row ``i``, as an m x 1 column."""
        cols = np.asarray(cols, dtype=np.intp)
        if cols.shape != (a.shape[0],):
            raise ShapeError(f"pick: need one column index per row of {a.shape}")
        r = np.arange(a.shape[0])
        shape = a.shape

        def rule(g):
            out = np.zeros(shape, dtype=DTYPE)
            out[r, cols] = g[:, 0]
            return (out,)

        return self._push(a.value[r, cols][:, None].copy(), (a,), rule, "pick")

    # -- normalisation --------------------------------------------------

    def softmax_rows(self, a: Var) -> Var:
        """Row-wise softmax with max subtraction."""
        z = a.value - a.value.max(axis=1, keepdims=True)
        e = np.exp(z)
        p = e / e.sum(axis=1, keepdims=True)

        def rule(g):
            return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

        return self._push(p, (a,), rule, "softmax_rows")

    def masked_softmax_rows(self, a: Var, mask: np.ndarray) -> Var:
        """Softmax of each row over entries where ``mask`` is nonzero; zero elsewhere.

        Every row must have at least one live entry.
        """
        live = np.asarray(mask) != 0
        if live.shape != a.shape:
            raise ShapeError(f"masked_softmax_rows: mask {live.shape} vs {a.shape}")
        if not live.any(axis=1).all():
            bad = int(np.flatnonzero(~live.any(axis=1))[0])
            raise ValueError(f"masked_softmax_rows: row {bad} has no live entries")
        z = np.where(live, a.value, -np.inf)
        z = z - z.max(axis=1, keepdims=True)
        e = np.where(live, np.exp(z), 0.0)
        p = e / e.sum(axis=1, keepdims=True)

        def rule(g):
            return (p * (g - (g * p).sum(axis=1, keepdims=True)),)

        return self._push(p, (a,), rule, "masked_softmax_rows")

    # -- reverse pass ---------------------------------------------------

    def backward(self, loss: Var) -> dict[str, np.ndarray]:
        """Gradient of the scalar ``loss`` with respect to every registered parameter.

        Parameters off every path to ``loss`` get zeros.
        """
        if loss.shape != (1, 1):
            raise ShapeError(f"backward: loss must be 1 x 1, got {loss.shape}")
        grads: list[Optional[np.ndarray]] = [None] * len(self.nodes)
        grads[loss.index] = np.ones((1, 1), dtype=DTYPE)
        for i in range(loss.index, -1, -1):
            node = self.nodes[i]
            g = grads[i]
            if g is None or node.rule is None:
                continue
            for parent, pg in zip(node.parents, node.rule(g)):
                if pg is None or not parent.requires_grad:
                    continue
                j = parent.index
                grads[j] = pg if grads[j] is None else grads[j] + pg
        out = {}
        for name, var in self.params.items():
            g = grads[var.index]
            out[name] = np.zeros_like(var.value) if g is None else np.array(g, dtype=DTYPE)
        return out
