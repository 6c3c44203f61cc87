"""Reverse-mode automatic differentiation over dense 2-D float64 matrices.

Small eager tape in the micrograd style: every op returns a new Tensor
holding its value, the parent tensors, and a closure that pushes the
output gradient back to the parents. ``backward`` on a 1x1 loss walks
the tape in reverse topological order and accumulates ``grad`` on every
tensor created with ``requires_grad=True``.

Only what the model needs is implemented: matmul, broadcasting
add/sub/mul, elementwise division and powers, row gather/overwrite for
mask-token substitution, a fused masked row-softmax, the activations
(elu, leaky_relu, tanh, sigmoid), and the scaled cosine error. Ops on
tensors that do not require gradients short-circuit to constants, so a
loss branch with weight zero contributes no tape at all.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "Tensor",
    "add",
    "sub",
    "mul",
    "div",
    "scale",
    "matmul",
    "transpose",
    "pow_const",
    "row_sums",
    "sum_all",
    "gather_rows",
    "overwrite_rows",
    "concat_cols",
    "slice_cols",
    "rowwise_softmax",
    "elu",
    "leaky_relu",
    "tanh",
    "sigmoid",
    "sce_rows",
    "zero_norm_rows",
    "backward",
    "grad_check",
    "GradCheckReport",
]

SCE_EPS = 1e-12


class Tensor:
    """A 2-D float64 matrix node in the computation tape.

    Scalars are stored as (1, 1) and 1-D vectors as (1, n) rows; anything
    with more than two axes is rejected.
    """

    __slots__ = ("values", "requires_grad", "grad", "_parents", "_backward")

    def __init__(
        self,
        values,
        requires_grad: bool = False,
        _parents: tuple = (),
        _backward: Callable[[np.ndarray], None] | None = None,
    ):
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim == 0:
            arr = arr.reshape(1, 1)
        elif arr.ndim == 1:
            arr = arr.reshape(1, -1)
        elif arr.ndim != 2:
            raise ValueError(f"tensor must be at most 2-D, got shape {arr.shape}")
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._parents = _parents
        self._backward = _backward

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def item(self) -> float:
        if self.values.size != 1:
            raise ValueError(f"item() requires a 1x1 tensor, got shape {self.shape}")
        return float(self.values[0, 0])

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __matmul__(self, other):
        return matmul(self, other)

    @property
    def T(self) -> "Tensor":
        return transpose(self)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(x)


def _accumulate(t: Tensor, g: np.ndarray) -> None:
    if t.grad is None:
        t.grad = g.copy()
    else:
        t.grad = t.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    if g.shape == shape:
        return g
    out = g
    if shape[0] == 1 and g.shape[0] != 1:
        out = out.sum(axis=0, keepdims=True)
    if shape[1] == 1 and g.shape[1] != 1:
        out = out.sum(axis=1, keepdims=True)
    return out


def _make(values: np.ndarray, parents: Iterable[Tensor], bw: Callable[[np.ndarray], None]) -> Tensor:
    parents = tuple(parents)
    if any(p.requires_grad for p in parents):
        return Tensor(values, requires_grad=True, _parents=parents, _backward=bw)
    return Tensor(values)


def _check_broadcast(a: Tensor, b: Tensor, opname: str) -> None:
    for ax in (0, 1):
        da, db = a.shape[ax], b.shape[ax]
        if da != db and da != 1 and db != 1:
            raise ValueError(f"{opname}: shapes {a.shape} and {b.shape} do not broadcast")


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "add")
    out_values = a.values + b.values

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g, b.shape))

    return _make(out_values, (a, b), bw)


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "sub")
    out_values = a.values - b.values

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g, b.shape))

    return _make(out_values, (a, b), bw)


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "mul")
    out_values = a.values * b.values

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g * b.values, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(g * a.values, b.shape))

    return _make(out_values, (a, b), bw)


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    _check_broadcast(a, b, "div")
    out_values = a.values / b.values

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, _unbroadcast(g / b.values, a.shape))
        if b.requires_grad:
            _accumulate(b, _unbroadcast(-g * a.values / (b.values * b.values), b.shape))

    return _make(out_values, (a, b), bw)


def scale(a: Tensor, c: float) -> Tensor:
    """Multiply by a python float without adding a tensor operand."""
    c = float(c)
    out_values = a.values * c

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g * c)

    return _make(out_values, (a,), bw)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul: inner dims differ, {a.shape} @ {b.shape}")
    out_values = a.values @ b.values

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g @ b.values.T)
        if b.requires_grad:
            _accumulate(b, a.values.T @ g)

    return _make(out_values, (a, b), bw)


def transpose(a: Tensor) -> Tensor:
    out_values = a.values.T.copy()

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g.T)

    return _make(out_values, (a,), bw)


def pow_const(a: Tensor, p: float) -> Tensor:
    """Elementwise a**p for a python float exponent.

    The gradient is p * a**(p-1); for non-integer p the caller must keep
    the base positive (the scaled cosine error does, via its epsilon
    guard).
    """
    p = float(p)
    out_values = a.values**p

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g * p * a.values ** (p - 1.0))

    return _make(out_values, (a,), bw)


def row_sums(a: Tensor) -> Tensor:
    """Sum over columns, returning an (n, 1) column."""
    out_values = a.values.sum(axis=1, keepdims=True)

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, np.broadcast_to(g, a.shape).copy())

    return _make(out_values, (a,), bw)


def sum_all(a: Tensor) -> Tensor:
    out_values = np.array([[a.values.sum()]])

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, np.full(a.shape, g[0, 0]))

    return _make(out_values, (a,), bw)


def gather_rows(a: Tensor, index) -> Tensor:
    """Select rows by integer index; repeated indices are allowed."""
    index = np.asarray(index, dtype=np.int64).ravel()
    n = a.shape[0]
    if index.size and (index.min() < 0 or index.max() >= n):
        raise IndexError(f"gather_rows: index out of range for {n} rows")
    out_values = a.values[index]

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            ga = np.zeros(a.shape)
            np.add.at(ga, index, g)
            _accumulate(a, ga)

    return _make(out_values, (a,), bw)


def overwrite_rows(a: Tensor, index, row: Tensor) -> Tensor:
    """Copy ``a`` with the given rows replaced by a single (1, d) row.

    The row's gradient is the sum of the output gradient over every
    replaced position, which is how a shared mask token receives its
    update.
    """
    index = np.asarray(index, dtype=np.int64).ravel()
    row = _as_tensor(row)
    n, d = a.shape
    if row.shape != (1, d):
        raise ValueError(f"overwrite_rows: row shape {row.shape} does not match (1, {d})")
    if index.size and (index.min() < 0 or index.max() >= n):
        raise IndexError(f"overwrite_rows: index out of range for {n} rows")
    out_values = a.values.copy()
    out_values[index] = row.values[0]

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            ga = g.copy()
            ga[index] = 0.0
            _accumulate(a, ga)
        if row.requires_grad:
            _accumulate(row, g[index].sum(axis=0, keepdims=True))

    return _make(out_values, (a, row), bw)


def concat_cols(tensors: Sequence[Tensor]) -> Tensor:
    tensors = [_as_tensor(t) for t in tensors]
    if not tensors:
        raise ValueError("concat_cols: need at least one tensor")
    rows = tensors[0].shape[0]
    for t in tensors:
        if t.shape[0] != rows:
            raise ValueError("concat_cols: row counts differ")
    out_values = np.concatenate([t.values for t in tensors], axis=1)
    widths = [t.shape[1] for t in tensors]
    offsets = np.cumsum([0] + widths)

    def bw(g: np.ndarray) -> None:
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            if t.requires_grad:
                _accumulate(t, g[:, lo:hi])

    return _make(out_values, tensors, bw)


def slice_cols(a: Tensor, start: int, stop: int) -> Tensor:
    if not (0 <= start < stop <= a.shape[1]):
        raise ValueError(f"slice_cols: [{start}:{stop}] out of range for {a.shape[1]} columns")
    out_values = a.values[:, start:stop].copy()

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            ga = np.zeros(a.shape)
            ga[:, start:stop] = g
            _accumulate(a, ga)

    return _make(out_values, (a,), bw)


def rowwise_softmax(a: Tensor, mask: np.ndarray | None = None) -> Tensor:
    """Row-stabilized softmax, restricted to unmasked entries.

    ``mask`` is a binary ndarray of the same shape; masked entries come
    out exactly zero and each row sums to one over the unmasked set.
    A row with no unmasked entry is an error.
    """
    x = a.values
    if mask is not None:
        mask = np.asarray(mask)
        if mask.shape != x.shape:
            raise ValueError(f"rowwise_softmax: mask shape {mask.shape} != {x.shape}")
        keep = mask > 0
        dead = ~keep.any(axis=1)
        if dead.any():
            raise ValueError(
                f"rowwise_softmax: row {int(np.flatnonzero(dead)[0])} has no unmasked entries"
            )
        shifted = np.where(keep, x, -np.inf)
    else:
        shifted = x
    shifted = shifted - shifted.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    out_values = e / e.sum(axis=1, keepdims=True)

    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            s = out_values
            inner = (g * s).sum(axis=1, keepdims=True)
            _accumulate(a, s * (g - inner))

    return _make(out_values, (a,), bw)


def _unary(a: Tensor, out_values: np.ndarray, deriv: np.ndarray) -> Tensor:
    def bw(g: np.ndarray) -> None:
        if a.requires_grad:
            _accumulate(a, g * deriv)

    return _make(out_values, (a,), bw)


def elu(a: Tensor) -> Tensor:
    x = a.values
    neg = np.exp(np.minimum(x, 0.0)) - 1.0
    out = np.where(x > 0.0, x, neg)
    return _unary(a, out, np.where(x > 0.0, 1.0, neg + 1.0))


def leaky_relu(a: Tensor, slope: float = 0.2) -> Tensor:
    x = a.values
    out = np.where(x >= 0.0, x, slope * x)
    return _unary(a, out, np.where(x >= 0.0, 1.0, slope))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.values)
    return _unary(a, out, 1.0 - out * out)


def sigmoid(a: Tensor) -> Tensor:
    x = a.values
    out = np.empty_like(x)
    pos = x >= 0.0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _unary(a, out, out * (1.0 - out))


def zero_norm_rows(x: Tensor, y: Tensor, rows=None) -> np.ndarray:
    """Indices among ``rows`` where either operand has an all-zero row."""
    idx = np.arange(x.shape[0]) if rows is None else np.asarray(list(rows), dtype=np.int64)
    nx = np.linalg.norm(x.values[idx], axis=1)
    ny = np.linalg.norm(y.values[idx], axis=1)
    return idx[(nx == 0.0) | (ny == 0.0)]


def sce_rows(x: Tensor, y: Tensor, gamma: float, rows=None) -> Tensor:
    """Scaled cosine error between matching rows of two matrices.

    Per row v: (1 - cos(x_v, y_v)) ** gamma, averaged over the included
    rows. ``rows`` limits the average to an index subset (None means all
    rows); rows where either side has zero norm are dropped from both
    the sum and the divisor. The cosine denominator carries a 1e-12
    guard, which also keeps the base strictly inside (0, 2) so
    non-integer gamma is safe.
    """
    gamma = float(gamma)
    if gamma < 1.0:
        raise ValueError(f"sce_rows: gamma must be >= 1, got {gamma}")
    if x.shape != y.shape:
        raise ValueError(f"sce_rows: shapes differ, {x.shape} vs {y.shape}")
    if rows is None:
        idx = np.arange(x.shape[0], dtype=np.int64)
    else:
        idx = np.asarray(sorted(int(r) for r in rows), dtype=np.int64)
        if idx.size and (idx.min() < 0 or idx.max() >= x.shape[0]):
            raise IndexError(f"sce_rows: row index out of range for {x.shape[0]} rows")
    if idx.size == 0:
        raise ValueError("sce_rows: empty row set")
    nx = np.linalg.norm(x.values[idx], axis=1)
    ny = np.linalg.norm(y.values[idx], axis=1)
    included = idx[(nx > 0.0) & (ny > 0.0)]
    if included.size == 0:
        raise ValueError("sce_rows: every candidate row has zero norm")

    xg = gather_rows(x, included)
    yg = gather_rows(y, included)
    dots = row_sums(mul(xg, yg))
    xn = pow_const(row_sums(mul(xg, xg)), 0.5)
    yn = pow_const(row_sums(mul(yg, yg)), 0.5)
    cos = div(dots, add(mul(xn, yn), SCE_EPS))
    base = sub(1.0, cos)
    return scale(sum_all(pow_const(base, gamma)), 1.0 / included.size)


def backward(loss: Tensor) -> None:
    """Accumulate gradients of a scalar loss into every reachable tensor."""
    if loss.shape != (1, 1):
        raise ValueError(f"backward: loss must be 1x1, got shape {loss.shape}")
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for parent in node._parents:
            if id(parent) not in seen:
                stack.append((parent, False))
    loss.grad = np.ones((1, 1))
    for node in reversed(order):
        if node._backward is not None and node.grad is not None:
            node._backward(node.grad)


@dataclass
class GradCheckReport:
    """Result of comparing analytic and finite-difference gradients."""

    max_rel_error: float
    worst_index: tuple[int, int]
    analytic: np.ndarray
    numeric: np.ndarray

    def ok(self, tol: float = 1e-4) -> bool:
        return self.max_rel_error < tol


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = 1e-5) -> GradCheckReport:
    """Compare f's analytic gradient at x against central differences.

    Relative error per coordinate is |a - n| / max(|a|, |n|, 1e-6); the
    floor keeps near-zero coordinates from blowing up the ratio.
    """
    if h <= 0.0:
        raise ValueError(f"grad_check: step h must be positive, got {h}")
    base = np.asarray(x, dtype=np.float64)
    probe = Tensor(base.copy(), requires_grad=True)
    out = f(probe)
    if out.shape != (1, 1):
        raise ValueError(f"grad_check: f must return a 1x1 tensor, got {out.shape}")
    out.backward()
    analytic = probe.grad if probe.grad is not None else np.zeros(probe.shape)

    numeric = np.zeros_like(analytic)
    flat = base.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        hi = f(Tensor(base.copy())).item()
        flat[k] = orig - h
        lo = f(Tensor(base.copy())).item()
        flat[k] = orig
        numeric.reshape(-1)[k] = (hi - lo) / (2.0 * h)

    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-6)
    rel = np.abs(analytic - numeric) / denom
    worst = np.unravel_index(int(np.argmax(rel)), rel.shape)
    return GradCheckReport(
        max_rel_error=float(rel[worst]),
        worst_index=(int(worst[0]), int(worst[1])),
        analytic=analytic,
        numeric=numeric,
    )
