"""Dense tensors with reverse-mode automatic differentiation.

Values live in numpy arrays; differentiation is by a global gradient tape
that records one backward closure per op, replayed in reverse construction
order. Construction order is topological by definition (an op's inputs
always exist before its output), so the replay is a valid reverse
topological sweep.

No implicit broadcasting anywhere: elementwise ops demand identical shapes
and all shape adaptation goes through explicit concat / reshape / matmul.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

DEFAULT_DTYPE = np.float64


class DimensionError(ValueError):
    """Shape mismatch between op operands."""


class AutodiffError(RuntimeError):
    """Tape misuse: double backward, empty tape, non-scalar loss."""


class Tensor:
    """A dense n-d array with an optional same-shape gradient buffer.

    ``grad`` exists iff ``requires_grad`` is set, and always has exactly the
    shape of ``values``. Tensors without a grad slot are immutable by
    convention after creation and safe to share read-only.
    """

    __slots__ = ("values", "grad", "requires_grad")

    def __init__(self, values, requires_grad: bool = False, dtype=None):
        arr = np.asarray(values, dtype=dtype if dtype is not None else DEFAULT_DTYPE)
        self.values = arr
        self.requires_grad = bool(requires_grad)
        self.grad = np.zeros_like(arr) if requires_grad else None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.values.shape

    @property
    def size(self) -> int:
        return self.values.size

    @property
    def dtype(self):
        return self.values.dtype

    def item(self) -> float:
        if self.values.size != 1:
            raise DimensionError(f"item() needs a size-1 tensor, got shape {self.shape}")
        return float(self.values.reshape(()))

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def detach(self) -> "Tensor":
        return Tensor(self.values.copy(), requires_grad=False, dtype=self.values.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # operator sugar over the module-level ops
    def __add__(self, other: "Tensor") -> "Tensor":
        return add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        return sub(self, other)

    def __mul__(self, other: "Tensor") -> "Tensor":
        return mul(self, other)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        return matmul(self, other)

    def sum(self) -> "Tensor":
        return sum_all(self)


class Tape:
    """Ordered record of ops for one backward replay.

    Each record is (op kind, output tensor, backward closure). ``backward``
    may run once per reset; a second call without ``reset`` is an error so
    stale gradients cannot be silently double-counted.
    """

    def __init__(self):
        self.records: list[tuple[str, Tensor, Callable[[np.ndarray], None]]] = []
        self.enabled = True
        self._consumed = False

    def record(self, kind: str, out: Tensor, backward_fn: Callable[[np.ndarray], None]) -> None:
        if self.enabled and out.requires_grad:
            self.records.append((kind, out, backward_fn))

    def reset(self) -> None:
        self.records.clear()
        self._consumed = False

    def __len__(self) -> int:
        return len(self.records)

    def backward(self, loss: Tensor) -> None:
        if loss.values.size != 1:
            raise AutodiffError(f"backward needs a scalar loss, got shape {loss.shape}")
        if not self.records:
            raise AutodiffError("backward on an empty tape")
        if self._consumed:
            raise AutodiffError("double backward without tape reset")
        if not loss.requires_grad:
            raise AutodiffError("loss does not require grad; nothing to differentiate")
        self._consumed = True
        loss.grad.fill(0.0)
        loss.grad += np.ones_like(loss.values)
        for _, out, fn in reversed(self.records):
            fn(out.grad)


_TAPE = Tape()


def get_tape() -> Tape:
    return _TAPE


def reset_tape() -> None:
    _TAPE.reset()


def _swap_tape(tape: Tape) -> Tape:
    global _TAPE
    old = _TAPE
    _TAPE = tape
    return old


class no_grad:
    """Context manager that suspends tape recording (pure inference)."""

    def __enter__(self):
        self._was = _TAPE.enabled
        _TAPE.enabled = False
        return self

    def __exit__(self, *exc):
        _TAPE.enabled = self._was
        return False


def backward(loss: Tensor) -> None:
    """Accumulate gradients of ``loss`` into every reachable grad slot."""
    _TAPE.backward(loss)


def _out(values: np.ndarray, inputs: Sequence[Tensor]) -> Tensor:
    rg = _TAPE.enabled and any(t.requires_grad for t in inputs)
    return Tensor(values, requires_grad=rg, dtype=values.dtype)


# ---------------------------------------------------------------------------
# primitive ops


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.values.ndim != 2 or b.values.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul shapes incompatible: {a.shape} · {b.shape}")
    out = _out(a.values @ b.values, (a, b))

    def bwd(g):
        if a.requires_grad:
            a.grad += g @ b.values.T
        if b.requires_grad:
            b.grad += a.values.T @ g

    _TAPE.record("matmul", out, bwd)
    return out


def matvec(w: Tensor, x: Tensor) -> Tensor:
    """(m, n) matrix times (n,) vector -> (m,); fused gemv record."""
    if w.values.ndim != 2 or x.values.ndim != 1 or w.shape[1] != x.shape[0]:
        raise DimensionError(f"matvec shapes incompatible: {w.shape} · {x.shape}")
    out = _out(w.values @ x.values, (w, x))

    def bwd(g):
        if w.requires_grad:
            w.grad += np.outer(g, x.values)
        if x.requires_grad:
            x.grad += w.values.T @ g

    _TAPE.record("matvec", out, bwd)
    return out


def row(x: Tensor, i: int) -> Tensor:
    """Row i of a matrix as a 1-d tensor (fused narrow + squeeze)."""
    if x.values.ndim != 2:
        raise DimensionError(f"row needs a matrix, got shape {x.shape}")
    if not (0 <= i < x.shape[0]):
        raise DimensionError(f"row {i} out of range for shape {x.shape}")
    out = _out(x.values[i].copy(), (x,))

    def bwd(g):
        if x.requires_grad:
            x.grad[i] += g

    _TAPE.record("row", out, bwd)
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise DimensionError("concat of an empty list")
    axis = axis % tensors[0].values.ndim
    base = list(tensors[0].shape)
    for t in tensors[1:]:
        other = list(t.shape)
        if len(other) != len(base) or any(
            o != b for i, (o, b) in enumerate(zip(other, base)) if i != axis
        ):
            raise DimensionError(
                f"concat off-axis extents differ: {tensors[0].shape} vs {t.shape} on axis {axis}"
            )
    out = _out(np.concatenate([t.values for t in tensors], axis=axis), tensors)
    extents = [t.shape[axis] for t in tensors]

    def bwd(g):
        offset = 0
        for t, ext in zip(tensors, extents):
            if t.requires_grad:
                sl = [slice(None)] * g.ndim
                sl[axis] = slice(offset, offset + ext)
                t.grad += g[tuple(sl)]
            offset += ext

    _TAPE.record("concat", out, bwd)
    return out


def elementwise(kind: str, a: Tensor, b: Tensor) -> Tensor:
    """Pointwise add/sub/mul on identically-shaped tensors (no broadcasting)."""
    if a.shape != b.shape:
        raise DimensionError(f"elementwise {kind} shape mismatch: {a.shape} vs {b.shape}")
    if kind == "add":
        out = _out(a.values + b.values, (a, b))

        def bwd(g):
            if a.requires_grad:
                a.grad += g
            if b.requires_grad:
                b.grad += g

    elif kind == "sub":
        out = _out(a.values - b.values, (a, b))

        def bwd(g):
            if a.requires_grad:
                a.grad += g
            if b.requires_grad:
                b.grad -= g

    elif kind == "mul":
        out = _out(a.values * b.values, (a, b))

        def bwd(g):
            if a.requires_grad:
                a.grad += g * b.values
            if b.requires_grad:
                b.grad += g * a.values

    else:
        raise ValueError(f"unknown elementwise kind {kind!r}")
    _TAPE.record(kind, out, bwd)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("add", a, b)


def sub(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("sub", a, b)


def mul(a: Tensor, b: Tensor) -> Tensor:
    return elementwise("mul", a, b)


def _stable_sigmoid(x: np.ndarray) -> np.ndarray:
    # exp overflow for very negative x saturates to inf and divides to 0.0,
    # which is the right limit; suppress the spurious warning
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def activation(kind: str, x: Tensor) -> Tensor:
    """relu / tanh / sigmoid; backward uses the saved output only."""
    if kind == "relu":
        y = np.maximum(x.values, 0.0)
    elif kind == "tanh":
        y = np.tanh(x.values)
    elif kind == "sigmoid":
        y = _stable_sigmoid(x.values)
    else:
        raise ValueError(f"unknown activation {kind!r}")
    out = _out(y, (x,))
    saved = out.values

    def bwd(g):
        if not x.requires_grad:
            return
        if kind == "relu":
            x.grad += g * (saved > 0.0)
        elif kind == "tanh":
            x.grad += g * (1.0 - saved * saved)
        else:
            x.grad += g * saved * (1.0 - saved)

    _TAPE.record(kind, out, bwd)
    return out


def relu(x: Tensor) -> Tensor:
    return activation("relu", x)


def tanh(x: Tensor) -> Tensor:
    return activation("tanh", x)


def sigmoid(x: Tensor) -> Tensor:
    return activation("sigmoid", x)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-shifted softmax along ``axis``; each slice sums to 1."""
    shifted = x.values - np.max(x.values, axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / np.sum(e, axis=axis, keepdims=True)
    out = _out(y, (x,))
    saved = out.values

    def bwd(g):
        if x.requires_grad:
            inner = np.sum(g * saved, axis=axis, keepdims=True)
            x.grad += saved * (g - inner)

    _TAPE.record("softmax", out, bwd)
    return out


def max_over_axis(x: Tensor, axis: int) -> Tensor:
    """Maximum along ``axis`` (axis removed); gradient routes to the first argmax."""
    if x.shape[axis] == 0:
        raise DimensionError(f"max over empty axis {axis} of shape {x.shape}")
    out = _out(np.max(x.values, axis=axis), (x,))
    # first-argmax tie break keeps backward deterministic
    arg = np.argmax(x.values, axis=axis)

    def bwd(g):
        if x.requires_grad:
            gx = np.zeros_like(x.values)
            np.put_along_axis(gx, np.expand_dims(arg, axis), np.expand_dims(g, axis), axis)
            x.grad += gx

    _TAPE.record("max", out, bwd)
    return out


def dropout(x: Tensor, keep_prob: float, training: bool, rng=None) -> Tensor:
    """Inverted dropout: survivors scaled by 1/keep_prob so eval is identity."""
    if not (0.0 < keep_prob <= 1.0):
        raise ValueError(f"keep_prob must be in (0, 1], got {keep_prob}")
    if not training or keep_prob == 1.0:
        out = _out(x.values.copy(), (x,))

        def bwd_id(g):
            if x.requires_grad:
                x.grad += g

        _TAPE.record("dropout", out, bwd_id)
        return out
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    mask = (rng.random(x.shape) < keep_prob).astype(x.values.dtype) / keep_prob
    out = _out(x.values * mask, (x,))

    def bwd(g):
        if x.requires_grad:
            x.grad += g * mask

    _TAPE.record("dropout", out, bwd)
    return out


def sum_all(x: Tensor) -> Tensor:
    out = _out(np.asarray(np.sum(x.values)), (x,))

    def bwd(g):
        if x.requires_grad:
            x.grad += g  # scalar g broadcasts over the whole buffer

    _TAPE.record("sum", out, bwd)
    return out


def log(x: Tensor) -> Tensor:
    out = _out(np.log(x.values), (x,))

    def bwd(g):
        if x.requires_grad:
            x.grad += g / x.values

    _TAPE.record("log", out, bwd)
    return out


def clamp_min(x: Tensor, lo: float) -> Tensor:
    """max(x, lo) pointwise; gradient is blocked where the clamp engaged."""
    out = _out(np.maximum(x.values, lo), (x,))
    passed = x.values > lo

    def bwd(g):
        if x.requires_grad:
            x.grad += g * passed

    _TAPE.record("clamp_min", out, bwd)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    out = _out(x.values * c, (x,))

    def bwd(g):
        if x.requires_grad:
            x.grad += g * c

    _TAPE.record("scale", out, bwd)
    return out


def reshape(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    out = _out(x.values.reshape(shape), (x,))
    orig = x.shape

    def bwd(g):
        if x.requires_grad:
            x.grad += g.reshape(orig)

    _TAPE.record("reshape", out, bwd)
    return out


def transpose(x: Tensor) -> Tensor:
    if x.values.ndim != 2:
        raise DimensionError(f"transpose needs a matrix, got shape {x.shape}")
    out = _out(x.values.T.copy(), (x,))

    def bwd(g):
        if x.requires_grad:
            x.grad += g.T

    _TAPE.record("transpose", out, bwd)
    return out


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along ``axis``."""
    if start < 0 or start + length > x.shape[axis]:
        raise DimensionError(
            f"narrow [{start}:{start + length}) out of range for axis {axis} of shape {x.shape}"
        )
    sl = [slice(None)] * x.values.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    out = _out(x.values[sl].copy(), (x,))

    def bwd(g):
        if x.requires_grad:
            x.grad[sl] += g

    _TAPE.record("narrow", out, bwd)
    return out


def rows(table: Tensor, ids: Sequence[int]) -> Tensor:
    """Gather rows of a 2-d table (embedding lookup); backward scatter-adds."""
    if table.values.ndim != 2:
        raise DimensionError(f"rows needs a 2-d table, got shape {table.shape}")
    idx = np.asarray(ids, dtype=np.intp)
    out = _out(table.values[idx], (table,))

    def bwd(g):
        if table.requires_grad:
            np.add.at(table.grad, idx, g)

    _TAPE.record("rows", out, bwd)
    return out


# ---------------------------------------------------------------------------
# finite-difference oracle


@dataclass
class GradCheckReport:
    passed: bool
    max_rel_error: float
    tol: float
    step: float
    message: str = ""

    def __bool__(self) -> bool:
        return self.passed


def grad_check(
    f: Callable[[Tensor], Tensor], x: Tensor, step: float = 1e-5, tol: float = 1e-5
) -> GradCheckReport:
    """Compare the tape gradient of scalar f(x) against central differences.

    Relative error per coordinate is |a - n| / max(|a|, |n|, 1); the report
    carries the max over coordinates. f must be deterministic: it is probed
    twice and rejected if the two values differ (e.g. training-mode dropout).
    """
    own_tape = Tape()
    prev = _swap_tape(own_tape)
    saved_values = x.values.copy()
    saved_rg, saved_grad = x.requires_grad, x.grad
    try:
        with no_grad():
            y1 = f(x).values.copy()
            y2 = f(x).values.copy()
        if y1.size != 1:
            return GradCheckReport(False, math.inf, tol, step, "f is not scalar-valued")
        if not np.array_equal(y1, y2):
            return GradCheckReport(False, math.inf, tol, step, "f is nondeterministic")

        x.requires_grad = True
        x.grad = np.zeros_like(x.values)
        own_tape.reset()
        backward(f(x))
        analytic = x.grad.copy()
        x.requires_grad, x.grad = saved_rg, saved_grad

        numeric = np.zeros_like(saved_values)
        flat = x.values.reshape(-1)
        nflat = numeric.reshape(-1)
        with no_grad():
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + step
                hi = float(f(x).values.reshape(()))
                flat[i] = orig - step
                lo = float(f(x).values.reshape(()))
                flat[i] = orig
                nflat[i] = (hi - lo) / (2.0 * step)

        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
        max_err = float(np.max(np.abs(analytic - numeric) / denom)) if flat.size else 0.0
        return GradCheckReport(max_err <= tol, max_err, tol, step)
    finally:
        x.values[...] = saved_values
        x.requires_grad, x.grad = saved_rg, saved_grad
        _swap_tape(prev)
