"""Dense tensors with tape-based reverse-mode differentiation.

Everything the separation pipeline computes flows through the ops defined
here, which keeps three concerns in one place:

* gradients: each op appends an entry to the active :class:`GradientTape`;
  replaying the tape backward fills in ``grad`` for every ``requires_grad``
  tensor reachable from the loss.
* memory accounting: every owning array registers its byte count with a
  process-wide meter, giving a deterministic peak-allocation figure for the
  scaling benchmark.
* multiply-accumulate accounting: ``matmul`` (which also backs the
  convolutions via the window kernels) tallies MACs when counting is on.

Shape discipline is strict: element-wise ops require identical shapes, the
only array broadcast is the documented :func:`broadcast_add` (leading-axis
replication), and python scalars / 0-d tensors may scale anything.
"""

from __future__ import annotations

import weakref
from contextlib import contextmanager

import numpy as np

from . import kernels

DEFAULT_DTYPE = np.float64


class ShapeError(ValueError):
    """Operand shapes are incompatible for the requested op."""


class DegenerateInputError(ValueError):
    """Input is structurally valid but empty along the reduced axis."""


class TapeError(RuntimeError):
    """Tape misuse: backward on a consumed tape or on a tensor without one."""


# ---------------------------------------------------------------------------
# instrumentation


class _Meter:
    __slots__ = ("current_bytes", "peak_bytes", "macs", "counting_macs")

    def __init__(self):
        self.current_bytes = 0
        self.peak_bytes = 0
        self.macs = 0
        self.counting_macs = False


_meter = _Meter()


def _release_bytes(n):
    _meter.current_bytes -= n


def _track(tensor, arr):
    if arr.base is not None:  # views don't own memory
        return
    n = arr.nbytes
    _meter.current_bytes += n
    if _meter.current_bytes > _meter.peak_bytes:
        _meter.peak_bytes = _meter.current_bytes
    weakref.finalize(tensor, _release_bytes, n)


def reset_peak_memory():
    """Reset the high-water mark to the currently live allocation."""
    _meter.peak_bytes = _meter.current_bytes


def peak_memory_bytes() -> int:
    return _meter.peak_bytes


def live_memory_bytes() -> int:
    return _meter.current_bytes


def _count_macs(n):
    if _meter.counting_macs:
        _meter.macs += n


@contextmanager
def mac_counting():
    """Count multiply-accumulates of matmuls/convs executed in this block."""
    _meter.macs = 0
    _meter.counting_macs = True
    try:
        yield _meter
    finally:
        _meter.counting_macs = False


# ---------------------------------------------------------------------------
# tape


_TAPE_STACK: list["GradientTape"] = []


class GradientTape:
    """Append-only record of primitive ops, consumed once by backward().

    Forward evaluation order is a topological order of the graph, so the
    reverse sweep is simply the reversed entry list.
    """

    def __init__(self):
        self._entries = []
        self._consumed = False

    def __enter__(self):
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb):
        _TAPE_STACK.pop()
        return False

    def __len__(self):
        return len(self._entries)

    def backward(self, loss: "Tensor"):
        if loss.data.shape != ():
            raise ShapeError(f"backward requires a scalar loss, got shape {loss.shape}")
        if self._consumed:
            raise TapeError("tape already consumed by a previous backward()")
        self._consumed = True
        loss.grad = np.ones((), dtype=loss.data.dtype)
        for out, inputs, fn in reversed(self._entries):
            if out.grad is None:
                continue
            grads = fn(out.grad)
            for inp, g in zip(inputs, grads):
                if g is None or not inp.requires_grad:
                    continue
                inp.grad = g if inp.grad is None else inp.grad + g


def backward(loss: "Tensor"):
    """Populate grads of everything the scalar ``loss`` depends on."""
    if loss._tape is None:
        raise TapeError("loss was not recorded on a gradient tape")
    loss._tape.backward(loss)


def _record(out, inputs, fn):
    if _TAPE_STACK:
        tensors = [t for t in inputs if isinstance(t, Tensor)]
        if any(t.requires_grad for t in tensors):
            tape = _TAPE_STACK[-1]
            out.requires_grad = True
            out._tape = tape
            tape._entries.append((out, tensors, fn))
    return out


# ---------------------------------------------------------------------------
# tensor


class Tensor:
    """Dense n-d array of 32- or 64-bit floats, immutable by convention."""

    __slots__ = ("data", "requires_grad", "grad", "_tape", "__weakref__")

    def __init__(self, data, requires_grad=False, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = None
        self._tape = None
        _track(self, arr)

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self):
        return self.data.size

    def item(self):
        return self.data.item()

    def detach(self) -> "Tensor":
        return Tensor(self.data[...])  # view: shares storage, drops the tape

    def __repr__(self):
        return f"Tensor(shape={self.shape}, dtype={self.dtype.name}, requires_grad={self.requires_grad})"

    # operator sugar; scalars are accepted, arrays must match shapes exactly
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(_as_tensor(other, self.dtype), self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(_as_tensor(other, self.dtype), self)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, key):
        return index(self, key)


def _as_tensor(x, dtype):
    if isinstance(x, Tensor):
        return x
    if np.isscalar(x) or (isinstance(x, np.ndarray) and x.ndim == 0):
        return Tensor(np.asarray(x, dtype=dtype))
    raise TypeError(f"expected Tensor or scalar, got {type(x).__name__}")


def _result(arr, inputs, fn):
    return _record(Tensor(arr), inputs, fn)


def _check_elementwise(a, b, opname):
    """Identical shapes, or one operand scalar (0-d)."""
    if a.shape == b.shape or a.shape == () or b.shape == ():
        return
    raise ShapeError(f"{opname}: shapes {a.shape} and {b.shape} differ")


def _to_operand_shape(g, t):
    """Reduce a full-shape gradient for a scalar operand."""
    if t.shape == () and g.shape != ():
        return np.asarray(g.sum(), dtype=g.dtype)
    return g


# ---------------------------------------------------------------------------
# element-wise ops


def add(a, b):
    a = _as_tensor(a, getattr(b, "dtype", None) or DEFAULT_DTYPE)
    b = _as_tensor(b, a.dtype)
    _check_elementwise(a, b, "add")

    def fn(g):
        return _to_operand_shape(g, a), _to_operand_shape(g, b)

    return _result(a.data + b.data, (a, b), fn)


def sub(a, b):
    a = _as_tensor(a, getattr(b, "dtype", None) or DEFAULT_DTYPE)
    b = _as_tensor(b, a.dtype)
    _check_elementwise(a, b, "sub")

    def fn(g):
        return _to_operand_shape(g, a), _to_operand_shape(-g, b)

    return _result(a.data - b.data, (a, b), fn)


def mul(a, b):
    a = _as_tensor(a, getattr(b, "dtype", None) or DEFAULT_DTYPE)
    b = _as_tensor(b, a.dtype)
    _check_elementwise(a, b, "mul")
    ad, bd = a.data, b.data

    def fn(g):
        return _to_operand_shape(g * bd, a), _to_operand_shape(g * ad, b)

    return _result(ad * bd, (a, b), fn)


def div(a, b):
    a = _as_tensor(a, getattr(b, "dtype", None) or DEFAULT_DTYPE)
    b = _as_tensor(b, a.dtype)
    _check_elementwise(a, b, "div")
    ad, bd = a.data, b.data
    out = ad / bd

    def fn(g):
        return (
            _to_operand_shape(g / bd, a),
            _to_operand_shape(-g * ad / (bd * bd), b),
        )

    return _result(out, (a, b), fn)


def neg(t):
    return _result(-t.data, (t,), lambda g: (-g,))


def relu(t):
    mask = t.data > 0

    def fn(g):
        return (g * mask,)

    return _result(np.where(mask, t.data, 0), (t,), fn)


def exp(t):
    out = np.exp(t.data)

    def fn(g):
        return (g * out,)

    return _result(out, (t,), fn)


def log(t):
    """Natural log. Derivative is taken as 0 where the input is 0 (the
    clamp applied downstream zeroes those gradients anyway)."""
    with np.errstate(divide="ignore"):
        out = np.log(t.data)
    td = t.data

    def fn(g):
        return (np.divide(g, td, out=np.zeros_like(g), where=td != 0),)

    return _result(out, (t,), fn)


def clamp(t, lo, hi):
    inside = (t.data > lo) & (t.data < hi)

    def fn(g):
        return (g * inside,)

    return _result(np.clip(t.data, lo, hi), (t,), fn)


def prelu(t, slope):
    """PReLU with a single learnable slope (0-d tensor)."""
    if slope.shape != ():
        raise ShapeError(f"prelu slope must be scalar, got shape {slope.shape}")
    pos = t.data > 0
    a = slope.data

    def fn(g):
        gt = g * np.where(pos, 1.0, a)
        ga = np.asarray((g * np.where(pos, 0.0, t.data)).sum(), dtype=g.dtype)
        return gt, ga

    return _result(np.where(pos, t.data, a * t.data), (t, slope), fn)


# ---------------------------------------------------------------------------
# reductions / normalization


def sum_(t, axis=None, keepdims=False):
    out = t.data.sum(axis=axis, keepdims=keepdims)
    shape = t.shape

    def fn(g):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(ge, shape).copy(),)

    return _result(out, (t,), fn)


def reduce_mean(t, axis=None, keepdims=False):
    """Arithmetic mean along ``axis`` (dropped unless keepdims)."""
    if axis is not None and t.shape[axis] == 0:
        raise DegenerateInputError(f"mean over zero-extent axis {axis} of shape {t.shape}")
    if axis is None and t.size == 0:
        raise DegenerateInputError("mean of an empty tensor")
    n = t.size if axis is None else t.shape[axis]
    out = t.data.mean(axis=axis, keepdims=keepdims)
    shape = t.shape

    def fn(g):
        if axis is None:
            return (np.broadcast_to(g / n, shape).copy(),)
        ge = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(ge / n, shape).copy(),)

    return _result(out, (t,), fn)


def softmax(t, axis):
    """Numerically-stabilized softmax along ``axis``."""
    z = t.data - t.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def fn(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return _result(out, (t,), fn)


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalize over the last axis, then scale/shift by (gamma, beta)."""
    F = x.shape[-1]
    if gamma.shape != (F,) or beta.shape != (F,):
        raise ShapeError(
            f"layer_norm params must have shape ({F},), got {gamma.shape} and {beta.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data
    reduce_axes = tuple(range(x.ndim - 1))

    def fn(g):
        ggamma = (g * xhat).sum(axis=reduce_axes)
        gbeta = g.sum(axis=reduce_axes)
        gxh = g * gamma.data
        gx = inv * (
            gxh
            - gxh.mean(axis=-1, keepdims=True)
            - xhat * (gxh * xhat).mean(axis=-1, keepdims=True)
        )
        return gx, ggamma, gbeta

    return _result(out, (x, gamma, beta), fn)


# ---------------------------------------------------------------------------
# linear algebra


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product.

    Supported shapes: (m,k)@(k,n); batched (..B,m,k)@(..B,k,n) with equal
    batch dims; and batched-left (..B,m,k)@(k,n) against shared weights.
    """
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul needs >=2-d operands, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul inner dims disagree: {a.shape} vs {b.shape}")
    ad, bd = a.data, b.data
    k = a.shape[-1]
    n = b.shape[-1]
    if b.ndim == 2:
        rows = a.size // k
        _count_macs(rows * k * n)
        out = ad @ bd

        def fn(g):
            _count_macs(rows * n * k + k * rows * n)
            ga = g @ bd.T
            gb = ad.reshape(-1, k).T @ g.reshape(-1, n)
            return ga, gb

    else:
        if a.shape[:-2] != b.shape[:-2]:
            raise ShapeError(f"matmul batch dims disagree: {a.shape} vs {b.shape}")
        m = a.shape[-2]
        batch = a.size // (m * k)
        _count_macs(batch * m * k * n)
        out = np.matmul(ad, bd)

        def fn(g):
            _count_macs(2 * batch * m * k * n)
            ga = np.matmul(g, bd.swapaxes(-1, -2))
            gb = np.matmul(ad.swapaxes(-1, -2), g)
            return ga, gb

    return _result(out, (a, b), fn)


def broadcast_add(a: Tensor, b: Tensor) -> Tensor:
    """Add ``b`` to ``a`` with ``b`` replicated along a's leading axes.

    The one documented array broadcast: b.shape must equal the trailing
    axes of a.shape.
    """
    if b.ndim > a.ndim or a.shape[a.ndim - b.ndim :] != b.shape:
        raise ShapeError(
            f"broadcast_add: {b.shape} does not match trailing axes of {a.shape}"
        )
    lead = tuple(range(a.ndim - b.ndim))

    def fn(g):
        return g, (g.sum(axis=lead) if lead else g)

    return _result(a.data + b.data, (a, b), fn)


# ---------------------------------------------------------------------------
# shape manipulation


def reshape(t, shape):
    old = t.shape

    def fn(g):
        return (g.reshape(old),)

    return _result(t.data.reshape(shape), (t,), fn)


def permute(t, axes):
    axes = tuple(axes)
    inverse = tuple(np.argsort(axes))

    def fn(g):
        return (g.transpose(inverse),)

    return _result(t.data.transpose(axes), (t,), fn)


def index(t, key):
    """Basic (slice/int) indexing; gradient scatters back into zeros."""
    shape = t.shape
    out = t.data[key]

    def fn(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[key] = g
        return (full,)

    return _result(out, (t,), fn)


def stack(tensors, axis=0):
    tensors = list(tensors)
    first = tensors[0].shape
    for t in tensors[1:]:
        if t.shape != first:
            raise ShapeError(f"stack: shapes {first} and {t.shape} differ")

    def fn(g):
        return tuple(np.take(g, i, axis=axis) for i in range(len(tensors)))

    return _result(np.stack([t.data for t in tensors], axis=axis), tuple(tensors), fn)


def pad_tail(t, n, axis=0):
    """Append ``n`` zeros along ``axis``."""
    if n < 0:
        raise ShapeError(f"pad_tail: negative pad {n}")
    if n == 0:
        # still a real op so the tape stays uniform
        return index(t, tuple(slice(None) for _ in range(t.ndim)))
    width = [(0, 0)] * t.ndim
    width[axis] = (0, n)
    key = tuple(
        slice(0, t.shape[ax]) if ax == axis else slice(None) for ax in range(t.ndim)
    )

    def fn(g):
        return (g[key],)

    return _result(np.pad(t.data, width), (t,), fn)


# ---------------------------------------------------------------------------
# sliding windows (compiled kernels underneath)


def gather_windows(t: Tensor, K: int, S: int) -> Tensor:
    """(T, F) -> (Nw, K, F): every full length-K window at stride S."""
    if t.ndim != 2:
        raise ShapeError(f"gather_windows expects (T, F), got {t.shape}")
    T = t.shape[0]
    if T < K:
        raise ShapeError(f"input length {T} shorter than window {K}")
    out = kernels.gather_windows(t.data, K, S)

    def fn(g):
        return (kernels.scatter_windows(g, S, T),)

    return _result(out, (t,), fn)


def scatter_windows(t: Tensor, S: int, T: int) -> Tensor:
    """(Nw, K, F) -> (T, F) overlap-add; adjoint of gather_windows."""
    if t.ndim != 3:
        raise ShapeError(f"scatter_windows expects (Nw, K, F), got {t.shape}")
    K = t.shape[1]
    out = kernels.scatter_windows(t.data, S, T)

    def fn(g):
        return (kernels.gather_windows(g, K, S),)

    return _result(out, (t,), fn)
