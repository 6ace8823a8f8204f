"""Dense float tensors with reverse-mode gradients on an explicit tape.

Forward math is numpy; every differentiable op optionally records a backward
closure on the active tape. With no tape active the ops are plain numpy
pipelines, which is the inference fast path. 32-bit floats are the default;
float64 inputs are respected end to end (used to tighten gradient checks).
"""

from __future__ import annotations

import threading
from typing import Callable, Optional, Sequence

import numpy as np

DEFAULT_DTYPE = np.float32


class TensorError(ValueError):
    pass


class ShapeMismatchError(TensorError):
    pass


class NonScalarLossError(TensorError):
    pass


class Tensor:
    """Shape + row-major float data, with an optional gradient buffer.

    Tensors flagged requires_grad keep a zero-initialized gradient buffer so
    that parameters untouched by a loss still report exact zeros. Gradients
    accumulate additively across backward passes until zero_grad().
    """

    __slots__ = ("data", "grad", "requires_grad", "name")

    def __init__(self, data, requires_grad: bool = False, name: Optional[str] = None, dtype=None):
        arr = np.asarray(data)
        if dtype is not None:
            arr = arr.astype(dtype, copy=False)
        elif arr.dtype not in (np.float32, np.float64):
            arr = arr.astype(DEFAULT_DTYPE)
        self.data = arr
        self.requires_grad = requires_grad
        self.grad = np.zeros_like(arr) if requires_grad else None
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        if self.grad is not None:
            self.grad.fill(0.0)

    def item(self) -> float:
        return float(self.data)

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.data.dtype}{tag})"


_state = threading.local()


def _active_tape() -> Optional["Tape"]:
    return getattr(_state, "tape", None)


class Tape:
    """Ordered record of executed differentiable ops for one forward pass.

    backward() seeds d(loss)=1 and replays the records in exact reverse
    execution order, accumulating gradients additively. A tape is confined to
    the thread that opened it.
    """

    def __init__(self):
        self._records: list[Callable[[], None]] = []

    def __enter__(self) -> "Tape":
        if _active_tape() is not None:
            raise TensorError("a tape is already active on this thread")
        _state.tape = self
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _state.tape = None

    def record(self, backward_fn: Callable[[], None]) -> None:
        self._records.append(backward_fn)

    def __len__(self) -> int:
        return len(self._records)

    def backward(self, loss: Tensor) -> None:
        if loss.data.ndim != 0:
            raise NonScalarLossError(f"loss must be a scalar, got shape {loss.shape}")
        _ensure_grad(loss)
        loss.grad += np.asarray(1.0, dtype=loss.dtype)
        for fn in reversed(self._records):
            fn()


def _ensure_grad(t: Tensor) -> np.ndarray:
    if t.grad is None:
        t.grad = np.zeros_like(t.data)
    return t.grad


def _out(data: np.ndarray) -> Tensor:
    return Tensor(data, dtype=data.dtype)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum grad over axes that were broadcast to reach grad's shape."""
    extra = grad.ndim - len(shape)
    if extra:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product; 2-D, or stacked with identical leading dimensions."""
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeMismatchError(f"matmul needs >=2-D operands, got {a.shape} @ {b.shape}")
    if a.ndim != b.ndim or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise ShapeMismatchError(f"incompatible matmul shapes {a.shape} @ {b.shape}")
    out = _out(a.data @ b.data)
    tape = _active_tape()
    if tape is not None:
        def backward(a=a, b=b, out=out):
            g = out.grad
            if g is None:
                return
            _ensure_grad(a)
            _ensure_grad(b)
            a.grad += g @ b.data.swapaxes(-1, -2)
            b.grad += a.data.swapaxes(-1, -2) @ g
        tape.record(backward)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    """Broadcasting addition; gradients are summed back over broadcast axes."""
    try:
        out = _out(a.data + b.data)
    except ValueError as e:
        raise ShapeMismatchError(f"cannot add {a.shape} and {b.shape}") from e
    tape = _active_tape()
    if tape is not None:
        def backward(a=a, b=b, out=out):
            g = out.grad
            if g is None:
                return
            _ensure_grad(a)
            _ensure_grad(b)
            a.grad += _unbroadcast(g, a.shape)
            b.grad += _unbroadcast(g, b.shape)
        tape.record(backward)
    return out


def add_const(a: Tensor, c) -> Tensor:
    """Add a non-learnable array or scalar (gradient passes through a only)."""
    out = _out(a.data + np.asarray(c, dtype=a.dtype))
    tape = _active_tape()
    if tape is not None:
        def backward(a=a, out=out):
            g = out.grad
            if g is None:
                return
            _ensure_grad(a)
            a.grad += _unbroadcast(g, a.shape)
        tape.record(backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    try:
        out = _out(a.data * b.data)
    except ValueError as e:
        raise ShapeMismatchError(f"cannot multiply {a.shape} and {b.shape}") from e
    tape = _active_tape()
    if tape is not None:
        def backward(a=a, b=b, out=out):
            g = out.grad
            if g is None:
                return
            _ensure_grad(a)
            _ensure_grad(b)
            a.grad += _unbroadcast(g * b.data, a.shape)
            b.grad += _unbroadcast(g * a.data, b.shape)
        tape.record(backward)
    return out


def scale(a: Tensor, factor: float) -> Tensor:
    f = np.asarray(factor, dtype=a.dtype)
    out = _out(a.data * f)
    tape = _active_tape()
    if tape is not None:
        def backward(a=a, out=out, f=f):
            g = out.grad
            if g is None:
                return
            _ensure_grad(a)
            a.grad += g * f
        tape.record(backward)
    return out


_GELU_C = 0.7978845608028654  # sqrt(2/pi)
_GELU_A = 0.044715


def gelu(x: Tensor) -> Tensor:
    """tanh-approximation GELU: 0.5*x*(1 + tanh(c*(x + 0.044715*x^3)))."""
    xd = x.data
    c = np.asarray(_GELU_C, dtype=xd.dtype)
    a3 = np.asarray(_GELU_A, dtype=xd.dtype)
    inner = c * (xd + a3 * xd * xd * xd)
    t = np.tanh(inner)
    out = _out(np.asarray(0.5, dtype=xd.dtype) * xd * (1.0 + t))
    tape = _active_tape()
    if tape is not None:
        def backward(x=x, out=out, t=t, xd=xd, c=c, a3=a3):
            g = out.grad
            if g is None:
                return
            _ensure_grad(x)
            sech2 = 1.0 - t * t
            du = c * (1.0 + 3.0 * a3 * xd * xd)
            x.grad += g * (0.5 * (1.0 + t) + 0.5 * xd * sech2 * du)
        tape.record(backward)
    return out


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize the last axis to zero mean / unit variance, then scale+shift.

    Variance is biased (denominator = feature count).
    """
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise ShapeMismatchError(
            f"layer_norm over {d} features needs gain/bias of shape ({d},), "
            f"got {gain.shape} and {bias.shape}"
        )
    xd = x.data
    mean = xd.mean(axis=-1, keepdims=True)
    centered = xd - mean
    var = np.mean(centered * centered, axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + np.asarray(eps, dtype=xd.dtype))
    xhat = centered * inv_std
    out = _out(xhat * gain.data + bias.data)
    tape = _active_tape()
    if tape is not None:
        def backward(x=x, gain=gain, bias=bias, out=out, xhat=xhat, inv_std=inv_std, d=d):
            g = out.grad
            if g is None:
                return
            _ensure_grad(x)
            _ensure_grad(gain)
            _ensure_grad(bias)
            sum_axes = tuple(range(g.ndim - 1))
            gain.grad += (g * xhat).sum(axis=sum_axes)
            bias.grad += g.sum(axis=sum_axes)
            dxhat = g * gain.data
            m1 = dxhat.mean(axis=-1, keepdims=True)
            m2 = (dxhat * xhat).mean(axis=-1, keepdims=True)
            x.grad += inv_std * (dxhat - m1 - xhat * m2)
        tape.record(backward)
    return out


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    xd = x.data
    shifted = xd - xd.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    y = e / e.sum(axis=axis, keepdims=True)
    out = _out(y)
    tape = _active_tape()
    if tape is not None:
        def backward(x=x, out=out, y=y, axis=axis):
            g = out.grad
            if g is None:
                return
            _ensure_grad(x)
            x.grad += y * (g - (g * y).sum(axis=axis, keepdims=True))
        tape.record(backward)
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; call only during training (rate 0 is a no-op)."""
    if rate <= 0.0:
        return x
    if not 0.0 < rate < 1.0:
        raise TensorError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    factor = np.asarray(1.0 / (1.0 - rate), dtype=x.dtype)
    out = _out(x.data * keep * factor)
    tape = _active_tape()
    if tape is not None:
        def backward(x=x, out=out, keep=keep, factor=factor):
            g = out.grad
            if g is None:
                return
            _ensure_grad(x)
            x.grad += g * keep * factor
        tape.record(backward)
    return out


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Row gather; backward scatter-adds into the table gradient."""
    ids = np.asarray(ids)
    if ids.min(initial=0) < 0 or ids.max(initial=0) >= table.shape[0]:
        raise TensorError("embedding ids out of range")
    out = _out(table.data[ids])
    tape = _active_tape()
    if tape is not None:
        def backward(table=table, out=out, ids=ids):
            g = out.grad
            if g is None:
                return
            _ensure_grad(table)
            np.add.at(table.grad, ids.reshape(-1), g.reshape(-1, table.shape[1]))
        tape.record(backward)
    return out


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    out = _out(x.data.reshape(shape))
    tape = _active_tape()
    if tape is not None:
        def backward(x=x, out=out):
            g = out.grad
            if g is None:
                return
            _ensure_grad(x)
            x.grad += g.reshape(x.shape)
        tape.record(backward)
    return out


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    out = _out(np.ascontiguousarray(x.data.transpose(axes)))
    tape = _active_tape()
    if tape is not None:
        inverse = tuple(np.argsort(axes))
        def backward(x=x, out=out, inverse=inverse):
            g = out.grad
            if g is None:
                return
            _ensure_grad(x)
            x.grad += g.transpose(inverse)
        tape.record(backward)
    return out


def take(x: Tensor, index: int, axis: int) -> Tensor:
    """Select one slice along an axis (e.g. the position-0 vector)."""
    out = _out(np.take(x.data, index, axis=axis))
    tape = _active_tape()
    if tape is not None:
        def backward(x=x, out=out, index=index, axis=axis):
            g = out.grad
            if g is None:
                return
            _ensure_grad(x)
            sl = [slice(None)] * x.ndim
            sl[axis] = index
            x.grad[tuple(sl)] += g
        tape.record(backward)
    return out


def narrow(x: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice along one axis."""
    sl = [slice(None)] * x.ndim
    sl[axis] = slice(start, start + length)
    sl = tuple(sl)
    out = _out(x.data[sl])
    tape = _active_tape()
    if tape is not None:
        def backward(x=x, out=out, sl=sl):
            g = out.grad
            if g is None:
                return
            _ensure_grad(x)
            x.grad[sl] += g
        tape.record(backward)
    return out


def mean_all(x: Tensor) -> Tensor:
    out = _out(np.asarray(x.data.mean(), dtype=x.dtype))
    tape = _active_tape()
    if tape is not None:
        n = x.size
        def backward(x=x, out=out, n=n):
            g = out.grad
            if g is None:
                return
            _ensure_grad(x)
            x.grad += g / np.asarray(n, dtype=x.dtype)
        tape.record(backward)
    return out


def sum_all(x: Tensor) -> Tensor:
    out = _out(np.asarray(x.data.sum(), dtype=x.dtype))
    tape = _active_tape()
    if tape is not None:
        def backward(x=x, out=out):
            g = out.grad
            if g is None:
                return
            _ensure_grad(x)
            x.grad += g
        tape.record(backward)
    return out


def softmax_cross_entropy(logits: Tensor, targets) -> Tensor:
    """Mean cross-entropy of rows against integer targets (log-sum-exp form).

    logits: [batch, classes] (a single [classes] vector is treated as batch 1).
    Backward per row: (softmax(logits) - onehot(target)) / batch.
    """
    ld = logits.data
    if ld.ndim == 1:
        ld = ld[None, :]
    if ld.ndim != 2:
        raise ShapeMismatchError(f"logits must be 1-D or 2-D, got {logits.shape}")
    t = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    n, c = ld.shape
    if t.shape != (n,):
        raise ShapeMismatchError(f"targets shape {t.shape} does not match batch {n}")
    if t.min() < 0 or t.max() >= c:
        raise IndexError(f"target out of range for {c} classes: {t}")
    m = ld.max(axis=1, keepdims=True)
    e = np.exp(ld - m)
    se = e.sum(axis=1, keepdims=True)
    log_z = np.log(se) + m
    losses = log_z[:, 0] - ld[np.arange(n), t]
    out = _out(np.asarray(losses.mean(), dtype=ld.dtype))
    tape = _active_tape()
    if tape is not None:
        probs = e / se
        def backward(logits=logits, out=out, probs=probs, t=t, n=n):
            g = out.grad
            if g is None:
                return
            _ensure_grad(logits)
            d = probs.copy()
            d[np.arange(n), t] -= 1.0
            d *= g / n
            logits.grad += d.reshape(logits.shape)
        tape.record(backward)
    return out
