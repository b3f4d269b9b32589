"""Dense float64 tensors with reverse-mode automatic differentiation.

The graph is built eagerly by the arithmetic ops below and discarded after
each ``backward`` call; every training step rebuilds it from scratch.
Values and gradients are float64 throughout (file formats downcast to
float32 at the serialization boundary). Any op that produces a NaN or Inf
raises ``NonFiniteError`` immediately rather than letting it propagate.

Tensors are treated as immutable within a forward pass; only the optimizer
mutates parameter values, between passes.
"""

from __future__ import annotations

import math
from typing import Callable, Sequence

import numpy as np

from .errors import InvalidArgumentError, NonFiniteError

Array = np.ndarray


class _GradMode:
    enabled = True


class no_grad:
    """Context manager that disables graph construction for forward passes."""

    def __enter__(self):
        self._prev = _GradMode.enabled
        _GradMode.enabled = False
        return self

    def __exit__(self, *exc):
        _GradMode.enabled = self._prev
        return False


def _check_finite(arr: Array, what: str) -> Array:
    # sum() is NaN or Inf iff the array holds a non-finite entry (finite
    # overflow would need magnitudes ~1e308); much cheaper than isfinite().all()
    if not math.isfinite(float(arr.sum())):
        raise NonFiniteError(f"non-finite values in {what}")
    return arr


def _unbroadcast(grad: Array, shape: tuple[int, ...]) -> Array:
    """Sum ``grad`` down to ``shape``, undoing numpy broadcasting."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_prev")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.asarray(data, dtype=np.float64)
        self.data = _check_finite(arr, "tensor values")
        self.grad: Array | None = None
        self.requires_grad = bool(requires_grad)
        self._backward: Callable[[], None] | None = None
        self._prev: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # -- graph plumbing -----------------------------------------------------

    def _accumulate(self, grad: Array) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += grad

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def item(self) -> float:
        if self.data.size != 1:
            raise InvalidArgumentError("item() on non-scalar tensor")
        return float(self.data.reshape(()))

    # -- arithmetic ---------------------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = _as_tensor(other)
        out = _make(self.data + other.data, (self, other))
        if out._prev:

            def _bw():
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad, self.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(out.grad, other.shape))

            out._backward = _bw
        return out

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        out = _make(-self.data, (self,))
        if out._prev:

            def _bw():
                self._accumulate(-out.grad)

            out._backward = _bw
        return out

    def __sub__(self, other) -> "Tensor":
        return self + (-_as_tensor(other))

    def __rsub__(self, other) -> "Tensor":
        return _as_tensor(other) + (-self)

    def __mul__(self, other) -> "Tensor":
        other = _as_tensor(other)
        out = _make(self.data * other.data, (self, other))
        if out._prev:

            def _bw():
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad * other.data, self.shape))
                if other.requires_grad:
                    other._accumulate(_unbroadcast(out.grad * self.data, other.shape))

            out._backward = _bw
        return out

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = _as_tensor(other)
        out = _make(self.data / other.data, (self, other))
        if out._prev:

            def _bw():
                if self.requires_grad:
                    self._accumulate(_unbroadcast(out.grad / other.data, self.shape))
                if other.requires_grad:
                    other._accumulate(
                        _unbroadcast(-out.grad * self.data / other.data**2, other.shape)
                    )

            out._backward = _bw
        return out

    def __matmul__(self, other) -> "Tensor":
        other = _as_tensor(other)
        if self.data.ndim != 2 or other.data.ndim != 2:
            raise InvalidArgumentError("matmul expects rank-2 tensors")
        out = _make(self.data @ other.data, (self, other))
        if out._prev:

            def _bw():
                if self.requires_grad:
                    self._accumulate(out.grad @ other.data.T)
                if other.requires_grad:
                    other._accumulate(self.data.T @ out.grad)

            out._backward = _bw
        return out

    def __pow__(self, exponent: float) -> "Tensor":
        exponent = float(exponent)
        out = _make(self.data**exponent, (self,))
        if out._prev:

            def _bw():
                self._accumulate(out.grad * exponent * self.data ** (exponent - 1.0))

            out._backward = _bw
        return out

    # -- elementwise functions ------------------------------------------------

    def tanh(self) -> "Tensor":
        out = _make(np.tanh(self.data), (self,))
        if out._prev:

            def _bw():
                self._accumulate(out.grad * (1.0 - out.data**2))

            out._backward = _bw
        return out

    def sigmoid(self) -> "Tensor":
        out = _make(1.0 / (1.0 + np.exp(-self.data)), (self,))
        if out._prev:

            def _bw():
                self._accumulate(out.grad * out.data * (1.0 - out.data))

            out._backward = _bw
        return out

    def exp(self) -> "Tensor":
        with np.errstate(over="ignore"):  # overflow becomes NonFiniteError below
            data = np.exp(self.data)
        out = _make(data, (self,))
        if out._prev:

            def _bw():
                self._accumulate(out.grad * out.data)

            out._backward = _bw
        return out

    def log(self) -> "Tensor":
        if np.any(self.data <= 0.0):
            raise InvalidArgumentError("log of non-positive value")
        out = _make(np.log(self.data), (self,))
        if out._prev:

            def _bw():
                self._accumulate(out.grad / self.data)

            out._backward = _bw
        return out

    def sqrt(self) -> "Tensor":
        return self**0.5

    def clip_min(self, floor: float) -> "Tensor":
        """max(x, floor); gradient passes only where x > floor."""
        out = _make(np.maximum(self.data, floor), (self,))
        if out._prev:
            mask = self.data > floor

            def _bw():
                self._accumulate(out.grad * mask)

            out._backward = _bw
        return out

    # -- shape ops ------------------------------------------------------------

    def reshape(self, *shape: int) -> "Tensor":
        out = _make(self.data.reshape(shape), (self,))
        if out._prev:

            def _bw():
                self._accumulate(out.grad.reshape(self.shape))

            out._backward = _bw
        return out

    def transpose(self) -> "Tensor":
        if self.data.ndim != 2:
            raise InvalidArgumentError("transpose expects a rank-2 tensor")
        out = _make(self.data.T.copy(), (self,))
        if out._prev:

            def _bw():
                self._accumulate(out.grad.T)

            out._backward = _bw
        return out

    def narrow(self, start: int, stop: int) -> "Tensor":
        """Rows [start, stop) of a rank-1/2 tensor."""
        if not 0 <= start < stop <= self.shape[0]:
            raise InvalidArgumentError("narrow bounds out of range")
        out = _make(self.data[start:stop].copy(), (self,))
        if out._prev:

            def _bw():
                if self.grad is None:
                    self.grad = np.zeros_like(self.data)
                self.grad[start:stop] += out.grad

            out._backward = _bw
        return out

    def sum(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        out = _make(self.data.sum(axis=axis, keepdims=keepdims), (self,))
        if out._prev:

            def _bw():
                g = out.grad
                if axis is not None and not keepdims:
                    g = np.expand_dims(g, axis)
                self._accumulate(np.broadcast_to(g, self.shape).copy())

            out._backward = _bw
        return out

    def mean(self, axis: int | None = None, keepdims: bool = False) -> "Tensor":
        count = self.data.size if axis is None else self.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def pick(self, indices: Sequence[int]) -> "Tensor":
        """out[i] = self[i, indices[i]] for a rank-2 tensor."""
        idx = np.asarray(indices, dtype=np.int64)
        if self.data.ndim != 2 or idx.ndim != 1 or idx.shape[0] != self.shape[0]:
            raise InvalidArgumentError("pick expects (B,N) tensor and B indices")
        if np.any(idx < 0) or np.any(idx >= self.shape[1]):
            raise InvalidArgumentError("pick index out of range")
        rows = np.arange(self.shape[0])
        out = _make(self.data[rows, idx].copy(), (self,))
        if out._prev:

            def _bw():
                if self.grad is None:
                    self.grad = np.zeros_like(self.data)
                np.add.at(self.grad, (rows, idx), out.grad)

            out._backward = _bw
        return out


def _as_tensor(value) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(np.asarray(value, dtype=np.float64))


def _make(data: Array, parents: tuple[Tensor, ...]) -> Tensor:
    out = Tensor.__new__(Tensor)
    out.data = _check_finite(np.asarray(data, dtype=np.float64), "op result")
    out.grad = None
    out._backward = None
    track = _GradMode.enabled and any(p.requires_grad for p in parents)
    out.requires_grad = track
    out._prev = parents if track else ()
    return out


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    """Concatenate along ``axis``; gradient splits back to each input."""
    if not tensors:
        raise InvalidArgumentError("concat of empty sequence")
    parents = tuple(tensors)
    out = _make(np.concatenate([t.data for t in parents], axis=axis), parents)
    if out._prev:
        sizes = [t.shape[axis] for t in parents]
        offsets = np.cumsum([0] + sizes)

        def _bw():
            for t, lo, hi in zip(parents, offsets[:-1], offsets[1:]):
                if t.requires_grad:
                    sl = [slice(None)] * out.grad.ndim
                    sl[axis] = slice(lo, hi)
                    t._accumulate(out.grad[tuple(sl)])

        out._backward = _bw
    return out


def stack_rows(tensors: Sequence[Tensor]) -> Tensor:
    """Stack rank-1 tensors of equal length into a rank-2 tensor."""
    return concat([t.reshape(1, -1) if t.data.ndim == 1 else t for t in tensors], axis=0)


def backward(loss: Tensor) -> None:
    """Populate ``grad`` on every reachable tensor with requires_grad.

    ``loss`` must be a scalar. Gradients accumulate, so callers zero the
    leaves (ParamStore.zero_grads) between steps.
    """
    if loss.data.size != 1:
        raise InvalidArgumentError("backward expects a scalar loss")

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
        for parent in node._prev:
            if id(parent) not in seen:
                stack.append((parent, False))

    loss.grad = np.ones_like(loss.data)
    for node in reversed(order):
        if node._backward is not None:
            node._backward()
    for node in order:
        if node.grad is not None:
            _check_finite(node.grad, "gradient")


# -- composite operations used by every loss ----------------------------------


def softmax_rows(logits: Tensor, temperature: float = 1.0) -> Tensor:
    """Row-wise exp(l/T)/sum with max-subtraction; exact under uniform shifts."""
    if temperature <= 0.0:
        raise InvalidArgumentError("softmax temperature must be positive")
    shift = Tensor(logits.data.max(axis=-1, keepdims=True))
    scaled = (logits - shift) * (1.0 / temperature)
    e = scaled.exp()
    return e / e.sum(axis=-1, keepdims=True)


def normalize_rows(x: Tensor, counter: "ZeroNormCounter | None" = None) -> Tensor:
    """Scale each row to unit norm; all-zero rows stay zero (and are counted)."""
    norms = (x * x).sum(axis=-1, keepdims=True).sqrt()
    if counter is not None:
        zeros = int((norms.data < 1e-30).sum())
        if zeros:
            counter.add(zeros)
    return x / norms.clip_min(1e-30)


def cosine_rows(a: Tensor, b: Tensor, counter: "ZeroNormCounter | None" = None) -> Tensor:
    """(A rows) x (B rows) cosine-similarity matrix."""
    return normalize_rows(a, counter) @ normalize_rows(b, counter).transpose()


PROB_FLOOR = 1e-12


def cross_entropy_rows(probs: Tensor, labels: Sequence[int]) -> Tensor:
    """Mean over rows of -log p[label], with p clamped below at 1e-12."""
    return -(probs.pick(labels).clip_min(PROB_FLOOR).log().mean())


def kl_rows(p: Tensor, q: Tensor) -> Tensor:
    """Mean over rows of sum_i p_i (log p_i - log q_i), clamped at 1e-12."""
    logs = p.clip_min(PROB_FLOOR).log() - q.clip_min(PROB_FLOOR).log()
    return (p * logs).sum(axis=-1).mean()


class ZeroNormCounter:
    """Diagnostic tally of zero-norm vectors seen by cosine similarity."""

    def __init__(self):
        import threading

        self._lock = threading.Lock()
        self.count = 0

    def add(self, n: int = 1) -> None:
        with self._lock:
            self.count += n

    def reset(self) -> None:
        with self._lock:
            self.count = 0


zero_norm_events = ZeroNormCounter()
