"""Reverse-mode automatic differentiation over numpy arrays.

A Tensor wraps an ndarray and records the ops that produced it; calling
``backward()`` on a scalar loss accumulates gradients into every reachable
Parameter. Parameters keep their gradient accumulator across calls until
``zero_grad``. Ops run dtype-generic so the same graph code serves float32
training and float64 verification. Inside ``no_grad()`` no graph is built.
"""

from __future__ import annotations

import contextlib
import threading

import numpy as np

# grad mode is per-thread so concurrent no_grad generation (e.g. parallel
# chat sessions) cannot switch training threads into inference mode
_grad_state = threading.local()


def _grad_enabled() -> bool:
    return getattr(_grad_state, "enabled", True)


@contextlib.contextmanager
def no_grad():
    """Disable graph construction (forward evaluation only) on this thread."""
    prev = _grad_enabled()
    _grad_state.enabled = False
    try:
        yield
    finally:
        _grad_state.enabled = prev


class Tensor:
    """An ndarray plus the bookkeeping needed for reverse-mode backprop."""

    __slots__ = ("data", "grad", "requires_grad", "name", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.name = name
        self._parents: tuple[Tensor, ...] = ()
        self._backward = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if not (self.requires_grad or self._parents):
            return  # constant: no gradient needed
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def backward(self) -> None:
        """Backpropagate from a scalar; accumulates into .grad of all inputs."""
        if self.data.size != 1:
            raise ValueError(f"backward() requires a scalar, got shape {self.shape}")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, processed = stack.pop()
            if processed:
                topo.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if id(p) not in seen:
                    stack.append((p, False))
        self._accumulate(np.ones_like(self.data))
        for node in reversed(topo):
            if node._backward is not None and node.grad is not None:
                node._backward(node.grad)
            if node._parents and not isinstance(node, Parameter):
                node.grad = None  # free intermediate grads as we go

    # operator sugar; all ops live at module level
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __repr__(self):
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"


class Parameter(Tensor):
    """Trainable tensor; gradients accumulate until zero_grad()."""

    def __init__(self, data, name: str):
        super().__init__(np.asarray(data), requires_grad=True, name=name)

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.shape}, dtype={self.dtype})"


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    arr = np.asarray(x)
    if dtype is not None:
        arr = arr.astype(dtype, copy=False)
    return Tensor(arr)


def _make(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
    out = Tensor(data)
    if _grad_enabled() and any(p.requires_grad or p._parents for p in parents):
        out.requires_grad = True
        out._parents = parents
        out._backward = backward
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _is_pyscalar(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool)


def add(a, b) -> Tensor:
    # python scalars stay scalars so float32 graphs are not upcast
    if _is_pyscalar(b):
        a = as_tensor(a)
        out = a.data + b

        def backward(g):
            a._accumulate(g)

        return _make(out, (a,), backward)
    if _is_pyscalar(a):
        return add(b, a)
    a, b = as_tensor(a), as_tensor(b)
    out = a.data + b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(g, b.data.shape))

    return _make(out, (a, b), backward)


def sub(a, b) -> Tensor:
    if _is_pyscalar(b):
        return add(a, -b)
    if _is_pyscalar(a):
        b = as_tensor(b)
        out = a - b.data

        def backward(g):
            b._accumulate(-g)

        return _make(out, (b,), backward)
    a, b = as_tensor(a), as_tensor(b)
    out = a.data - b.data

    def backward(g):
        a._accumulate(_unbroadcast(g, a.data.shape))
        b._accumulate(_unbroadcast(-g, b.data.shape))

    return _make(out, (a, b), backward)


def mul(a, b) -> Tensor:
    if _is_pyscalar(b):
        a = as_tensor(a)
        out = a.data * b

        def backward(g):
            a._accumulate(g * b)

        return _make(out, (a,), backward)
    if _is_pyscalar(a):
        return mul(b, a)
    a, b = as_tensor(a), as_tensor(b)
    out = a.data * b.data

    def backward(g):
        a._accumulate(_unbroadcast(g * b.data, a.data.shape))
        b._accumulate(_unbroadcast(g * a.data, b.data.shape))

    return _make(out, (a, b), backward)


def div(a, b) -> Tensor:
    if _is_pyscalar(b):
        return mul(a, 1.0 / b)
    if _is_pyscalar(a):
        b = as_tensor(b)
        out = a / b.data

        def backward(g):
            b._accumulate(-g * a / (b.data * b.data))

        return _make(out, (b,), backward)
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def backward(g):
        a._accumulate(_unbroadcast(g / b.data, a.data.shape))
        b._accumulate(_unbroadcast(-g * a.data / (b.data * b.data), b.data.shape))

    return _make(out, (a, b), backward)


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.data.ndim != 2 or b.data.ndim != 2:
        raise ValueError(f"matmul expects 2-D operands, got {a.shape} @ {b.shape}")
    out = a.data @ b.data

    def backward(g):
        a._accumulate(g @ b.data.T)
        b._accumulate(a.data.T @ g)

    return _make(out, (a, b), backward)


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)

    def backward(g):
        a._accumulate(g * out)

    return _make(out, (a,), backward)


def log(a) -> Tensor:
    a = as_tensor(a)
    out = np.log(a.data)

    def backward(g):
        a._accumulate(g / a.data)

    return _make(out, (a,), backward)


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)

    def backward(g):
        a._accumulate(g * (1.0 - out * out))

    return _make(out, (a,), backward)


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    # stable logistic: exp never sees a large positive argument
    x = a.data
    out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))

    def backward(g):
        a._accumulate(g * out * (1.0 - out))

    return _make(out, (a,), backward)


def softplus(a) -> Tensor:
    """ln(1+e^x), overflow-safe, clamped to stay strictly positive."""
    a = as_tensor(a)
    out = np.logaddexp(np.zeros((), dtype=a.data.dtype), a.data)
    out = np.maximum(out, np.finfo(out.dtype).tiny)

    def backward(g):
        x = a.data
        s = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))), np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        a._accumulate(g * s)

    return _make(out, (a,), backward)


def tsum(a, axis=None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is None:
            a._accumulate(np.broadcast_to(g, a.data.shape).copy())
        else:
            ge = g if keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(ge, a.data.shape).copy())

    return _make(out, (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    offsets = np.cumsum([0] + sizes)

    def backward(g):
        for t, lo, hi in zip(tensors, offsets[:-1], offsets[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            t._accumulate(g[tuple(idx)])

    return _make(out, tuple(tensors), backward)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    out = a.data.reshape(shape)

    def backward(g):
        a._accumulate(g.reshape(a.data.shape))

    return _make(out, (a,), backward)


def take_rows(a, index) -> Tensor:
    """Gather rows along axis 0; duplicate indices accumulate on backward."""
    a = as_tensor(a)
    index = np.asarray(index)
    out = a.data[index]

    def backward(g):
        if not (a.requires_grad or a._parents):
            return
        if a.grad is None:
            a.grad = np.zeros_like(a.data)
        np.add.at(a.grad, index, g)

    return _make(out, (a,), backward)


def masked_select(mask: np.ndarray, a, b) -> Tensor:
    """Rowwise select: out = a where mask==1 else b (bit-exact passthrough).

    mask is a constant 0/1 column (N, 1) broadcast against (N, d) operands.
    """
    a, b = as_tensor(a), as_tensor(b)
    keep = mask.astype(bool)
    out = np.where(keep, a.data, b.data)

    def backward(g):
        zero = np.zeros((), dtype=g.dtype)
        a._accumulate(_unbroadcast(np.where(keep, g, zero), a.data.shape))
        b._accumulate(_unbroadcast(np.where(keep, zero, g), b.data.shape))

    return _make(out, (a, b), backward)


def cross_entropy_logits(logits, targets, weights) -> Tensor:
    """Per-row weighted negative log-likelihood of integer targets.

    logits (N, V), targets (N,) int, weights (N,) -> (N,) with
    out_i = -weights_i * log softmax(logits_i)[targets_i].
    """
    logits = as_tensor(logits)
    targets = np.asarray(targets)
    weights = np.asarray(weights, dtype=logits.data.dtype)
    x = logits.data
    xmax = x.max(axis=1, keepdims=True)
    lse = xmax[:, 0] + np.log(np.exp(x - xmax).sum(axis=1))
    rows = np.arange(x.shape[0])
    logp_target = x[rows, targets] - lse
    out = -weights * logp_target

    def backward(g):
        softmax = np.exp(x - xmax)
        softmax /= softmax.sum(axis=1, keepdims=True)
        softmax[rows, targets] -= 1.0
        logits._accumulate(softmax * (g * weights)[:, None])

    return _make(out, (logits,), backward)
