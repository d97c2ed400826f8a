"""Dense float64 tensors with a reverse-mode tape.

Every differentiable op is a `Function` subclass: `forward` works on raw
arrays, `backward` maps the output gradient to one gradient per input.
`Function.apply` wraps the result in a `Tensor` that remembers its creator,
which is the tape `backward()` walks in reverse topological order.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ShapeMismatch, TapeError

logger = logging.getLogger(__name__)

DTYPE = np.float64

_grad_enabled = True


@contextmanager
def no_grad() -> Iterator[None]:
    """Run ops without recording a tape."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Function:

    def __init__(self, *tensors: "Tensor"):
        self.tensors = tensors

    def forward(self, *arrays: np.ndarray, **kwargs) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs) -> "Tensor":
        func = cls(*tensors)
        out = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = _grad_enabled and any(t.requires_grad for t in tensors)
        return Tensor(out, requires_grad=requires_grad, creator=func if requires_grad else None)

    @staticmethod
    def unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
        while grad.ndim > len(shape):
            grad = grad.sum(axis=0)
        for dim, size in enumerate(shape):
            if size == 1 and grad.shape[dim] != 1:
                grad = grad.sum(axis=dim, keepdims=True)
        return grad


class Tensor:

    def __init__(
        self,
        data: Union[np.ndarray, Sequence, float],
        requires_grad: bool = False,
        creator: Optional[Function] = None,
        name: str = "",
        decay: bool = True,
    ):
        self.data = np.asarray(data, dtype=DTYPE)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self.creator = creator
        self.name = name
        # Excluded from L2 when False (activation thresholds and slopes)
        self.decay = decay

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}, name={self.name!r})"

    # ── ops ──

    def __add__(self, other) -> "Tensor":
        return Add.apply(self, _wrap(other))

    __radd__ = __add__

    def __mul__(self, other) -> "Tensor":
        return Mul.apply(self, _wrap(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        return Mul.apply(self, Tensor(-1.0))

    def __sub__(self, other) -> "Tensor":
        return Add.apply(self, -_wrap(other))

    def __matmul__(self, other) -> "Tensor":
        return MatMul.apply(self, _wrap(other))

    def sum(self) -> "Tensor":
        return Sum.apply(self)

    def reshape(self, *shape: int) -> "Tensor":
        return Reshape.apply(self, shape=shape)


def _wrap(value) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def backward(loss: Tensor) -> None:
    """Populate `.grad` on every leaf reachable from `loss`, then drop the tape."""
    if loss.data.size != 1:
        raise TapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    if loss.creator is None:
        raise TapeError("backward called on a tensor with no recorded tape")

    order: List[Tensor] = []
    seen = set()
    stack: List[Tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        if node.creator is not None:
            for parent in node.creator.tensors:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))

    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.creator is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        func = node.creator
        for parent, pg in zip(func.tensors, func.backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            pg = Function.unbroadcast(pg, parent.shape)
            grads[id(parent)] = grads[id(parent)] + pg if id(parent) in grads else pg
        node.creator = None


# ── Elementwise and linear algebra ────────────────────────

class Add(Function):

    def forward(self, x, y):
        return x + y

    def backward(self, grad):
        return grad, grad


class Mul(Function):

    def forward(self, x, y):
        self.x, self.y = x, y
        return x * y

    def backward(self, grad):
        return grad * self.y, grad * self.x


class MatMul(Function):

    def forward(self, x, w):
        self.x, self.w = x, w
        return x @ w

    def backward(self, grad):
        return grad @ self.w.T, self.x.T @ grad


class Sum(Function):

    def forward(self, x):
        self.shape = x.shape
        return np.asarray(x.sum())

    def backward(self, grad):
        return (np.broadcast_to(grad, self.shape).copy(),)


class Reshape(Function):

    def forward(self, x, shape):
        self.shape = x.shape
        return x.reshape(shape)

    def backward(self, grad):
        return (grad.reshape(self.shape),)


# ── Convolution and pooling ───────────────────────────────

class Conv2d(Function):
    """Cross-correlation on N×C×H×W with F×C×kh×kw weights."""

    def forward(self, x, w, b, stride: int = 1, padding: int = 0):
        self.stride, self.padding = stride, padding
        self.x_shape, self.w = x.shape, w
        kh, kw = w.shape[2:]
        xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
        self.xp_shape = xp.shape
        windows = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
        self.windows = windows
        out = np.einsum("nchwij,fcij->nfhw", windows, w, optimize=True)
        return out + b[None, :, None, None]

    def backward(self, grad):
        s, p = self.stride, self.padding
        kh, kw = self.w.shape[2:]
        ho, wo = grad.shape[2:]
        dw = np.einsum("nchwij,nfhw->fcij", self.windows, grad, optimize=True)
        db = grad.sum(axis=(0, 2, 3))
        dxp = np.zeros(self.xp_shape, dtype=DTYPE)
        for i in range(kh):
            for j in range(kw):
                dxp[:, :, i:i + s * ho:s, j:j + s * wo:s] += np.einsum(
                    "nfhw,fc->nchw", grad, self.w[:, :, i, j], optimize=True
                )
        h, w = self.x_shape[2:]
        dx = dxp[:, :, p:p + h, p:p + w]
        return dx, dw, db


class MaxPool2d(Function):
    """Non-overlapping max pool; trailing rows/cols that don't fill a window are dropped."""

    def forward(self, x, size: int = 2):
        n, c, h, w = x.shape
        ho, wo = h // size, w // size
        self.x_shape, self.size = x.shape, size
        blocks = x[:, :, :ho * size, :wo * size].reshape(n, c, ho, size, wo, size)
        blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, ho, wo, size * size)
        self.argmax = blocks.argmax(axis=-1)
        return np.take_along_axis(blocks, self.argmax[..., None], axis=-1)[..., 0]

    def backward(self, grad):
        n, c, h, w = self.x_shape
        k = self.size
        ho, wo = grad.shape[2:]
        blocks = np.zeros((n, c, ho, wo, k * k), dtype=DTYPE)
        np.put_along_axis(blocks, self.argmax[..., None], grad[..., None], axis=-1)
        blocks = blocks.reshape(n, c, ho, wo, k, k).transpose(0, 1, 2, 4, 3, 5)
        dx = np.zeros(self.x_shape, dtype=DTYPE)
        dx[:, :, :ho * k, :wo * k] = blocks.reshape(n, c, ho * k, wo * k)
        return (dx,)


# ── Loss ──────────────────────────────────────────────────

def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class SoftmaxCrossEntropy(Function):
    """Mean cross-entropy over the batch; gradient is (p - onehot) / N."""

    def forward(self, logits, labels):
        labels = labels.astype(np.int64)
        n = logits.shape[0]
        p = softmax(logits)
        self.p, self.labels = p, labels
        picked = np.clip(p[np.arange(n), labels], 1e-300, None)
        return np.asarray(-np.log(picked).mean())

    def backward(self, grad):
        n = self.p.shape[0]
        g = self.p.copy()
        g[np.arange(n), self.labels] -= 1.0
        return g * (grad / n), None


def softmax_cross_entropy(logits: Tensor, labels: np.ndarray) -> Tensor:
    if logits.ndim != 2 or logits.shape[0] != len(labels):
        raise ShapeMismatch(-1, (len(labels), "classes"), logits.shape, "logits vs labels")
    return SoftmaxCrossEntropy.apply(logits, Tensor(np.asarray(labels)))
