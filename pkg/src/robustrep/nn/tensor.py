"""Reverse-mode automatic differentiation over float32 numpy arrays.

A :class:`Tensor` wraps a row-major ``float32`` array and records the
operation that produced it. Calling :meth:`Tensor.backward` on a scalar walks
the recorded graph in reverse topological order and accumulates ``.grad`` on
every tensor that requires it.
"""
from __future__ import annotations

from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

DTYPE = np.float32

ArrayLike = Union[np.ndarray, float, int, Sequence[float]]


class ShapeError(ValueError):
    """Operand shapes are incompatible."""


class NonFiniteError(FloatingPointError):
    """A NaN or Inf appeared in a forward value or a gradient."""


def _check_finite(arr: np.ndarray, what: str) -> None:
    if not np.isfinite(arr).all():
        raise NonFiniteError(f"non-finite values produced by {what}")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    # sum out axes that were broadcast in the forward pass
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, extent in enumerate(shape):
        if extent == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "_op")

    def __init__(self, data: ArrayLike, requires_grad: bool = False,
                 _parents: tuple = (), _op: str = "leaf"):
        arr = np.asarray(data, dtype=DTYPE)
        if not arr.flags.c_contiguous:
            arr = np.ascontiguousarray(arr)
        self.data = arr
        self.grad: Optional[np.ndarray] = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward: Optional[Callable[[np.ndarray], None]] = None
        self._op = _op

    # -- basic properties -------------------------------------------------

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() on tensor of shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self._op}, requires_grad={self.requires_grad})"

    # -- graph construction ------------------------------------------------

    @staticmethod
    def _make(data: np.ndarray, parents: tuple, op: str,
              backward: Callable[[np.ndarray], None]) -> "Tensor":
        _check_finite(data, op)
        needs = any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=needs, _parents=parents if needs else (), _op=op)
        if needs:
            out._backward = backward
        return out

    def _accum(self, g: np.ndarray) -> None:
        if not self.requires_grad:
            return
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE)
        else:
            self.grad = self.grad + g

    def backward(self, grad: Optional[ArrayLike] = None) -> None:
        """Accumulate d(self)/d(leaf) into every reachable tensor's ``.grad``."""
        if grad is None:
            if self.data.size != 1:
                raise ShapeError("backward() without a seed gradient needs a scalar output")
            grad = np.ones_like(self.data)
        seed = np.asarray(grad, dtype=DTYPE)
        if seed.shape != self.shape:
            raise ShapeError(f"seed gradient shape {seed.shape} != tensor shape {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): seed}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            _check_finite(g, f"backward of {node._op}")
            if node._backward is None:
                node._accum(g)
                continue
            # intermediate nodes route their gradient through a local sink
            node._backward_into(g, grads)

    def _backward_into(self, g: np.ndarray, grads: dict) -> None:
        contributions = self._backward(g)
        for parent, pg in zip(self._parents, contributions):
            if pg is None or not parent.requires_grad:
                continue
            key = id(parent)
            if key in grads:
                grads[key] = grads[key] + pg
            else:
                grads[key] = pg

    # -- elementwise arithmetic -------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(self.data + other.data, (self, other), "add",
                            lambda g: (_unbroadcast(g, a_shape), _unbroadcast(g, b_shape)))

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), "neg", lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        other = as_tensor(other)
        a_shape, b_shape = self.shape, other.shape
        return Tensor._make(self.data - other.data, (self, other), "sub",
                            lambda g: (_unbroadcast(g, a_shape), -_unbroadcast(g, b_shape)))

    def __rsub__(self, other) -> "Tensor":
        return as_tensor(other) - self

    def __mul__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(a * b, (self, other), "mul",
                            lambda g: (_unbroadcast(g * b, a.shape), _unbroadcast(g * a, b.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        return Tensor._make(a / b, (self, other), "div",
                            lambda g: (_unbroadcast(g / b, a.shape),
                                       _unbroadcast(-g * a / (b * b), b.shape)))

    def square(self) -> "Tensor":
        a = self.data
        return Tensor._make(a * a, (self,), "square", lambda g: (2.0 * a * g,))

    def sqrt(self) -> "Tensor":
        out = np.sqrt(self.data)

        def back(g):
            # d sqrt(u) at u=0 is taken as 0 (subgradient)
            with np.errstate(divide="ignore", invalid="ignore"):
                local = np.where(out > 0, 0.5 / np.where(out > 0, out, 1), 0.0)
            return (g * local,)

        return Tensor._make(out, (self,), "sqrt", back)

    def relu(self) -> "Tensor":
        mask = self.data > 0
        return Tensor._make(self.data * mask, (self,), "relu", lambda g: (g * mask,))

    # -- reductions and reshaping -------------------------------------------

    def sum(self, axis: Optional[Union[int, tuple]] = None, keepdims: bool = False) -> "Tensor":
        shape = self.shape
        out = self.data.sum(axis=axis, keepdims=keepdims)

        def back(g):
            if axis is not None and not keepdims:
                axes = (axis,) if isinstance(axis, int) else axis
                axes = tuple(a % len(shape) for a in axes)
                for a in sorted(axes):
                    g = np.expand_dims(g, a)
            return (np.broadcast_to(g, shape),)

        return Tensor._make(np.asarray(out, dtype=DTYPE), (self,), "sum", back)

    def mean(self, axis: Optional[Union[int, tuple]] = None, keepdims: bool = False) -> "Tensor":
        if axis is None:
            count = self.size
        else:
            axes = (axis,) if isinstance(axis, int) else axis
            count = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / count)

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        src = self.shape
        try:
            out = self.data.reshape(shape)
        except ValueError as exc:
            raise ShapeError(str(exc)) from None
        return Tensor._make(out, (self,), "reshape", lambda g: (g.reshape(src),))

    def transpose(self, axes: tuple) -> "Tensor":
        inverse = tuple(np.argsort(axes))
        out = np.ascontiguousarray(self.data.transpose(axes))
        return Tensor._make(out, (self,), "transpose", lambda g: (g.transpose(inverse),))

    def __getitem__(self, idx) -> "Tensor":
        src = self.shape

        def back(g):
            full = np.zeros(src, dtype=DTYPE)
            np.add.at(full, idx, g)
            return (full,)

        return Tensor._make(np.array(self.data[idx], dtype=DTYPE), (self,), "getitem", back)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        other = as_tensor(other)
        a, b = self.data, other.data
        if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
            raise ShapeError(f"matmul shapes {a.shape} @ {b.shape}")
        return Tensor._make(a @ b, (self, other), "matmul",
                            lambda g: (g @ b.T if self.requires_grad else None,
                                       a.T @ g if other.requires_grad else None))


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# -- neural-network primitives -----------------------------------------------

def linear(x: Tensor, weight: Tensor, bias: Optional[Tensor]) -> Tensor:
    """``x @ weight.T + bias`` with weight stored as (out, in)."""
    a, w = x.data, weight.data
    if a.ndim != 2 or a.shape[1] != w.shape[1]:
        raise ShapeError(f"linear expects (B, {w.shape[1]}), got {a.shape}")
    out = a @ w.T
    parents: tuple = (x, weight)
    if bias is not None:
        out = out + bias.data
        parents = parents + (bias,)

    def back(g):
        gx = g @ w if x.requires_grad else None
        gw = g.T @ a if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, g.sum(axis=0)

    return Tensor._make(out, parents, "linear", back)


def conv2d(x: Tensor, weight: Tensor, bias: Optional[Tensor],
           stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation on channel-major input.

    ``x`` is laid out (C, B, H, W) and so is the result; ``weight`` is
    (out, in, k, k). Keeping channels outermost makes every im2col copy a
    run over contiguous rows, which is the dominant cost on CPU.
    """
    a, w = x.data, weight.data
    if a.ndim != 4 or a.shape[0] != w.shape[1]:
        raise ShapeError(f"conv2d expects ({w.shape[1]}, B, H, W), got {a.shape}")
    out_ch, in_ch, k, _ = w.shape
    _, B, H, W = a.shape
    Ho = (H + 2 * padding - k) // stride + 1
    Wo = (W + 2 * padding - k) // stride + 1
    if Ho <= 0 or Wo <= 0:
        raise ShapeError(f"conv2d input {a.shape} too small for kernel {k}")
    Hp, Wp = H + 2 * padding, W + 2 * padding
    if padding:
        xp = np.zeros((in_ch, B, Hp, Wp), dtype=DTYPE)
        xp[:, :, padding:padding + H, padding:padding + W] = a
    else:
        xp = a
    cols = np.empty((in_ch, k, k, B, Ho, Wo), dtype=DTYPE)
    for i in range(k):
        for j in range(k):
            cols[:, i, j] = xp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride]
    cols = cols.reshape(in_ch * k * k, B * Ho * Wo)
    wmat = w.reshape(out_ch, -1)
    out = wmat @ cols
    if bias is not None:
        out += bias.data[:, None]
    out = out.reshape(out_ch, B, Ho, Wo)
    parents: tuple = (x, weight) if bias is None else (x, weight, bias)

    def back(g):
        gmat = g.reshape(out_ch, -1)
        gx = None
        if x.requires_grad:
            dcols = (wmat.T @ gmat).reshape(in_ch, k, k, B, Ho, Wo)
            dxp = np.zeros((in_ch, B, Hp, Wp), dtype=DTYPE)
            for i in range(k):
                for j in range(k):
                    dxp[:, :, i:i + stride * Ho:stride, j:j + stride * Wo:stride] += dcols[:, i, j]
            gx = dxp[:, :, padding:padding + H, padding:padding + W] if padding else dxp
        gw = (gmat @ cols.T).reshape(w.shape) if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, gmat.sum(axis=1)

    return Tensor._make(out, parents, "conv2d", back)


def maxpool2d(x: Tensor, kernel: int = 2, stride: Optional[int] = None) -> Tensor:
    """Max pooling over the two trailing (spatial) axes; the leading two axes are untouched."""
    stride = stride or kernel
    a = x.data
    if a.ndim != 4:
        raise ShapeError(f"maxpool2d expects a 4-d tensor, got {a.shape}")
    B, C, H, W = a.shape
    Ho, Wo = (H - kernel) // stride + 1, (W - kernel) // stride + 1
    win = sliding_window_view(a, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride]
    win = win[:, :, :Ho, :Wo].reshape(B, C, Ho, Wo, kernel * kernel)
    arg = win.argmax(axis=-1)  # first maximum wins ties
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]

    def back(g):
        gx = np.zeros_like(a)
        di, dj = np.divmod(arg, kernel)
        bi, ci, hi, wi = np.indices((B, C, Ho, Wo))
        np.add.at(gx, (bi, ci, hi * stride + di, wi * stride + dj), g)
        return (gx,)

    return Tensor._make(np.ascontiguousarray(out), (x,), "maxpool2d", back)


def global_avg_pool(x: Tensor) -> Tensor:
    """(C, B, H, W) -> (B, C)."""
    if x.ndim != 4:
        raise ShapeError(f"global_avg_pool expects (C, B, H, W), got {x.shape}")
    return x.mean(axis=(2, 3)).transpose((1, 0))


def log_softmax(x: Tensor) -> Tensor:
    a = x.data
    shifted = a - a.max(axis=1, keepdims=True)
    lse = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    out = shifted - lse
    soft = np.exp(out)

    def back(g):
        return (g - soft * g.sum(axis=1, keepdims=True),)

    return Tensor._make(out, (x,), "log_softmax", back)


def cross_entropy(logits: Tensor, labels: np.ndarray, reduction: str = "mean") -> Tensor:
    """Softmax cross-entropy; ``reduction`` is ``mean``, ``sum`` or ``none``."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape}, labels {labels.shape}")
    picked = log_softmax(logits)[np.arange(labels.shape[0]), labels]
    if reduction == "none":
        return -picked
    if reduction == "sum":
        return -picked.sum()
    return -picked.mean()


def l2_norm(x: Tensor, axis: Optional[Union[int, tuple]] = None) -> Tensor:
    return x.square().sum(axis=axis).sqrt()


def parameters_requiring_grad(tensors: Iterable[Tensor]) -> list[Tensor]:
    return [t for t in tensors if t.requires_grad]
