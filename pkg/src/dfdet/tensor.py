"""Minimal reverse-mode autodiff over dense numpy arrays.

Supports exactly the op vocabulary the models need: dense/conv2d layers,
relu/sigmoid activations, global average pooling, broadcast add/mul, and
the reductions used by the losses. float32 is the working precision;
float64 inputs propagate for gradient checking.
"""

from __future__ import annotations

import numpy as np


class NumericError(ValueError):
    """A non-finite value appeared where the contract forbids it."""


def assert_finite(arr, what="array"):
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {what}")
    return arr


def _unbroadcast(grad, shape):
    """Sum `grad` down to `shape` (inverse of numpy broadcasting)."""
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data)
        self.grad = None
        self.requires_grad = requires_grad
        self._backward = None
        self._parents = ()

    @property
    def shape(self):
        return self.data.shape

    @property
    def dtype(self):
        return self.data.dtype

    def _make(self, data, parents, backward):
        out = Tensor(data)
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        return out

    # -- arithmetic ---------------------------------------------------

    def __add__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)

        def backward(g):
            return (_unbroadcast(g, self.shape), _unbroadcast(g, other.shape))

        return self._make(self.data + other.data, (self, other), backward)

    __radd__ = __add__

    def __neg__(self):
        return self._make(-self.data, (self,), lambda g: (-g,))

    def __sub__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)
        return self + (-other)

    def __rsub__(self, other):
        return Tensor(other) + (-self)

    def __mul__(self, other):
        other = other if isinstance(other, Tensor) else Tensor(other)

        def backward(g):
            return (
                _unbroadcast(g * other.data, self.shape),
                _unbroadcast(g * self.data, other.shape),
            )

        return self._make(self.data * other.data, (self, other), backward)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("tensor/tensor division unsupported; multiply by reciprocal")
        return self * (1.0 / other)

    def matmul(self, other):
        def backward(g):
            return (g @ other.data.T, self.data.T @ g)

        return self._make(self.data @ other.data, (self, other), backward)

    def __matmul__(self, other):
        return self.matmul(other)

    # -- shape ops ----------------------------------------------------

    def reshape(self, *shape):
        old = self.shape
        return self._make(
            self.data.reshape(*shape), (self,), lambda g: (g.reshape(old),)
        )

    # -- elementwise nonlinearities ------------------------------------

    def relu(self):
        mask = self.data > 0
        return self._make(
            np.where(mask, self.data, 0.0), (self,), lambda g: (g * mask,)
        )

    def sigmoid(self):
        # split by sign for overflow-free exp
        x = self.data
        out = np.where(x >= 0, 1.0 / (1.0 + np.exp(-np.abs(x))),
                       np.exp(-np.abs(x)) / (1.0 + np.exp(-np.abs(x))))
        out = out.astype(x.dtype)
        return self._make(out, (self,), lambda g: (g * out * (1.0 - out),))

    def log(self):
        return self._make(np.log(self.data), (self,), lambda g: (g / self.data,))

    def sqrt(self):
        out = np.sqrt(self.data)
        return self._make(out, (self,), lambda g: (g * 0.5 / out,))

    def clip(self, lo, hi):
        mask = (self.data > lo) & (self.data < hi)
        return self._make(
            np.clip(self.data, lo, hi), (self,), lambda g: (g * mask,)
        )

    # -- reductions ---------------------------------------------------

    def sum(self, axis=None, keepdims=False):
        old = self.shape

        def backward(g):
            if axis is None:
                return (np.broadcast_to(g, old).copy(),)
            g2 = g if keepdims else np.expand_dims(g, axis)
            return (np.broadcast_to(g2, old).copy(),)

        return self._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), backward)

    def mean(self, axis=None, keepdims=False):
        if axis is None:
            n = self.data.size
        else:
            axes = axis if isinstance(axis, tuple) else (axis,)
            n = int(np.prod([self.shape[a] for a in axes]))
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    # -- backprop driver -----------------------------------------------

    def backward(self):
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar loss")
        topo, seen = [], set()

        def visit(t):
            if id(t) in seen or not t.requires_grad:
                return
            seen.add(id(t))
            for p in t._parents:
                visit(p)
            topo.append(t)

        visit(self)
        for t in topo:
            t.grad = np.zeros_like(t.data)
        self.grad = np.ones_like(self.data)
        for t in reversed(topo):
            if t._backward is None:
                continue
            for parent, g in zip(t._parents, t._backward(t.grad)):
                if parent.requires_grad:
                    parent.grad = parent.grad + g if parent.grad is not None else g


# -- structured ops ----------------------------------------------------


def dense(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """out[..., j] = sum_i w[j, i] * x[..., i] + b[j]"""
    if x.shape[-1] != w.shape[1]:
        raise ValueError(
            f"dense: input features {x.shape[-1]} != weight columns {w.shape[1]}"
        )
    if b.shape != (w.shape[0],):
        raise ValueError(f"dense: bias shape {b.shape} != ({w.shape[0]},)")

    def backward(g):
        gx = g @ w.data
        gw = g.reshape(-1, g.shape[-1]).T @ x.data.reshape(-1, x.shape[-1])
        gb = g.reshape(-1, g.shape[-1]).sum(axis=0)
        return gx, gw, gb

    out = x.data @ w.data.T + b.data
    return x._make(out, (x, w, b), backward)


def _conv_out_size(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def _im2col(x, k, stride, pad):
    b, c, h, w = x.shape
    hp = _conv_out_size(h, k, stride, pad)
    wp = _conv_out_size(w, k, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (k, k), axis=(2, 3))
    win = win[:, :, ::stride, ::stride, :, :]  # (b, c, hp, wp, k, k)
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(b, hp * wp, c * k * k)
    return np.ascontiguousarray(cols), hp, wp


def _col2im(dcols, xshape, k, stride, pad):
    b, c, h, w = xshape
    hp = _conv_out_size(h, k, stride, pad)
    wp = _conv_out_size(w, k, stride, pad)
    dxp = np.zeros((b, c, h + 2 * pad, w + 2 * pad), dtype=dcols.dtype)
    d6 = dcols.reshape(b, hp, wp, c, k, k).transpose(0, 3, 1, 2, 4, 5)
    for i in range(k):
        for j in range(k):
            dxp[:, :, i : i + stride * hp : stride, j : j + stride * wp : stride] += d6[
                :, :, :, :, i, j
            ]
    if pad:
        return dxp[:, :, pad : pad + h, pad : pad + w]
    return dxp


def conv2d(x: Tensor, w: Tensor, b: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation (no kernel flip), zero padding.

    x: (B, C, H, W), w: (K, C, k, k), b: (K,).
    """
    kk, cc, k, k2 = w.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f"conv2d: kernel must be square and odd, got {k}x{k2}")
    if x.shape[1] != cc:
        raise ValueError(f"conv2d: input channels {x.shape[1]} != kernel channels {cc}")
    hp = _conv_out_size(x.shape[2], k, stride, padding)
    wp = _conv_out_size(x.shape[3], k, stride, padding)
    if hp <= 0 or wp <= 0:
        raise ValueError(f"conv2d: non-positive output size {hp}x{wp}")

    cols, hp, wp = _im2col(x.data, k, stride, padding)  # (b, hw, ckk)
    wmat = w.data.reshape(kk, cc * k * k)
    out = (cols @ wmat.T + b.data).transpose(0, 2, 1).reshape(x.shape[0], kk, hp, wp)

    def backward(g):
        gm = g.reshape(x.shape[0], kk, hp * wp).transpose(0, 2, 1)  # (b, hw, K)
        gw = np.einsum("bik,bij->kj", gm, cols).reshape(w.shape)
        gb = gm.sum(axis=(0, 1))
        dcols = gm @ wmat
        gx = _col2im(dcols, x.shape, k, stride, padding)
        return gx, gw, gb

    return x._make(out, (x, w, b), backward)


def global_avg_pool(x: Tensor) -> Tensor:
    """(B, C, H, W) -> (B, C), mean over the spatial axes."""
    b, c, h, w = x.shape
    out = x.data.mean(axis=(2, 3))

    def backward(g):
        return (np.broadcast_to(g[:, :, None, None] / (h * w), x.shape).copy(),)

    return x._make(out, (x,), backward)
