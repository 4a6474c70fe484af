"""Minimal reverse-mode autodiff over float64 numpy arrays.

Supports exactly the operations the CNN image encoder and GRU encoders/decoder
need: dense matmul, elementwise arithmetic, the usual activations, 3x3 same
convolution, 2x2 max pooling, slicing/gather, concat and the reductions used
by the losses. No general broadcasting beyond bias addition.
"""

from __future__ import annotations

import contextlib
from typing import Iterable, Sequence

import numpy as np

_grad_enabled = True


@contextlib.contextmanager
def no_grad():
    """Disable graph construction inside the block (inference fast path)."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


def _reduce_to(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to the original operand shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_backward", "_parents")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._backward = None
        self._parents: tuple[Tensor, ...] = ()

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray, own: bool = False) -> None:
        """Add to the gradient buffer. ``own=True`` promises g is a freshly
        allocated array that may be adopted without copying."""
        if self.grad is None:
            self.grad = g if own else g.astype(np.float64, copy=True)
        else:
            self.grad += g

    def backward(self) -> None:
        """Backpropagate from a scalar output through the recorded graph."""
        if self.data.size != 1:
            raise ValueError("backward() requires a scalar output")
        topo: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
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

    # -- graph construction -------------------------------------------------

    @staticmethod
    def _op(data: np.ndarray, parents: tuple[Tensor, ...], backward) -> Tensor:
        out = Tensor(data)
        if _grad_enabled and any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = parents
            out._backward = backward
        return out

    # -- arithmetic ----------------------------------------------------------

    def __add__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(_reduce_to(g, a.data.shape))
            if b.requires_grad:
                b._accumulate(_reduce_to(g, b.data.shape))

        return Tensor._op(a.data + b.data, (a, b), bw)

    __radd__ = __add__

    def __neg__(self) -> Tensor:
        a = self

        def bw(g):
            a._accumulate(-g)

        return Tensor._op(-a.data, (a,), bw)

    def __sub__(self, other) -> Tensor:
        return self + (-as_tensor(other))

    def __rsub__(self, other) -> Tensor:
        return as_tensor(other) + (-self)

    def __mul__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                ga = g * b.data
                a._accumulate(_reduce_to(ga, a.data.shape), own=ga.shape == a.data.shape)
            if b.requires_grad:
                gb = g * a.data
                b._accumulate(_reduce_to(gb, b.data.shape), own=gb.shape == b.data.shape)

        return Tensor._op(a.data * b.data, (a, b), bw)

    __rmul__ = __mul__

    def __matmul__(self, other) -> Tensor:
        other = as_tensor(other)
        a, b = self, other

        def bw(g):
            if a.requires_grad:
                a._accumulate(g @ b.data.T, own=True)
            if b.requires_grad:
                b._accumulate(a.data.T @ g, own=True)

        return Tensor._op(a.data @ b.data, (a, b), bw)

    def __getitem__(self, idx) -> Tensor:
        a = self

        def bw(g):
            full = np.zeros_like(a.data)
            np.add.at(full, idx, g)
            a._accumulate(full, own=True)

        return Tensor._op(a.data[idx], (a,), bw)

    # -- activations and pointwise functions ---------------------------------

    def relu(self) -> Tensor:
        a = self
        out = np.maximum(a.data, 0.0)

        def bw(g):
            a._accumulate(g * (out > 0.0), own=True)

        return Tensor._op(out, (a,), bw)

    def sigmoid(self) -> Tensor:
        a = self
        x = a.data
        e = np.exp(-np.abs(x))
        s = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))

        def bw(g):
            a._accumulate(g * s * (1.0 - s), own=True)

        return Tensor._op(s, (a,), bw)

    def tanh(self) -> Tensor:
        a = self
        t = np.tanh(a.data)

        def bw(g):
            a._accumulate(g * (1.0 - t * t), own=True)

        return Tensor._op(t, (a,), bw)

    def exp(self) -> Tensor:
        a = self
        e = np.exp(a.data)

        def bw(g):
            a._accumulate(g * e, own=True)

        return Tensor._op(e, (a,), bw)

    def log(self) -> Tensor:
        a = self

        def bw(g):
            a._accumulate(g / a.data, own=True)

        return Tensor._op(np.log(a.data), (a,), bw)

    def clamp(self, lo: float | None = None, hi: float | None = None) -> Tensor:
        """Clip values; gradient passes only where the input was not clipped."""
        a = self
        data = np.clip(a.data, lo, hi)
        mask = np.ones_like(a.data, dtype=bool)
        if lo is not None:
            mask &= a.data >= lo
        if hi is not None:
            mask &= a.data <= hi

        def bw(g):
            a._accumulate(g * mask, own=True)

        return Tensor._op(data, (a,), bw)

    # -- reductions and shape ops ---------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> Tensor:
        a = self

        def bw(g):
            gg = g if axis is None or keepdims else np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(gg, a.data.shape))

        return Tensor._op(a.data.sum(axis=axis, keepdims=keepdims), (a,), bw)

    def mean(self, axis=None, keepdims: bool = False) -> Tensor:
        n = self.data.size if axis is None else self.data.shape[axis]
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / n)

    def reshape(self, *shape) -> Tensor:
        a = self
        old = a.data.shape

        def bw(g):
            a._accumulate(g.reshape(old))

        return Tensor._op(a.data.reshape(*shape), (a,), bw)

    def log_softmax(self) -> Tensor:
        """Numerically stable log-softmax over the last axis."""
        a = self
        x = a.data
        m = x.max(axis=-1, keepdims=True)
        z = x - m
        lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
        out = z - lse
        soft = np.exp(out)

        def bw(g):
            a._accumulate(g - soft * g.sum(axis=-1, keepdims=True), own=True)

        return Tensor._op(out, (a,), bw)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    data = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bw(g):
        for t, piece in zip(tensors, np.split(g, splits, axis=axis)):
            if t.requires_grad:
                t._accumulate(piece)

    return Tensor._op(data, tuple(tensors), bw)


def conv2d(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Same-padded stride-1 convolution.

    x: (B, H, W, Cin), w: (kh, kw, Cin, Cout) with odd kh == kw, b: (Cout,).
    Implemented as im2col + one matmul; the column matrix is kept for the
    backward pass.
    """
    B, H, W, cin = x.data.shape
    kh, kw, wcin, cout = w.data.shape
    if wcin != cin:
        raise ValueError(f"conv2d channel mismatch: input {cin}, weight {wcin}")
    p = kh // 2
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (0, 0)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    # win: (B, H, W, Cin, kh, kw) -> cols laid out as (kh, kw, Cin)
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(B * H * W, kh * kw * cin)
    wmat = w.data.reshape(kh * kw * cin, cout)
    out = (cols @ wmat + b.data).reshape(B, H, W, cout)

    def bw(g):
        gmat = g.reshape(B * H * W, cout)
        if w.requires_grad:
            w._accumulate((cols.T @ gmat).reshape(w.data.shape), own=True)
        if b.requires_grad:
            b._accumulate(gmat.sum(axis=0), own=True)
        if x.requires_grad:
            dcols = (gmat @ wmat.T).reshape(B, H, W, kh, kw, cin)
            dxp = np.zeros_like(xp)
            for i in range(kh):
                for j in range(kw):
                    dxp[:, i:i + H, j:j + W, :] += dcols[:, :, :, i, j, :]
            x._accumulate(dxp[:, p:p + H, p:p + W, :])

    return Tensor._op(out, (x, w, b), bw)


def maxpool2x2(x: Tensor) -> Tensor:
    """2x2 max pooling with stride 2.

    Windows are compared in row-major order (top-left, top-right,
    bottom-left, bottom-right); on ties the first maximum gets the gradient.
    """
    B, H, W, C = x.data.shape
    if H % 2 or W % 2:
        raise ValueError("maxpool2x2 needs even spatial dims")
    quads = (x.data[:, 0::2, 0::2], x.data[:, 0::2, 1::2],
             x.data[:, 1::2, 0::2], x.data[:, 1::2, 1::2])
    out = np.maximum(np.maximum(quads[0], quads[1]),
                     np.maximum(quads[2], quads[3]))

    def bw(g):
        dx = np.zeros((B, H, W, C))
        slots = (dx[:, 0::2, 0::2], dx[:, 0::2, 1::2],
                 dx[:, 1::2, 0::2], dx[:, 1::2, 1::2])
        taken = np.zeros(out.shape, dtype=bool)
        for q, slot in zip(quads, slots):
            hit = (q == out) & ~taken
            slot += g * hit
            taken |= hit
        x._accumulate(dx, own=True)

    return Tensor._op(out, (x,), bw)


def parameters_of(params: dict[str, Tensor]) -> Iterable[Tensor]:
    return params.values()


def zero_grads(params: dict[str, Tensor]) -> None:
    for t in params.values():
        t.grad = None
