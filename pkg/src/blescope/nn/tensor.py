"""Reverse-mode automatic differentiation over numpy arrays.

A ``Tensor`` wraps a float64 array. Every operation on tensors that require
gradients records its parents and a closure that pushes the output gradient
back to them; ``Tensor.backward`` replays those closures in reverse
topological order.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Iterator, Sequence

import numpy as np

DTYPE = np.float64
_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad() -> Iterator[None]:
    """Skip graph recording inside the block (inference only)."""
    global _GRAD_ENABLED
    prev, _GRAD_ENABLED = _GRAD_ENABLED, False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class TapeError(RuntimeError):
    """Raised when backward is requested on a tensor with no recorded graph."""


def _as_array(x) -> np.ndarray:
    if isinstance(x, Tensor):
        return x.data
    return np.asarray(x, dtype=DTYPE)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    # sum out axes that broadcasting added or stretched
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "op")

    def __init__(
        self,
        data,
        requires_grad: bool = False,
        _parents: tuple["Tensor", ...] = (),
        op: str = "",
    ):
        self.data = np.asarray(data, dtype=DTYPE)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents = _parents
        self._backward: Callable[[np.ndarray], tuple] | None = None
        self.op = op

    # -- bookkeeping ---------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=DTYPE, copy=True)
        else:
            self.grad += g

    @staticmethod
    def _make(data, parents: Sequence["Tensor"], op: str, backward) -> "Tensor":
        req = _GRAD_ENABLED and any(p.requires_grad for p in parents)
        out = Tensor(data, requires_grad=req, _parents=tuple(parents) if req else (), op=op)
        if req:
            out._backward = backward
        return out

    def backward(self, grad=None) -> None:
        """Propagate ``grad`` (default: ones for a scalar) to every leaf."""
        if not self.requires_grad:
            raise TapeError("tensor has no recorded computation to differentiate")
        if grad is None:
            if self.size != 1:
                raise ValueError("grad must be given for non-scalar outputs")
            grad = np.ones_like(self.data)
        grad = _as_array(grad)
        if grad.shape != self.shape:
            raise ValueError(f"grad shape {grad.shape} does not match {self.shape}")

        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(self, False)]
        while stack:
            node, done = stack.pop()
            if done:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))

        grads: dict[int, np.ndarray] = {id(self): grad.astype(DTYPE, copy=True)}
        for node in reversed(order):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accumulate(g)
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg

    # -- elementwise arithmetic ---------------------------------------------

    def __add__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self.shape, other.shape
        return Tensor._make(
            self.data + other.data,
            (self, other),
            "add",
            lambda g: (_unbroadcast(g, a), _unbroadcast(g, b)),
        )

    __radd__ = __add__

    def __neg__(self) -> "Tensor":
        return Tensor._make(-self.data, (self,), "neg", lambda g: (-g,))

    def __sub__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        a, b = self.shape, other.shape
        return Tensor._make(
            self.data - other.data,
            (self, other),
            "sub",
            lambda g: (_unbroadcast(g, a), -_unbroadcast(g, b)),
        )

    def __rsub__(self, other) -> "Tensor":
        return Tensor(other) - self

    def __mul__(self, other) -> "Tensor":
        other = other if isinstance(other, Tensor) else Tensor(other)
        x, y = self.data, other.data
        return Tensor._make(
            x * y,
            (self, other),
            "mul",
            lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)),
        )

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Tensor":
        if isinstance(other, Tensor):
            return self * other.reciprocal()
        return self * (1.0 / float(other))

    def reciprocal(self) -> "Tensor":
        out = 1.0 / self.data
        return Tensor._make(out, (self,), "reciprocal", lambda g: (-g * out * out,))

    def square(self) -> "Tensor":
        x = self.data
        return Tensor._make(x * x, (self,), "square", lambda g: (2.0 * x * g,))

    def __pow__(self, k: float) -> "Tensor":
        x = self.data
        return Tensor._make(x**k, (self,), "pow", lambda g: (k * x ** (k - 1) * g,))

    def __matmul__(self, other: "Tensor") -> "Tensor":
        x, w = self.data, other.data
        if x.ndim != 2 or w.ndim != 2:
            raise ValueError("matmul supports 2-D operands only")

        def back(g):
            return g @ w.T, x.T @ g

        return Tensor._make(x @ w, (self, other), "matmul", back)

    # -- nonlinearities -------------------------------------------------------

    def relu(self) -> "Tensor":
        mask = self.data > 0
        return Tensor._make(self.data * mask, (self,), "relu", lambda g: (g * mask,))

    def sigmoid(self) -> "Tensor":
        out = _sigmoid(self.data)
        return Tensor._make(out, (self,), "sigmoid", lambda g: (g * out * (1.0 - out),))

    def tanh(self) -> "Tensor":
        out = np.tanh(self.data)
        return Tensor._make(out, (self,), "tanh", lambda g: (g * (1.0 - out * out),))

    def exp(self) -> "Tensor":
        out = np.exp(self.data)
        return Tensor._make(out, (self,), "exp", lambda g: (g * out,))

    def abs(self) -> "Tensor":
        sign = np.sign(self.data)
        return Tensor._make(np.abs(self.data), (self,), "abs", lambda g: (g * sign,))

    def clip_max(self, limit: float) -> "Tensor":
        mask = self.data <= limit
        return Tensor._make(
            np.minimum(self.data, limit), (self,), "clip_max", lambda g: (g * mask,)
        )

    # -- reductions and shape -------------------------------------------------

    def sum(self, axis=None, keepdims: bool = False) -> "Tensor":
        shape = self.shape

        def back(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return Tensor._make(self.data.sum(axis=axis, keepdims=keepdims), (self,), "sum", back)

    def mean(self, axis=None, keepdims: bool = False) -> "Tensor":
        n = self.size if axis is None else np.prod([self.shape[a] for a in np.atleast_1d(axis)])
        return self.sum(axis=axis, keepdims=keepdims) * (1.0 / float(n))

    def reshape(self, *shape) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        old = self.shape
        return Tensor._make(
            self.data.reshape(shape), (self,), "reshape", lambda g: (g.reshape(old),)
        )

    def transpose(self, *axes) -> "Tensor":
        axes = axes or tuple(reversed(range(self.ndim)))
        inv = tuple(np.argsort(axes))
        return Tensor._make(
            self.data.transpose(axes), (self,), "transpose", lambda g: (g.transpose(inv),)
        )

    @property
    def T(self) -> "Tensor":
        return self.transpose()

    def __getitem__(self, idx) -> "Tensor":
        shape = self.shape
        parts = idx if isinstance(idx, tuple) else (idx,)
        basic = all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)

        def back(g):
            full = np.zeros(shape, dtype=DTYPE)
            if basic:
                full[idx] = g
            else:
                np.add.at(full, idx, g)
            return (full,)

        return Tensor._make(self.data[idx], (self,), "getitem", back)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (np.tanh(0.5 * x) + 1.0)


def tensor(data, requires_grad: bool = False) -> Tensor:
    return Tensor(data, requires_grad=requires_grad)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, cuts, axis=axis))

    return Tensor._make(
        np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), "concat", back
    )


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    def back(g):
        return tuple(np.moveaxis(g, axis, 0))

    return Tensor._make(
        np.stack([t.data for t in tensors], axis=axis), tuple(tensors), "stack", back
    )


def conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Stride-1 'same'-padded 1-D convolution (cross-correlation).

    ``x`` is (N, C_in, L); ``weight`` is (C_out, C_in, K) with odd K.
    """
    n, c_in, length = x.shape
    c_out, c_in_w, k = weight.shape
    if c_in != c_in_w:
        raise ValueError(f"conv1d: input has {c_in} channels, weight expects {c_in_w}")
    if k % 2 != 1:
        raise ValueError("conv1d: kernel size must be odd for same padding")
    pad = k // 2
    xp = np.pad(x.data, ((0, 0), (0, 0), (pad, pad)))
    # cols[n, c, k, l] = xp[n, c, l + k]
    cols = np.stack([xp[:, :, j : j + length] for j in range(k)], axis=2)
    out = np.einsum("nckl,ock->nol", cols, weight.data, optimize=True)
    if bias is not None:
        out = out + bias.data[None, :, None]

    w = weight.data

    def back(g):
        gw = np.einsum("nol,nckl->ock", g, cols, optimize=True)
        gcols = np.einsum("nol,ock->nckl", g, w, optimize=True)
        gxp = np.zeros_like(xp)
        for j in range(k):
            gxp[:, :, j : j + length] += gcols[:, :, j, :]
        gx = gxp[:, :, pad : pad + length]
        grads = [gx, gw]
        if bias is not None:
            grads.append(g.sum(axis=(0, 2)))
        return tuple(grads)

    parents: tuple[Tensor, ...] = (x, weight) if bias is None else (x, weight, bias)
    return Tensor._make(out, parents, "conv1d", back)


def where(cond, a: Tensor, b: Tensor) -> Tensor:
    cond = np.asarray(cond, dtype=bool)
    a = a if isinstance(a, Tensor) else Tensor(a)
    b = b if isinstance(b, Tensor) else Tensor(b)
    sa, sb = a.shape, b.shape
    return Tensor._make(
        np.where(cond, a.data, b.data),
        (a, b),
        "where",
        lambda g: (_unbroadcast(g * cond, sa), _unbroadcast(g * ~cond, sb)),
    )


def parameters_grad_norm(params: Iterable[Tensor]) -> float:
    total = 0.0
    for p in params:
        if p.grad is not None:
            total += float(np.sum(p.grad * p.grad))
    return float(np.sqrt(total))


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, w_ih: Tensor, w_hh: Tensor, bias: Tensor) -> Tensor:
    """Fused LSTM step; returns (N, 2n) holding [h_next, c_next].

    Gate blocks of the 4n pre-activation are [input, forget, cell, output].
    """
    n = h.shape[1]
    xd, hd, cd = x.data, h.data, c.data
    # a constant zero state (first step) contributes nothing; skip its matmuls
    h_zero = not h.requires_grad and not hd.any()
    z = xd @ w_ih.data + bias.data
    if not h_zero:
        z += hd @ w_hh.data
    i = _sigmoid(z[:, :n])
    f = _sigmoid(z[:, n : 2 * n])
    g = np.tanh(z[:, 2 * n : 3 * n])
    o = _sigmoid(z[:, 3 * n :])
    c_next = f * cd + i * g
    tc = np.tanh(c_next)
    h_next = o * tc

    def back(grad):
        gh = grad[:, :n]
        gc = grad[:, n:] + gh * o * (1.0 - tc * tc)
        dz = np.empty((grad.shape[0], 4 * n))
        dz[:, :n] = gc * g * i * (1.0 - i)
        dz[:, n : 2 * n] = gc * cd * f * (1.0 - f)
        dz[:, 2 * n : 3 * n] = gc * i * (1.0 - g * g)
        dz[:, 3 * n :] = gh * tc * o * (1.0 - o)
        return (
            dz @ w_ih.data.T if x.requires_grad else None,
            dz @ w_hh.data.T if h.requires_grad else None,
            gc * f if c.requires_grad else None,
            xd.T @ dz if w_ih.requires_grad else None,
            None if h_zero or not w_hh.requires_grad else hd.T @ dz,
            dz.sum(axis=0) if bias.requires_grad else None,
        )

    return Tensor._make(
        np.concatenate([h_next, c_next], axis=1), (x, h, c, w_ih, w_hh, bias), "lstm_cell", back
    )
