"""Dense tensors with tape-based reverse-mode differentiation.

Values are float64 unless a :func:`default_dtype` block says otherwise.

Every primitive op that sees an input with ``requires_grad`` records a node
on the active :class:`Tape`.  Nodes are appended in execution order, so the
tape is topologically sorted by construction and :func:`backward` only has
to walk it in reverse.

    >>> w = Tensor([2.0], requires_grad=True)
    >>> with Tape() as tape:
    ...     loss = (w * w).sum()
    >>> backward(tape, loss)[w]
    array([4.])
"""
from __future__ import annotations

from contextlib import contextmanager
from typing import Callable, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LAYERNORM_EPS = 1e-5
_DTYPE = [np.dtype(np.float64)]

_TAPES: list["Tape"] = []


@contextmanager
def default_dtype(dtype):
    """Temporarily store new tensors as ``dtype`` (float64 or float32)."""
    dtype = np.dtype(dtype)
    if dtype not in (np.float64, np.float32):
        raise ValueError(f"unsupported tensor dtype {dtype}")
    _DTYPE.append(dtype)
    try:
        yield dtype
    finally:
        _DTYPE.pop()


def current_dtype() -> np.dtype:
    return _DTYPE[-1]


class Tensor:
    """A float array plus an optional gradient requirement."""

    __slots__ = ("data", "requires_grad", "name")
    __array_ufunc__ = None

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        self.data = np.asarray(data, dtype=_DTYPE[-1])
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        tag = f", name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}{tag})"

    def numpy(self) -> np.ndarray:
        return self.data

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def item(self) -> float:
        if self.data.size != 1:
            raise ValueError(f"item() needs a single element, got shape {self.shape}")
        return float(self.data.reshape(()))

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __neg__ = lambda self: neg(self)
    __matmul__ = lambda self, other: matmul(self, other)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise TypeError("division is only supported by a constant")
        return mul(self, 1.0 / other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return tmean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


class Tape:
    """Ordered record of differentiable ops.

    Each entry is ``(output, inputs, vjp)`` where ``vjp`` maps the output
    gradient to a tuple of input gradients (``None`` for inputs that do not
    need one).
    """

    def __init__(self):
        self.nodes: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def __len__(self) -> int:
        return len(self.nodes)

    def __enter__(self) -> "Tape":
        _TAPES.append(self)
        return self

    def __exit__(self, *exc) -> None:
        _TAPES.remove(self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _record(out: np.ndarray, inputs: Sequence[Tensor], vjp: Callable) -> Tensor:
    needs = any(t.requires_grad for t in inputs)
    result = Tensor(out, requires_grad=needs and bool(_TAPES))
    if result.requires_grad:
        _TAPES[-1].nodes.append((result, tuple(inputs), vjp))
    return result


def backward(tape: Tape, loss: Tensor) -> dict[Tensor, np.ndarray]:
    """Reverse sweep over ``tape`` seeded at the scalar ``loss``.

    Returns a mapping from every leaf tensor with ``requires_grad`` that the
    loss depends on to its gradient array.
    """
    if loss.data.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    produced = set()
    leaves: dict[int, Tensor] = {}
    for out, inputs, vjp in reversed(tape.nodes):
        produced.add(id(out))
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, vjp(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            leaves.setdefault(key, inp)
    return {leaves[k]: g for k, g in grads.items() if k not in produced and k in leaves}


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


# -- elementwise -----------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data + b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data - b.data, (a, b),
                   lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data * b.data, (a, b),
                   lambda g: (_unbroadcast(g * b.data, a.shape) if a.requires_grad else None,
                              _unbroadcast(g * a.data, b.shape) if b.requires_grad else None))


def neg(a: Tensor) -> Tensor:
    return _record(-a.data, (a,), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    return _record(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def relu(a: Tensor) -> Tensor:
    y = np.maximum(a.data, 0.0)
    return _record(y, (a,), lambda g: (g * (y > 0),))


def tanh(a: Tensor) -> Tensor:
    y = np.tanh(a.data)
    return _record(y, (a,), lambda g: (g * (1.0 - y * y),))


def exp(a: Tensor) -> Tensor:
    y = np.exp(a.data)
    return _record(y, (a,), lambda g: (g * y,))


def log(a: Tensor) -> Tensor:
    return _record(np.log(a.data), (a,), lambda g: (g / a.data,))


def softplus(a: Tensor) -> Tensor:
    x = a.data
    y = np.logaddexp(0.0, x)
    sig = np.exp(x - y)
    return _record(y, (a,), lambda g: (g * sig,))


def clip(a: Tensor, lo: float, hi: float) -> Tensor:
    inside = (a.data >= lo) & (a.data <= hi)
    return _record(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


def minimum(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    pick_a = a.data <= b.data
    return _record(np.where(pick_a, a.data, b.data), (a, b),
                   lambda g: (_unbroadcast(g * pick_a, a.shape),
                              _unbroadcast(g * ~pick_a, b.shape)))


# -- reductions and shape ops ---------------------------------------------

def tsum(a: Tensor, axis=None) -> Tensor:
    def vjp(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)
    return _record(a.data.sum(axis=axis), (a,), vjp)


def tmean(a: Tensor, axis=None) -> Tensor:
    n = a.data.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis), 1.0 / n)


def reshape(a: Tensor, shape) -> Tensor:
    return _record(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def getitem(a: Tensor, index) -> Tensor:
    def vjp(g):
        out = np.zeros_like(a.data)
        out[index] = g
        return (out,)
    return _record(a.data[index], (a,), vjp)


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    parts = [as_tensor(p) for p in parts]
    bounds = np.cumsum([p.shape[axis] for p in parts])[:-1]
    return _record(np.concatenate([p.data for p in parts], axis=axis), parts,
                   lambda g: tuple(np.split(g, bounds, axis=axis)))


# -- layers ----------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _record(a.data @ b.data, (a, b),
                   lambda g: (g @ b.data.T if a.requires_grad else None,
                              a.data.T @ g if b.requires_grad else None))


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """``x @ weight.T + bias`` for ``x`` of shape (N, in) or (in,)."""
    x = as_tensor(x)
    if x.shape[-1] != weight.shape[1]:
        raise ValueError(f"linear: input has {x.shape[-1]} features, weight expects {weight.shape[1]}")
    xd = x.data

    def vjp(g):
        g2 = g.reshape(-1, weight.shape[0])
        x2 = xd.reshape(-1, weight.shape[1])
        gx = (g2 @ weight.data).reshape(xd.shape) if x.requires_grad else None
        return gx, g2.T @ x2, g2.sum(axis=0)

    return _record(xd @ weight.data.T + bias.data, (x, weight, bias), vjp)


def layernorm(x: Tensor, gamma: Tensor | None = None, beta: Tensor | None = None) -> Tensor:
    """Normalise the last axis to zero mean and unit variance.

    The variance is floored at ``LAYERNORM_EPS`` so constant rows map to
    zeros instead of dividing by zero.
    """
    xd = x.data
    mu = xd.mean(axis=-1, keepdims=True)
    xc = xd - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    floored = var < LAYERNORM_EPS
    std = np.sqrt(np.where(floored, LAYERNORM_EPS, var))
    xhat = xc / std

    def vjp(g):
        gm = g - g.mean(axis=-1, keepdims=True)
        proj = np.where(floored, 0.0, (g * xhat).mean(axis=-1, keepdims=True))
        return ((gm - xhat * proj) / std,)

    out = _record(xhat, (x,), vjp)
    if gamma is not None:
        out = mul(out, gamma)
    if beta is not None:
        out = add(out, beta)
    return out


def _patches3(xd: np.ndarray) -> np.ndarray:
    """im2col for a valid 3x3 window: (N, H, W, C) -> (N*(H-2)*(W-2), 9*C), taps row-major."""
    n, h, w, c = xd.shape
    cols = np.empty((n, h - 2, w - 2, 3, 3, c), dtype=xd.dtype)
    # one strided copy; concatenating nine shifted slices is several times slower
    cols[...] = sliding_window_view(xd, (3, 3), axis=(1, 2)).transpose(0, 1, 2, 4, 5, 3)
    return cols.reshape(-1, 9 * c)


def conv2d_nhwc(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid 3x3, stride-1 cross-correlation on channels-last (N, H, W, Cin) input.

    ``kernels`` keep the (Cout, Cin, 3, 3) layout used everywhere else.
    """
    x = as_tensor(x)
    xd = x.data
    if xd.ndim != 4:
        raise ValueError(f"conv2d: expected a 4D channels-last input, got shape {x.shape}")
    if kernels.ndim != 4 or kernels.shape[2:] != (3, 3):
        raise ValueError(f"conv2d: kernels must be (Cout, Cin, 3, 3), got {kernels.shape}")
    n, h, w, cin = xd.shape
    cout = kernels.shape[0]
    if kernels.shape[1] != cin:
        raise ValueError(f"conv2d: input has {cin} channels, kernels expect {kernels.shape[1]}")
    if bias.shape != (cout,):
        raise ValueError(f"conv2d: bias must have shape ({cout},), got {bias.shape}")
    if h < 3 or w < 3:
        raise ValueError(f"conv2d: spatial extent {h}x{w} is smaller than the 3x3 kernel")
    kmat = kernels.data.transpose(2, 3, 1, 0).reshape(9 * cin, cout)
    cols = _patches3(xd)
    out = (cols @ kmat + bias.data).reshape(n, h - 2, w - 2, cout)
    if not (_TAPES and (x.requires_grad or kernels.requires_grad or bias.requires_grad)):
        return Tensor(out)

    def vjp(g):
        gf = g.reshape(-1, cout)
        gk = (cols.T @ gf).reshape(3, 3, cin, cout).transpose(3, 2, 0, 1)
        gx = None
        if x.requires_grad:
            # full correlation of the output gradient with the flipped kernels
            gpad = np.pad(g, ((0, 0), (2, 2), (2, 2), (0, 0)))
            kflip = kernels.data[:, :, ::-1, ::-1].transpose(2, 3, 0, 1).reshape(9 * cout, cin)
            gx = (_patches3(gpad) @ kflip).reshape(xd.shape)
        return gx, np.ascontiguousarray(gk), gf.sum(axis=0)

    return _record(out, (x, kernels, bias), vjp)


def conv2d(x: Tensor, kernels: Tensor, bias: Tensor) -> Tensor:
    """Valid 3x3 cross-correlation with stride 1, no padding.

    ``x`` is (Cin, H, W) or (N, Cin, H, W); ``kernels`` is (Cout, Cin, 3, 3);
    the output is (Cout, H-2, W-2) or (N, Cout, H-2, W-2).
    """
    x = as_tensor(x)
    if x.ndim not in (3, 4):
        raise ValueError(f"conv2d: expected a 3D or 4D input, got shape {x.shape}")
    single = x.ndim == 3
    if single:
        x = reshape(x, (1,) + x.shape)
    out = transpose(conv2d_nhwc(transpose(x, (0, 2, 3, 1)), kernels, bias), (0, 3, 1, 2))
    return reshape(out, out.shape[1:]) if single else out


def transpose(a: Tensor, axes) -> Tensor:
    inv = np.argsort(axes)
    return _record(np.ascontiguousarray(a.data.transpose(axes)), (a,),
                   lambda g: (g.transpose(inv),))


def avg_pool2_nhwc(x: Tensor) -> Tensor:
    """2x2 average pooling over the spatial axes of (N, H, W, C); odd edges dropped."""
    xd = x.data
    n, h, w, c = xd.shape
    h2, w2 = h // 2, w // 2
    blocks = xd[:, :2 * h2, :2 * w2, :].reshape(n, h2, 2, w2, 2, c)

    def vjp(g):
        gx = np.zeros_like(xd)
        spread = np.repeat(np.repeat(g, 2, axis=1), 2, axis=2) * 0.25
        gx[:, :2 * h2, :2 * w2, :] = spread
        return (gx,)

    return _record(blocks.mean(axis=(2, 4)), (x,), vjp)
