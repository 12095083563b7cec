"""Adam, orthogonal initialisation and Polyak averaging over named parameters."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor

logger = logging.getLogger(__name__)


def orthogonal_init(shape, rng: np.random.Generator, gain: float = 1.0) -> np.ndarray:
    """Orthogonal matrix of ``shape`` viewed as (fan_out, prod(rest)).

    Whichever of rows/columns is fewer comes out orthonormal.  Same rng
    state in, same bits out.
    """
    shape = tuple(shape)
    if len(shape) < 2:
        raise ValueError(f"orthogonal_init needs at least 2 dims, got {shape}")
    rows = shape[0]
    cols = int(np.prod(shape[1:]))
    flat = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q).reshape(shape)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    skipped: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


class Adam:
    """Adam with bias correction over a dict of named :class:`Tensor` params.

    A call whose gradients contain NaN/inf leaves every parameter untouched
    and bumps ``state.skipped``.
    """

    def __init__(self, params: dict[str, Tensor], lr: float = 1e-3,
                 betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = params
        self.state = AdamState(lr=lr, beta1=betas[0], beta2=betas[1], eps=eps)
        for name, p in params.items():
            self.state.m[name] = np.zeros_like(p.data)
            self.state.v[name] = np.zeros_like(p.data)

    def step(self, grads: dict[Tensor, np.ndarray]) -> bool:
        named = {}
        for name, p in self.params.items():
            g = grads.get(p)
            if g is None:
                continue
            if g.shape != p.data.shape:
                raise ValueError(f"gradient for {name} has shape {g.shape}, expected {p.data.shape}")
            named[name] = g
        if not all(np.all(np.isfinite(g)) for g in named.values()):
            self.state.skipped += 1
            logger.warning("non-finite gradient, Adam step skipped (%d so far)", self.state.skipped)
            return False
        st = self.state
        st.step += 1
        c1 = 1.0 - st.beta1 ** st.step
        c2 = 1.0 - st.beta2 ** st.step
        for name, g in named.items():
            m = st.m[name]
            v = st.v[name]
            m *= st.beta1
            m += (1.0 - st.beta1) * g
            v *= st.beta2
            v += (1.0 - st.beta2) * g * g
            # lr * (m / c1) / (sqrt(v / c2) + eps), with fewer full-size temporaries
            denom = np.sqrt(v / c2)
            denom += st.eps
            upd = m / c1
            upd *= st.lr
            upd /= denom
            p = self.params[name]
            p.data = p.data - upd
        return True


def soft_update(target: dict[str, Tensor], online: dict[str, Tensor], tau: float) -> None:
    """target <- (1 - tau) * target + tau * online, matched by name."""
    if not 0.0 < tau <= 1.0:
        raise ValueError(f"tau must be in (0, 1], got {tau}")
    for name, t in target.items():
        t.data = (1.0 - tau) * t.data + tau * online[name].data
