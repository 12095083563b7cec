"""Encoder, squashed-Gaussian actor and twin-Q critic.

All parameters live in one flat ``dict[str, Tensor]`` keyed by checkpoint
name.  The convolution trunk ``encoder.conv*`` is shared: the critic's
encoder reads it with gradients, the actor's encoder reads a detached copy
of its output, so actor losses never reach the convolutions.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .optim import orthogonal_init
from .tensor import Tensor

LOG_2PI = math.log(2.0 * math.pi)
LOG_2 = math.log(2.0)


@dataclass
class NetConfig:
    n_categories: int = 6
    map_size: int = 64
    conv_channels: int = 32
    n_conv: int = 4
    feature_dim: int = 50
    hidden_dim: int = 1024
    action_dim: int = 2
    log_std_min: float = -20.0
    log_std_max: float = 2.0
    pool: bool = False

    @property
    def in_channels(self) -> int:
        return self.n_categories + 4

    @property
    def trunk_dim(self) -> int:
        side = self.map_size - 2 * self.n_conv
        if side < 1:
            raise ValueError(f"map_size {self.map_size} too small for {self.n_conv} valid 3x3 convs")
        if self.pool:
            side //= 2
        return self.conv_channels * side * side


def _linear_params(prefix, n_out, n_in, rng):
    return {
        f"{prefix}.weight": orthogonal_init((n_out, n_in), rng),
        f"{prefix}.bias": np.zeros(n_out),
    }


def _encoder_head(prefix, cfg, rng):
    p = _linear_params(f"{prefix}.fc", cfg.feature_dim, cfg.trunk_dim, rng)
    p[f"{prefix}.ln.weight"] = np.ones(cfg.feature_dim)
    p[f"{prefix}.ln.bias"] = np.zeros(cfg.feature_dim)
    return p


def _mlp(prefix, n_in, hidden, n_out, rng):
    p = {}
    p.update(_linear_params(f"{prefix}.l1", hidden, n_in, rng))
    p.update(_linear_params(f"{prefix}.l2", hidden, hidden, rng))
    p.update(_linear_params(f"{prefix}.l3", n_out, hidden, rng))
    return p


def init_params(cfg: NetConfig, rng: np.random.Generator) -> dict[str, Tensor]:
    """Fresh online + target parameters; targets start as exact copies."""
    raw: dict[str, np.ndarray] = {}
    cin = cfg.in_channels
    for i in range(1, cfg.n_conv + 1):
        raw[f"encoder.conv{i}.weight"] = orthogonal_init((cfg.conv_channels, cin, 3, 3), rng)
        raw[f"encoder.conv{i}.bias"] = np.zeros(cfg.conv_channels)
        cin = cfg.conv_channels
    raw.update(_encoder_head("encoder", cfg, rng))
    raw.update(_encoder_head("actor_encoder", cfg, rng))
    cond = cfg.feature_dim + cfg.n_categories
    raw.update(_mlp("actor", cond, cfg.hidden_dim, 2 * cfg.action_dim, rng))
    for head in ("critic1", "critic2"):
        raw.update(_mlp(head, cond + cfg.action_dim, cfg.hidden_dim, 1, rng))
    for name in list(raw):
        if name.startswith(("encoder.", "critic")):
            raw["target_" + name] = raw[name].copy()
    return {name: Tensor(v, requires_grad=True, name=name) for name, v in raw.items()}


def group(params: dict[str, Tensor], *prefixes: str) -> dict[str, Tensor]:
    return {k: v for k, v in params.items() if k.startswith(prefixes)}


def critic_params(params):
    return group(params, "encoder.", "critic1.", "critic2.")


def actor_params(params):
    return group(params, "actor_encoder.", "actor.")


def check_state_batch(s, cfg: NetConfig) -> np.ndarray:
    s = np.asarray(s.data if isinstance(s, Tensor) else s, dtype=np.float64)
    if s.ndim == 3:
        s = s[None]
    if s.ndim != 4:
        raise ValueError(f"state must be (C, M, M) or (N, C, M, M), got shape {s.shape}")
    if s.shape[1] != cfg.in_channels:
        raise ValueError(f"state has {s.shape[1]} channels, encoder expects {cfg.in_channels}")
    if s.shape[2] != s.shape[3] or s.shape[2] != cfg.map_size:
        raise ValueError(f"state spatial extent {s.shape[2:]} does not match map_size {cfg.map_size}")
    return s


def conv_trunk(params, s, prefix: str = "encoder", cfg: NetConfig | None = None) -> Tensor:
    """Conv stack on (N, C, M, M) states, flattened to (N, trunk_dim).

    Runs channels-last internally; the state itself is never differentiated.
    """
    s = s.data if isinstance(s, Tensor) else np.asarray(s, dtype=np.float64)
    h = Tensor(np.ascontiguousarray(s.transpose(0, 2, 3, 1)))
    i = 1
    while f"{prefix}.conv{i}.weight" in params:
        h = T.relu(T.conv2d_nhwc(h, params[f"{prefix}.conv{i}.weight"], params[f"{prefix}.conv{i}.bias"]))
        i += 1
    if cfg is not None and cfg.pool:
        h = T.avg_pool2_nhwc(h)
    return h.reshape(h.shape[0], -1)


def encoder_head(params, trunk: Tensor, prefix: str) -> Tensor:
    h = T.linear(trunk, params[f"{prefix}.fc.weight"], params[f"{prefix}.fc.bias"])
    h = T.layernorm(h, params[f"{prefix}.ln.weight"], params[f"{prefix}.ln.bias"])
    return T.tanh(h)


def encode(params, s, cfg: NetConfig, prefix: str = "encoder") -> Tensor:
    """Conv trunk -> FC -> LayerNorm -> tanh, giving (N, feature_dim) in (-1, 1)."""
    s = check_state_batch(s, cfg)
    return encoder_head(params, conv_trunk(params, s, prefix, cfg), prefix)


def _mlp_forward(params, prefix, x):
    h = T.relu(T.linear(x, params[f"{prefix}.l1.weight"], params[f"{prefix}.l1.bias"]))
    h = T.relu(T.linear(h, params[f"{prefix}.l2.weight"], params[f"{prefix}.l2.bias"]))
    return T.linear(h, params[f"{prefix}.l3.weight"], params[f"{prefix}.l3.bias"])


def actor_dist(params, feats: Tensor, g, cfg: NetConfig) -> tuple[Tensor, Tensor]:
    """Mean and clamped log-std of the pre-squash diagonal Gaussian."""
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    out = _mlp_forward(params, "actor", T.concat([feats, Tensor(g)], axis=-1))
    d = cfg.action_dim
    mean = out[:, :d]
    log_std = T.clip(out[:, d:], cfg.log_std_min, cfg.log_std_max)
    return mean, log_std


def squashed_sample(mean: Tensor, log_std: Tensor, noise) -> tuple[Tensor, Tensor]:
    """tanh(mean + std * noise) and its log-density (change of variables included)."""
    noise = np.asarray(noise, dtype=np.float64)
    u = mean + T.exp(log_std) * noise
    a = T.tanh(u)
    gauss = (-0.5 * noise * noise - 0.5 * LOG_2PI) - log_std
    # log(1 - tanh(u)^2) = 2 * (log 2 - u - softplus(-2u))
    log_det = 2.0 * (LOG_2 - u - T.softplus(-2.0 * u))
    return a, (gauss - log_det).sum(axis=-1)


def actor_sample(params, feats: Tensor, g, cfg: NetConfig, rng=None, *,
                 noise=None, deterministic: bool = False) -> tuple[Tensor, Tensor]:
    """Reparameterised goal action in (-1, 1)^2 with its log-probability.

    Exactly one of ``rng`` / ``noise`` is consulted; ``deterministic``
    returns tanh(mean) (noise fixed at zero).
    """
    mean, log_std = actor_dist(params, feats, g, cfg)
    if deterministic:
        noise = np.zeros(mean.shape)
    elif noise is None:
        noise = rng.standard_normal(mean.shape)
    return squashed_sample(mean, log_std, noise)


def critic_q(params, feats: Tensor, g, a, prefix: str = "critic") -> tuple[Tensor, Tensor]:
    g = np.atleast_2d(np.asarray(g, dtype=np.float64))
    a = a if isinstance(a, Tensor) else Tensor(np.atleast_2d(a))
    x = T.concat([feats, Tensor(g), a], axis=-1)
    q1 = _mlp_forward(params, f"{prefix}1", x)
    q2 = _mlp_forward(params, f"{prefix}2", x)
    return q1.reshape(-1), q2.reshape(-1)


def goal_to_cell(a, map_size: int) -> tuple[int, int]:
    """Map a squashed action (ax, ay) in (-1, 1)^2 to a (row, col) map cell."""
    ax, ay = float(a[0]), float(a[1])
    col = int(round((ax + 1.0) / 2.0 * (map_size - 1)))
    row = int(round((ay + 1.0) / 2.0 * (map_size - 1)))
    return min(max(row, 0), map_size - 1), min(max(col, 0), map_size - 1)
