"""Replay buffer and data-regularised soft actor-critic updates.

RNG consumption is part of the contract (tests replay it):

* target: for each of the ``k_aug`` draws, the augmentation params for the
  whole batch, then one (N, 2) standard-normal action-noise block;
* critic loss: ``m_aug`` augmentation blocks, one per draw;
* actor: one augmentation block, then one action-noise block.

Sampling minibatch indices uses the buffer's own generator.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields

import numpy as np

from . import networks as nets
from . import tensor as T
from .augment import augment_batch
from .optim import Adam, soft_update
from .tensor import Tape, Tensor, backward

logger = logging.getLogger(__name__)


@dataclass
class LearnerConfig:
    gamma: float = 0.99
    batch_size: int = 8
    critic_lr: float = 1e-3
    actor_lr: float = 1e-3
    tau_q: float = 0.01
    tau_enc: float = 0.05
    alpha: float = 0.1
    learn_alpha: bool = False
    alpha_lr: float = 1e-3
    k_aug: int = 2
    m_aug: int = 2
    goal_every: int = 25
    capacity: int = 40000
    augment: str = "shift"
    flip_prob: float = 0.1
    entropy_term: bool = True
    precision: str = "float64"

    def __post_init__(self):
        if self.precision not in ("float64", "float32"):
            raise ValueError(f"precision must be float64 or float32, got {self.precision!r}")
        for name in ("tau_q", "tau_enc"):
            tau = getattr(self, name)
            if not 0.0 < tau <= 1.0:
                raise ValueError(f"{name} must be in (0, 1], got {tau}")
        if self.k_aug < 1 or self.m_aug < 1:
            raise ValueError("k_aug and m_aug must be >= 1")
        if self.batch_size < 1 or self.capacity < self.batch_size:
            raise ValueError("need 1 <= batch_size <= capacity")

    @classmethod
    def field_names(cls):
        return [f.name for f in fields(cls)]


@dataclass
class Transition:
    s: np.ndarray
    a: np.ndarray
    r: float
    s_next: np.ndarray
    g: np.ndarray
    g_next: np.ndarray
    done: bool = False

    def __post_init__(self):
        if not math.isfinite(self.r):
            raise ValueError(f"reward must be finite, got {self.r}")
        if not np.array_equal(self.g, self.g_next):
            raise ValueError("goal category must not change within an episode")


@dataclass
class Batch:
    s: np.ndarray
    a: np.ndarray
    r: np.ndarray
    s_next: np.ndarray
    g: np.ndarray
    g_next: np.ndarray
    done: np.ndarray

    def __len__(self):
        return len(self.r)


def one_hot(category: int, n_categories: int) -> np.ndarray:
    v = np.zeros(n_categories)
    v[category] = 1.0
    return v


class ReplayBuffer:
    """FIFO ring buffer with uniform sampling (with replacement).

    States are stored as uint8 since every state channel is binary.
    """

    def __init__(self, capacity: int = 40000, seed=None):
        self.capacity = capacity
        self.rng = np.random.default_rng(seed)
        self._items: list[Transition] = []
        self._cursor = 0

    def __len__(self) -> int:
        return len(self._items)

    def __getitem__(self, i) -> Transition:
        return self._items[(self._cursor + i) % len(self._items) if len(self._items) == self.capacity else i]

    def push(self, t: Transition) -> None:
        t = Transition(_pack(t.s), np.asarray(t.a, dtype=np.float64), float(t.r), _pack(t.s_next),
                       np.asarray(t.g, dtype=np.float64), np.asarray(t.g_next, dtype=np.float64), bool(t.done))
        if len(self._items) < self.capacity:
            self._items.append(t)
        else:
            self._items[self._cursor] = t
            self._cursor = (self._cursor + 1) % self.capacity

    def sample_indices(self, n: int) -> np.ndarray:
        return self.rng.integers(0, len(self._items), size=n)

    def sample(self, n: int) -> Batch:
        if len(self._items) == 0:
            raise ValueError("cannot sample from an empty buffer")
        items = [self._items[i] for i in self.sample_indices(n)]
        return make_batch(items)


def _pack(s):
    s = np.asarray(s)
    return s if s.dtype == np.uint8 else (s > 0.5).astype(np.uint8)


def make_batch(items) -> Batch:
    return Batch(
        s=np.stack([t.s for t in items]).astype(np.float64),
        a=np.stack([t.a for t in items]),
        r=np.array([t.r for t in items], dtype=np.float64),
        s_next=np.stack([t.s_next for t in items]).astype(np.float64),
        g=np.stack([t.g for t in items]),
        g_next=np.stack([t.g_next for t in items]),
        done=np.array([t.done for t in items], dtype=np.float64),
    )


# -- update maths ------------------------------------------------------------

def single_target(batch: Batch, params, cfg: LearnerConfig, net_cfg: nets.NetConfig,
                  rng: np.random.Generator, alpha: float | None = None) -> np.ndarray:
    """Soft Bellman target from one augmentation draw of ``s_next``.

    The next action comes from the online actor, the value from the target
    critic (target encoder included), clipped by the min over both heads.
    """
    alpha = cfg.alpha if alpha is None else alpha
    s_aug, _ = augment_batch(batch.s_next, cfg.augment, rng, cfg.flip_prob)
    trunk = nets.conv_trunk(params, s_aug, "encoder", net_cfg)
    feats = nets.encoder_head(params, trunk, "actor_encoder")
    noise = rng.standard_normal((len(batch), net_cfg.action_dim))
    a_next, logp = nets.actor_sample(params, feats, batch.g_next, net_cfg, noise=noise)
    t_feats = nets.encoder_head(params, nets.conv_trunk(params, s_aug, "target_encoder", net_cfg),
                                "target_encoder")
    q1, q2 = nets.critic_q(params, t_feats, batch.g_next, a_next.data, prefix="target_critic")
    v = np.minimum(q1.data, q2.data)
    if cfg.entropy_term:
        v = v - alpha * logp.data
    return batch.r + cfg.gamma * (1.0 - batch.done) * v


def compute_target(batch: Batch, params, cfg: LearnerConfig, net_cfg: nets.NetConfig,
                   rng: np.random.Generator, alpha: float | None = None) -> np.ndarray:
    """Targets averaged over ``k_aug`` independent augmentations of s'."""
    if _tape_active():
        raise RuntimeError("compute_target must run outside a Tape")
    acc = single_target(batch, params, cfg, net_cfg, rng, alpha)
    for _ in range(cfg.k_aug - 1):
        acc = acc + single_target(batch, params, cfg, net_cfg, rng, alpha)
    return acc / cfg.k_aug


def _tape_active():
    return bool(T._TAPES)


def critic_loss(batch: Batch, y: np.ndarray, params, cfg: LearnerConfig, net_cfg: nets.NetConfig,
                rng: np.random.Generator) -> Tensor:
    """Mean over N * m_aug of (Q1 - y)^2 + (Q2 - y)^2; must be called inside a Tape."""
    views = [augment_batch(batch.s, cfg.augment, rng, cfg.flip_prob)[0] for _ in range(cfg.m_aug)]
    s_aug = np.concatenate(views) if cfg.m_aug > 1 else views[0]
    reps = cfg.m_aug
    feats = nets.encode(params, s_aug, net_cfg, "encoder")
    q1, q2 = nets.critic_q(params, feats, np.tile(batch.g, (reps, 1)), np.tile(batch.a, (reps, 1)))
    yy = np.tile(y, reps)
    return T.square(q1 - yy).mean() + T.square(q2 - yy).mean()


def actor_loss(batch: Batch, params, cfg: LearnerConfig, net_cfg: nets.NetConfig,
               rng: np.random.Generator, alpha: float | None = None) -> tuple[Tensor, Tensor]:
    """alpha * log pi(a|f(s), g) - min(Q1, Q2), batch mean; returns (loss, log_prob).

    The conv trunk and the critic encoder are evaluated as constants, so
    gradients reach only the actor encoder head and actor MLP (plus the
    critic MLP weights, which the actor optimiser ignores).
    """
    alpha = cfg.alpha if alpha is None else alpha
    s_aug, _ = augment_batch(batch.s, cfg.augment, rng, cfg.flip_prob)
    trunk = nets.conv_trunk(_frozen(params, "encoder.conv"), s_aug, "encoder", net_cfg)
    critic_feats = nets.encoder_head(_frozen(params, "encoder."), trunk, "encoder").detach()
    feats = nets.encoder_head(params, trunk.detach(), "actor_encoder")
    noise = rng.standard_normal((len(batch), net_cfg.action_dim))
    a, logp = nets.actor_sample(params, feats, batch.g, net_cfg, noise=noise)
    q1, q2 = nets.critic_q(params, critic_feats, batch.g, a)
    return (alpha * logp - T.minimum(q1, q2)).mean(), logp


def _frozen(params, prefix):
    return {k: (Tensor(v.data) if k.startswith(prefix) else v) for k, v in params.items()}


def target_pairs(params) -> tuple[dict, dict, dict, dict]:
    """(target_q, online_q, target_enc, online_enc) name-aligned views."""
    tq = {k: v for k, v in params.items() if k.startswith("target_critic")}
    oq = {k: params[k[len("target_"):]] for k in tq}
    te = {k: v for k, v in params.items() if k.startswith("target_encoder.")}
    oe = {k: params[k[len("target_"):]] for k in te}
    return tq, oq, te, oe


class DrQLearner:
    """Owns parameters, optimisers and the replay buffer for one training run."""

    def __init__(self, net_cfg: nets.NetConfig, cfg: LearnerConfig | None = None, seed: int = 0):
        self.net_cfg = net_cfg
        self.cfg = cfg or LearnerConfig()
        root = np.random.SeedSequence(seed)
        init_ss, aug_ss, buf_ss, act_ss = root.spawn(4)
        self.dtype = np.dtype(self.cfg.precision)
        with T.default_dtype(self.dtype):
            self.params = nets.init_params(net_cfg, np.random.default_rng(init_ss))
        self.rng = np.random.default_rng(aug_ss)
        self.act_rng = np.random.default_rng(act_ss)
        self.buffer = ReplayBuffer(self.cfg.capacity, seed=buf_ss)
        self.critic_opt = Adam(nets.critic_params(self.params), lr=self.cfg.critic_lr)
        self.actor_opt = Adam(nets.actor_params(self.params), lr=self.cfg.actor_lr)
        self.log_alpha = Tensor(np.array(math.log(self.cfg.alpha)), requires_grad=True)
        self.alpha_opt = Adam({"log_alpha": self.log_alpha}, lr=self.cfg.alpha_lr)
        self.target_entropy = -float(net_cfg.action_dim)
        self.updates = 0

    @property
    def alpha(self) -> float:
        return math.exp(self.log_alpha.item()) if self.cfg.learn_alpha else self.cfg.alpha

    def push(self, t: Transition) -> None:
        self.buffer.push(t)

    def ready(self) -> bool:
        return len(self.buffer) >= self.cfg.batch_size

    def update_critic(self, batch: Batch | None = None) -> float | None:
        """One critic step plus target soft updates; ``None`` if the buffer is underfull."""
        with T.default_dtype(self.dtype):
            return self._update_critic(batch)

    def _update_critic(self, batch):
        if batch is None:
            if not self.ready():
                logger.debug("critic update skipped: buffer has %d < %d", len(self.buffer), self.cfg.batch_size)
                return None
            batch = self.buffer.sample(self.cfg.batch_size)
        y = compute_target(batch, self.params, self.cfg, self.net_cfg, self.rng, self.alpha)
        with Tape() as tape:
            loss = critic_loss(batch, y, self.params, self.cfg, self.net_cfg, self.rng)
        self.critic_opt.step(backward(tape, loss))
        tq, oq, te, oe = target_pairs(self.params)
        soft_update(tq, oq, self.cfg.tau_q)
        soft_update(te, oe, self.cfg.tau_enc)
        return loss.item()

    def update_actor(self, batch: Batch | None = None) -> float | None:
        with T.default_dtype(self.dtype):
            return self._update_actor(batch)

    def _update_actor(self, batch):
        if batch is None:
            if not self.ready():
                logger.debug("actor update skipped: buffer underfull")
                return None
            batch = self.buffer.sample(self.cfg.batch_size)
        with Tape() as tape:
            loss, logp = actor_loss(batch, self.params, self.cfg, self.net_cfg, self.rng, self.alpha)
        self.actor_opt.step(backward(tape, loss))
        if self.cfg.learn_alpha:
            with Tape() as tape:
                a_loss = (T.exp(self.log_alpha) * Tensor(-logp.data - self.target_entropy)).mean()
            self.alpha_opt.step(backward(tape, a_loss))
        return loss.item()

    def update(self) -> tuple[float | None, float | None]:
        c = self.update_critic()
        a = self.update_actor()
        if c is not None:
            self.updates += 1
        return c, a

    def act(self, state: np.ndarray, category_one_hot: np.ndarray, deterministic: bool = False) -> np.ndarray:
        """Goal action in (-1, 1)^2 for a single (C+4, M, M) state."""
        with T.default_dtype(self.dtype):
            return self._act(state, category_one_hot, deterministic)

    def _act(self, state, category_one_hot, deterministic):
        trunk = nets.conv_trunk(self.params, nets.check_state_batch(state, self.net_cfg), "encoder", self.net_cfg)
        feats = nets.encoder_head(self.params, trunk, "actor_encoder")
        a, _ = nets.actor_sample(self.params, feats, category_one_hot, self.net_cfg, self.act_rng,
                                 deterministic=deterministic)
        return a.data[0].copy()

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data for k, v in self.params.items()}

    def load_state_dict(self, tensors: dict[str, np.ndarray]) -> None:
        for k, v in tensors.items():
            if k not in self.params:
                raise KeyError(f"unexpected tensor {k!r} in checkpoint")
            if v.shape != self.params[k].shape:
                raise ValueError(f"tensor {k!r} has shape {v.shape}, expected {self.params[k].shape}")
            self.params[k].data = np.asarray(v, dtype=self.dtype)
