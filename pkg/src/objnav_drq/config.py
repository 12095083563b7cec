"""Flat ``key = value`` run configuration.

One setting per line, ``#`` starts a comment.  Keys are field names of
:class:`RunConfig`, optionally prefixed by a section (``learner.gamma``,
``augment.kind``).  ``OBJNAV_SEED`` in the environment overrides ``seed``.
"""
from __future__ import annotations

import os
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from .agent import EpisodeConfig
from .drq import LearnerConfig
from .networks import NetConfig
from .scene import SceneConfig

SEED_ENV = "OBJNAV_SEED"

ALIASES = {
    "augment.kind": "augment",
    "augment.flip_prob": "flip_prob",
    "target.entropy_term": "entropy_term",
}


class ConfigError(ValueError):
    pass


def _seed_list(text: str) -> list[int]:
    """'0-9' or '3,5,8' or a mix."""
    out = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


@dataclass
class RunConfig:
    seed: int = 0
    mode: str = "train"
    steps: int = 30000
    train_scenes: list = field(default_factory=lambda: list(range(10)))
    eval_scenes: list = field(default_factory=lambda: list(range(1000, 1005)))
    episodes_per_scene: int = 100
    # episode
    success_distance: float = 1.0
    max_steps: int = 500
    goal_every: int = 25
    success_mode: str = "proximity"
    dts_mode: str = "geodesic"
    reward_mode: str = "progress"
    dilation: int = 1
    unknown_as_obstacle: bool = False
    # scene / map
    n_categories: int = 6
    map_size: int = 64
    cell_size: float = 0.25
    pose_noise: float = 0.0
    # networks
    conv_channels: int = 32
    n_conv: int = 4
    feature_dim: int = 50
    hidden_dim: int = 1024
    pool: bool = False
    # learner
    gamma: float = 0.99
    batch_size: int = 8
    critic_lr: float = 1e-3
    actor_lr: float = 1e-3
    tau_q: float = 0.01
    tau_enc: float = 0.05
    alpha: float = 0.1
    learn_alpha: bool = False
    k_aug: int = 2
    m_aug: int = 2
    capacity: int = 40000
    augment: str = "shift"
    flip_prob: float = 0.1
    entropy_term: bool = True
    precision: str = "float64"

    def __post_init__(self):
        if self.mode not in ("train", "eval", "random-baseline"):
            raise ConfigError(f"mode must be train, eval or random-baseline, got {self.mode!r}")
        if self.success_distance <= 0:
            raise ConfigError("success_distance must be positive")
        if self.steps < 0 or self.episodes_per_scene < 0:
            raise ConfigError("steps and episodes_per_scene must be non-negative")

    # -- derived configs -----------------------------------------------------
    def scene_config(self) -> SceneConfig:
        return SceneConfig(n_categories=self.n_categories, cell_size=self.cell_size,
                           pose_noise=self.pose_noise)

    def net_config(self) -> NetConfig:
        return NetConfig(n_categories=self.n_categories, map_size=self.map_size,
                         conv_channels=self.conv_channels, n_conv=self.n_conv,
                         feature_dim=self.feature_dim, hidden_dim=self.hidden_dim, pool=self.pool)

    def learner_config(self) -> LearnerConfig:
        names = LearnerConfig.field_names()
        return LearnerConfig(**{k: v for k, v in asdict(self).items() if k in names})

    def episode_config(self) -> EpisodeConfig:
        return EpisodeConfig(map_size=self.map_size, max_steps=self.max_steps, goal_every=self.goal_every,
                             success_distance=self.success_distance, success_mode=self.success_mode,
                             dts_mode=self.dts_mode, reward_mode=self.reward_mode, dilation=self.dilation,
                             unknown_as_obstacle=self.unknown_as_obstacle, scene=self.scene_config())

    # -- text form -------------------------------------------------------------
    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, list):
                v = ",".join(str(x) for x in v)
            elif isinstance(v, bool):
                v = "true" if v else "false"
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines) + "\n"

    def replace(self, **changes) -> "RunConfig":
        data = asdict(self)
        data.update(changes)
        return RunConfig(**data)


def _convert(name: str, raw: str, default):
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            return _seed_list(raw)
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


def parse_config(text: str, base: RunConfig | None = None) -> RunConfig:
    base = base or RunConfig()
    defaults = {f.name: getattr(base, f.name) for f in fields(base)}
    values = dict(defaults)
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        name = ALIASES.get(key, key)
        if name not in defaults and "." in name:
            name = name.rsplit(".", 1)[1]
        if name not in defaults:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        values[name] = _convert(key, raw, defaults[name])
    return RunConfig(**values)


def load_config(path=None, env=None) -> RunConfig:
    """Read a config file (or defaults) and apply the seed override."""
    cfg = parse_config(Path(path).read_text(encoding="utf-8")) if path else RunConfig()
    return apply_env(cfg, env)


def apply_env(cfg: RunConfig, env=None) -> RunConfig:
    env = os.environ if env is None else env
    raw = env.get(SEED_ENV)
    if raw is None or raw == "":
        return cfg
    try:
        return cfg.replace(seed=int(raw))
    except ValueError as exc:
        raise ConfigError(f"{SEED_ENV} must be an integer, got {raw!r}") from exc
