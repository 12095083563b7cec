"""Training runs, paired evaluation and result files."""
from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container
from .agent import EpisodeResult, ModularAgent, RandomAgent, make_episode, run_episode
from .config import RunConfig
from .drq import DrQLearner
from .metrics import dts, spl_term, summarize
from .networks import NetConfig
from .scene import Scene, generate_scene

logger = logging.getLogger(__name__)

TRAIN_COLUMNS = ("step", "critic_loss", "actor_loss", "episode_reward", "success", "spl", "dts")
EVAL_COLUMNS = ("method", "scene_seed", "episode", "category", "success", "spl", "dts",
                "path_length", "shortest_length", "final_distance", "steps")
NET_META_FIELDS = ("n_categories", "map_size", "conv_channels", "n_conv", "feature_dim",
                   "hidden_dim", "action_dim", "pool")


def fmt(x) -> str:
    """Stable text for CSV cells (empty for missing values)."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(round(float(x), 10))


def scenes_for(seeds, cfg: RunConfig) -> list[Scene]:
    scfg = cfg.scene_config()
    return [generate_scene(scfg, int(s)) for s in seeds]


# -- checkpoints -------------------------------------------------------------

def save_checkpoint(path, learner: DrQLearner) -> None:
    tensors = dict(learner.state_dict())
    nc = learner.net_cfg
    tensors["meta.net"] = np.array([float(getattr(nc, k)) for k in NET_META_FIELDS])
    container.save(path, tensors)


def load_checkpoint(path, cfg: RunConfig | None = None) -> DrQLearner:
    tensors = container.load(path)
    meta = tensors.pop("meta.net", None)
    if meta is None:
        net_cfg = (cfg or RunConfig()).net_config()
    else:
        values = {k: int(round(v)) for k, v in zip(NET_META_FIELDS, meta)}
        values["pool"] = bool(values["pool"])
        net_cfg = NetConfig(**values)
    lcfg = (cfg or RunConfig()).learner_config()
    learner = DrQLearner(net_cfg, lcfg, seed=(cfg.seed if cfg else 0))
    learner.load_state_dict(tensors)
    return learner


# -- training ----------------------------------------------------------------

@dataclass
class TrainResult:
    learner: DrQLearner
    rows: list = field(default_factory=list)
    env_steps: int = 0
    episodes: int = 0
    updates: int = 0

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRAIN_COLUMNS)
        for row in self.rows:
            w.writerow([fmt(row[k]) for k in TRAIN_COLUMNS])
        return buf.getvalue()


def train(cfg: RunConfig, out_dir=None, scenes: list[Scene] | None = None, progress=None) -> TrainResult:
    """Collect ``cfg.steps`` environment steps, updating once per stored transition.

    One CSV row per episode; losses are the mean over that episode's
    updates (blank when none ran).
    """
    scenes = scenes if scenes is not None else scenes_for(cfg.train_scenes, cfg)
    if not scenes:
        raise ValueError("training needs at least one scene")
    learner = DrQLearner(cfg.net_config(), cfg.learner_config(), seed=cfg.seed)
    ecfg = cfg.episode_config()
    agent = ModularAgent(learner.act, deterministic=False)
    result = TrainResult(learner)
    ep = 0
    while result.env_steps < cfg.steps:
        remaining = cfg.steps - result.env_steps
        ecfg.max_steps = min(cfg.max_steps, remaining)
        scene = scenes[ep % len(scenes)]
        spec = make_episode(scene, ep // len(scenes), pairing_seed=cfg.seed, cfg=ecfg)
        c_losses, a_losses = [], []

        def on_transition(t):
            learner.push(t)
            c, a = learner.update()
            if c is not None:
                c_losses.append(c)
                a_losses.append(a)

        res = run_episode(spec, agent, ecfg, on_transition=on_transition)
        result.env_steps += res.steps
        result.updates += len(c_losses)
        result.episodes += 1
        ep += 1
        result.rows.append({
            "step": result.env_steps,
            "critic_loss": float(np.mean(c_losses)) if c_losses else None,
            "actor_loss": float(np.mean(a_losses)) if a_losses else None,
            "episode_reward": res.reward,
            "success": res.success,
            "spl": spl_term(res),
            "dts": dts(res, cfg.success_distance),
        })
        if progress is not None:
            progress(result)
        if res.steps == 0:
            # a degenerate spawn cannot consume the step budget; avoid spinning
            result.env_steps += 1
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "train.csv").write_text(result.csv_text(), encoding="utf-8")
        (out / "config.txt").write_text(cfg.to_text(), encoding="utf-8")
        save_checkpoint(out / "checkpoint.odrq", learner)
    return result


# -- evaluation --------------------------------------------------------------

def evaluate(agents: dict, scenes: list[Scene], episodes: int, cfg: RunConfig) -> dict[str, list[EpisodeResult]]:
    """Paired trial: every agent sees the same (scene, target, spawn) draws."""
    ecfg = cfg.episode_config()
    out = {name: [] for name in agents}
    for scene in scenes:
        for i in range(episodes):
            spec = make_episode(scene, i, pairing_seed=cfg.seed + 7919, cfg=ecfg)
            for name, agent in agents.items():
                out[name].append(run_episode(spec, agent, ecfg))
    return out


def eval_rows(results: dict[str, list[EpisodeResult]], success_distance: float = 1.0) -> list[dict]:
    rows = []
    for method, rs in results.items():
        for r in rs:
            rows.append({
                "method": method, "scene_seed": r.scene_seed, "episode": r.episode,
                "category": r.category, "success": r.success, "spl": spl_term(r),
                "dts": dts(r, success_distance), "path_length": r.path_length,
                "shortest_length": r.shortest_length, "final_distance": r.final_distance,
                "steps": r.steps,
            })
    return rows


def write_eval_csv(path, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EVAL_COLUMNS)
        for row in rows:
            w.writerow([row["method"]] + [fmt(row[k]) for k in EVAL_COLUMNS[1:]])


def trained_agent(learner: DrQLearner) -> ModularAgent:
    return ModularAgent(learner.act, deterministic=True)


def run_eval(learner: DrQLearner, scenes: list[Scene], episodes: int, cfg: RunConfig,
             paired_with: str | None = "random", out_dir=None) -> dict[str, dict]:
    agents = {"trained": trained_agent(learner)}
    if paired_with == "random":
        agents["random"] = RandomAgent()
    elif paired_with:
        raise ValueError(f"unknown baseline {paired_with!r}")
    results = evaluate(agents, scenes, episodes, cfg)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_eval_csv(out / "eval.csv", eval_rows(results, cfg.success_distance))
    return {k: summarize(v, cfg.success_distance) for k, v in results.items()}


# -- report ------------------------------------------------------------------

def read_eval_csvs(in_dir) -> list[dict]:
    rows = []
    paths = sorted(Path(in_dir).rglob("eval.csv"))
    if not paths:
        raise FileNotFoundError(f"no eval.csv under {in_dir}")
    for path in paths:
        with open(path, newline="", encoding="utf-8") as fh:
            rows.extend(csv.DictReader(fh))
    return rows


def report(in_dir) -> str:
    """Success / SPL / DTS table per method from every eval.csv below ``in_dir``."""
    rows = read_eval_csvs(in_dir)
    by_method: dict[str, list] = {}
    for row in rows:
        by_method.setdefault(row["method"], []).append(row)
    lines = [f"{'method':<10} {'episodes':>8} {'success':>8} {'spl':>8} {'dts':>8}"]
    for method in sorted(by_method):
        rs = by_method[method]
        s = np.mean([float(r["success"]) for r in rs])
        p = np.mean([float(r["spl"]) for r in rs])
        d = np.mean([float(r["dts"]) for r in rs])
        lines.append(f"{method:<10} {len(rs):>8d} {s:>8.3f} {p:>8.3f} {d:>8.3f}")
    return "\n".join(lines)
