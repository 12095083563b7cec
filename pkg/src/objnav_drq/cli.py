"""Command-line entry point: ``objnav-drq <command> ...``."""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import container
from .config import load_config
from .experiment import load_checkpoint, report, run_eval, train
from .fmm import PlanningError, extract_path, fmm_solve, path_length
from .scene import Scene, SceneConfig, generate_scene

logger = logging.getLogger("objnav_drq")


def _cell(text: str) -> tuple[int, int]:
    try:
        r, c = (int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected r,c got {text!r}") from exc
    return r, c


def cmd_generate(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    cfg = SceneConfig()
    for i in range(args.count):
        seed = args.seed + i
        scene = generate_scene(cfg, seed)
        scene.save(out / f"scene_{seed:06d}.odrq")
    print(f"wrote {args.count} scenes to {out}")
    return 0


def cmd_train(args) -> int:
    # precedence: --seed, then OBJNAV_SEED, then the config file
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.steps is not None:
        cfg = cfg.replace(steps=args.steps)

    def progress(r):
        if r.episodes % 10 == 0:
            logger.info("episodes %d  env steps %d  updates %d", r.episodes, r.env_steps, r.updates)

    result = train(cfg, args.out, progress=progress)
    print(f"trained {result.env_steps} steps over {result.episodes} episodes "
          f"({result.updates} updates); wrote {args.out}")
    return 0


def _load_scenes(directory) -> list[Scene]:
    paths = sorted(Path(directory).glob("*.odrq"))
    if not paths:
        raise FileNotFoundError(f"no .odrq scenes in {directory}")
    return [Scene.load(p) for p in paths]


def cmd_eval(args) -> int:
    cfg = load_config(args.config)
    learner = load_checkpoint(args.checkpoint, cfg)
    scenes = _load_scenes(args.scenes)
    out = args.out or str(Path(args.checkpoint).resolve().parent)
    summary = run_eval(learner, scenes, args.episodes, cfg, paired_with=args.paired_with, out_dir=out)
    for method, s in summary.items():
        print(f"{method:<10} success {s['success']:.3f}  spl {s['spl']:.3f}  dts {s['dts']:.3f}  "
              f"({s['episodes']} episodes, {s['excluded']} excluded)")
    return 0


def cmd_report(args) -> int:
    print(report(args.in_dir))
    return 0


def cmd_plan(args) -> int:
    scene = Scene.load(args.scene)
    field_ = fmm_solve(scene.occupancy, args.goal)
    print(f"goal {field_.sources[0]}  reachable cells {int(np.isfinite(field_.values).sum())}")
    if args.start is not None:
        try:
            path = extract_path(field_, args.start)
        except PlanningError as exc:
            print(f"no path: {exc}")
            return 1
        print(f"path {len(path) - 1} moves, length {path_length(path) * scene.cell_size:.3f} m")
        print(" ".join(f"{r},{c}" for r, c in path))
    if args.out:
        container.save(args.out, field_.to_tensors())
        print(f"wrote field to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="objnav-drq", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate-scenes", help="write procedural scenes")
    g.add_argument("--count", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    t = sub.add_parser("train", help="train the goal policy")
    t.add_argument("--config", default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--steps", type=int, default=None)
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="evaluate a checkpoint on saved scenes")
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scenes", required=True)
    e.add_argument("--episodes", type=int, default=100)
    e.add_argument("--paired-with", default="random", choices=["random", "none"])
    e.add_argument("--config", default=None)
    e.add_argument("--out", default=None)
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("report", help="aggregate eval CSVs")
    r.add_argument("--in", dest="in_dir", required=True)
    r.set_defaults(func=cmd_report)

    pl = sub.add_parser("plan", help="solve a travel-time field on a scene")
    pl.add_argument("--scene", required=True)
    pl.add_argument("--goal", type=_cell, required=True)
    pl.add_argument("--start", type=_cell, default=None)
    pl.add_argument("--out", default=None)
    pl.set_defaults(func=cmd_plan)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "paired_with", None) == "none":
        args.paired_with = None
    try:
        return args.func(args)
    except (FileNotFoundError, ValueError, container.ContainerError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
