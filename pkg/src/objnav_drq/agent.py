"""Episode orchestration: mapping, long-term goals, local planning, metrics inputs.

The modular agent re-samples a long-term goal from its goal policy every
``goal_every`` steps (or when the local planner asks for it).  Once the
target category shows up in the map the goal is overridden to the nearest
mapped target cell and the goal policy stops being consulted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .drq import Transition, one_hot
from .fmm import PlanningError, dilate, extract_action, extract_path, fmm_solve
from .networks import goal_to_cell
from .scene import Action, Pose, Scene, SceneConfig, geodesic_distance, observe, sample_spawn, step, wrap_angle
from .semantic_map import MapFrame, integrate, new_map, state_tensor

MAX_REPLANS_PER_STEP = 4


@dataclass
class EpisodeConfig:
    map_size: int = 64
    max_steps: int = 500
    goal_every: int = 25
    success_distance: float = 1.0
    success_mode: str = "proximity"       # or "stop"
    dts_mode: str = "geodesic"            # or "euclidean"
    reward_mode: str = "progress"         # or "terminal"
    dilation: int = 1
    unknown_as_obstacle: bool = False
    goal_reached_radius: float = 1.5      # cells, for non-target goals
    min_spawn_distance: float = 1.0
    scene: SceneConfig = field(default_factory=SceneConfig)

    def __post_init__(self):
        if self.success_distance <= 0:
            raise ValueError("success_distance must be positive")
        if self.success_mode not in ("proximity", "stop"):
            raise ValueError(f"unknown success_mode {self.success_mode!r}")
        if self.dts_mode not in ("geodesic", "euclidean"):
            raise ValueError(f"unknown dts_mode {self.dts_mode!r}")
        if self.reward_mode not in ("progress", "terminal"):
            raise ValueError(f"unknown reward_mode {self.reward_mode!r}")


@dataclass
class EpisodeResult:
    success: int
    path_length: float
    shortest_length: float
    final_distance: float
    steps: int
    category: int
    scene_seed: int = -1
    episode: int = -1
    collisions: int = 0
    goals: int = 0
    reward: float = 0.0
    excluded: bool = False

    def __post_init__(self):
        if self.path_length < 0:
            raise ValueError("path length must be non-negative")


@dataclass(frozen=True)
class EpisodeSpec:
    """Everything a paired trial must share: scene, target, spawn, seed."""
    scene: Scene
    category: int
    spawn: Pose
    seed: int
    index: int = 0


def make_episode(scene: Scene, index: int, pairing_seed: int = 0,
                 cfg: EpisodeConfig | None = None) -> EpisodeSpec:
    cfg = cfg or EpisodeConfig()
    ss = np.random.SeedSequence([pairing_seed, scene.seed, index])
    rng = np.random.default_rng(ss)
    cats = scene.categories_present()
    category = cats[int(rng.integers(len(cats)))]
    spawn = sample_spawn(scene, category, rng, cfg.min_spawn_distance)
    return EpisodeSpec(scene, category, spawn, int(ss.generate_state(1)[0]), index)


# -- agents ------------------------------------------------------------------

class GoalPolicy(Protocol):
    def __call__(self, state: np.ndarray, goal: np.ndarray, deterministic: bool) -> np.ndarray: ...


class UniformGoalPolicy:
    """Long-term goals drawn uniformly over the map (untrained reference)."""

    def __init__(self, seed=None):
        self.rng = np.random.default_rng(seed)

    def __call__(self, state, goal, deterministic=False):
        return self.rng.uniform(-1.0, 1.0, size=2)


class RandomAgent:
    """Uniform over the four simulator actions, stop included."""

    uses_map = False

    def __init__(self, seed=None):
        self.rng = np.random.default_rng(seed)

    def reset(self, spec: EpisodeSpec) -> None:
        self.rng = np.random.default_rng([spec.seed, 1])

    def draw(self) -> Action:
        return Action(int(self.rng.integers(4)))


class ModularAgent:
    uses_map = True

    def __init__(self, policy: GoalPolicy, deterministic: bool = True):
        self.policy = policy
        self.deterministic = deterministic
        self._last = None

    def reset(self, spec: EpisodeSpec) -> None:
        self._last = None

    def goal(self, state: np.ndarray, g: np.ndarray) -> np.ndarray:
        """Goal action for ``state``.

        A deterministic policy maps an unchanged state to the same goal, so
        its previous answer is reused instead of running the network again.
        """
        if self.deterministic and self._last is not None and np.array_equal(self._last[0], state):
            return self._last[1]
        a = np.asarray(self.policy(state, g, self.deterministic), dtype=np.float64)
        if self.deterministic:
            self._last = (state, a)
        return a


# -- episode loop --------------------------------------------------------------

@dataclass
class _Decision:
    state: np.ndarray
    action: np.ndarray
    distance: float        # geodesic distance to target at decision time


class _Planner:
    """Caches the current travel-time field and decides when to re-solve."""

    def __init__(self, cfg: EpisodeConfig):
        self.cfg = cfg
        self.field = None
        self.goal = None
        self.is_target = False
        self.goal_age = 0
        self.field_age = 0

    def invalidate(self):
        self.field = None

    def obstacles(self, smap, collisions, agent_cell, target_mask=None, dilation=None):
        dilation = self.cfg.dilation if dilation is None else dilation
        raw = smap.obstacles > 0.5
        if self.cfg.unknown_as_obstacle:
            raw = raw | (smap.explored < 0.5)
        raw = raw | collisions
        plan = dilate(raw, dilation) if dilation > 0 else raw.copy()
        m = raw.shape[0]
        r, c = agent_cell
        if 0 <= r < m and 0 <= c < m:
            # never dilate the agent into a cage
            r0, r1, c0, c1 = max(r - 1, 0), min(r + 2, m), max(c - 1, 0), min(c + 2, m)
            plan[r0:r1, c0:c1] = raw[r0:r1, c0:c1]
            plan[r, c] = False
        if target_mask is not None:
            ring = dilate(target_mask, dilation) if dilation > 0 else target_mask
            plan[ring] = raw[ring]
            plan[target_mask] = False
        return plan

    def solve(self, smap, collisions, agent_cell, goal, target_mask=None):
        """Solve with the configured clearance, shrinking it if that walls the agent in."""
        for dilation in range(self.cfg.dilation, -1, -1):
            obstacles = self.obstacles(smap, collisions, agent_cell, target_mask, dilation)
            self.field = fmm_solve(obstacles, goal, stop_at=agent_cell)
            m = obstacles.shape[0]
            inside = 0 <= agent_cell[0] < m and 0 <= agent_cell[1] < m
            if not inside or np.isfinite(self.field.values[agent_cell]):
                break
        self.field_age = 0


def progress_reward(scene: Scene, before: Pose, after: Pose, category: int) -> float:
    """Metres of geodesic progress toward ``category``; 0 when either end is unreachable."""
    r = geodesic_distance(scene, before, category) - geodesic_distance(scene, after, category)
    return r if math.isfinite(r) else 0.0


def _final_distance(scene: Scene, pose: Pose, category: int, mode: str) -> float:
    if mode == "geodesic":
        return geodesic_distance(scene, pose, category)
    cells = np.argwhere(scene.category == category)
    centres = (cells[:, ::-1] + 0.5) * scene.cell_size
    return float(np.min(np.hypot(centres[:, 0] - pose.x, centres[:, 1] - pose.y)))


def run_episode(spec: EpisodeSpec, agent, cfg: EpisodeConfig | None = None, *,
                on_transition: Callable[[Transition], None] | None = None,
                on_step: Callable[[int, object], None] | None = None) -> EpisodeResult:
    """Roll out one episode; ``on_transition`` receives goal-level transitions.

    Transitions are only produced for goals chosen by the goal policy.  The
    last one ends when the target override takes over (``done``), when the
    agent stops, or at the step limit (bootstrapped).
    """
    cfg = cfg or EpisodeConfig()
    scene, category = spec.scene, spec.category
    scfg = cfg.scene
    agent.reset(spec)
    pose = spec.spawn
    shortest = geodesic_distance(scene, pose, category)
    if not math.isfinite(shortest):
        return EpisodeResult(0, 0.0, math.inf, math.inf, 0, category, scene.seed, spec.index, excluded=True)

    noise_rng = np.random.default_rng([spec.seed, 2])
    odom = pose
    frame = MapFrame.from_spawn(scene, spec.spawn, cfg.map_size)
    smap, _ = new_map(scene.n_categories, cfg.map_size)
    m = cfg.map_size
    visited = np.zeros((m, m))
    collisions_map = np.zeros((m, m), dtype=bool)
    g = one_hot(category, scene.n_categories)
    planner = _Planner(cfg)
    pending: _Decision | None = None
    target_seen = False
    path_length = 0.0
    n_collisions = 0
    n_goals = 0
    total_reward = 0.0
    success = 0
    steps = 0
    # stop mode halts a cell inside the threshold; proximity mode keeps walking
    if cfg.success_mode == "stop":
        target_radius = cfg.success_distance / scene.cell_size - 1.0
    else:
        target_radius = 0.5

    def emit(d: _Decision, s_next, dist_now, done):
        nonlocal total_reward
        if cfg.reward_mode == "progress":
            r = d.distance - dist_now
        else:
            r = (shortest - dist_now) if done else 0.0
        if not math.isfinite(r):
            r = 0.0
        total_reward += r
        if on_transition is not None:
            on_transition(Transition(d.state, d.action, r, s_next, g, g, done))

    def within_success(p):
        return geodesic_distance(scene, p, category) <= cfg.success_distance + 1e-9

    if cfg.success_mode == "proximity" and within_success(pose):
        return EpisodeResult(1, 0.0, shortest, shortest, 0, category, scene.seed, spec.index)

    ended_by_stop = False
    while steps < cfg.max_steps:
        map_pose = frame.to_map(odom)
        cell = map_pose.cell()
        if agent.uses_map or on_step is not None:
            smap = integrate(smap, map_pose, observe(scene, pose, scfg), scene.cell_size)
            if 0 <= cell[0] < m and 0 <= cell[1] < m:
                visited[cell] = 1.0
        if on_step is not None:
            on_step(steps, smap)

        if not agent.uses_map:
            action = agent.draw()
        else:
            target_mask = smap.category_layer(category) > 0.5
            if not target_seen and target_mask.any():
                target_seen = True
                planner.invalidate()
                if pending is not None:
                    emit(pending, state_tensor(smap, map_pose, visited),
                         geodesic_distance(scene, pose, category), True)
                    pending = None
            action = None
            for _ in range(MAX_REPLANS_PER_STEP):
                if target_seen:
                    if planner.field is None or planner.field_age >= cfg.goal_every:
                        planner.solve(smap, collisions_map, cell,
                                      [tuple(x) for x in np.argwhere(target_mask)], target_mask)
                        planner.is_target = True
                else:
                    if planner.goal is None or planner.goal_age >= cfg.goal_every:
                        s = state_tensor(smap, map_pose, visited)
                        dist = geodesic_distance(scene, pose, category)
                        if pending is not None:
                            emit(pending, s, dist, False)
                        a = agent.goal(s, g)
                        pending = _Decision(s, a, dist)
                        n_goals += 1
                        planner.goal = goal_to_cell(a, m)
                        planner.goal_age = 0
                        planner.invalidate()
                    if planner.field is None or planner.field_age >= cfg.goal_every:
                        planner.solve(smap, collisions_map, cell, planner.goal)
                        planner.is_target = False
                radius = target_radius if planner.is_target else cfg.goal_reached_radius
                known = (smap.obstacles > 0.5) | collisions_map
                local = extract_action(planner.field, map_pose, stop_radius=radius, blocked=known,
                                       turn_deg=scfg.turn_deg)
                if local.action is None:
                    if planner.is_target:
                        # a stale collision mark can wall the target off
                        collisions_map[:] = False
                    planner.goal_age = cfg.goal_every
                    planner.invalidate()
                    continue
                if local.reached and not planner.is_target:
                    planner.goal_age = cfg.goal_every
                    continue
                if planner.field_age > 0 and _path_blocked(planner.field, smap, map_pose):
                    planner.invalidate()
                    continue
                action = local.action
                break
            if action is None:
                action = Action.TURN_LEFT
            planner.goal_age += 1
            planner.field_age += 1

        result = step(scene, pose, action, scfg)
        steps += 1
        if result.collision:
            n_collisions += 1
            if agent.uses_map:
                for ahead in _cells_ahead(map_pose):
                    if 0 <= ahead[0] < m and 0 <= ahead[1] < m:
                        collisions_map[ahead] = True
                planner.invalidate()
        elif action == Action.MOVE_FORWARD:
            path_length += scfg.forward_step
            odom = _odometry(odom, pose, result.pose, scfg.pose_noise, noise_rng)
        elif action in (Action.TURN_LEFT, Action.TURN_RIGHT):
            odom = Pose(odom.x, odom.y, wrap_angle(odom.theta + (result.pose.theta - pose.theta)))
        pose = result.pose
        if result.stopped:
            ended_by_stop = True
            success = int(within_success(pose))
            break
        if cfg.success_mode == "proximity" and within_success(pose):
            success = 1
            break

    final = _final_distance(scene, pose, category, cfg.dts_mode)
    if pending is not None:
        map_pose = frame.to_map(odom)
        s_end = state_tensor(smap, map_pose, visited)
        done = bool(success) or ended_by_stop
        emit(pending, s_end, geodesic_distance(scene, pose, category), done)
    return EpisodeResult(success, path_length, shortest, final, steps, category,
                         scene.seed, spec.index, n_collisions, n_goals, total_reward)


def _cells_ahead(map_pose, reach: float = 1.0) -> set:
    """Cells swept by a blocked forward move, excluding the agent's own."""
    here = map_pose.cell()
    out = set()
    for f in np.linspace(0.1, 1.0, 10) * reach:
        cell = (int(math.floor(map_pose.row + f * math.sin(map_pose.theta) + 0.5)),
                int(math.floor(map_pose.col + f * math.cos(map_pose.theta) + 0.5)))
        if cell != here:
            out.add(cell)
    return out


def _path_blocked(field_, smap, map_pose, lookahead: int = 3) -> bool:
    """A stale field routes through a cell the map now knows is blocked."""
    try:
        path = extract_path(field_, map_pose.cell(), max_len=lookahead)
    except PlanningError:
        return True
    return any(smap.obstacles[c] > 0.5 for c in path[1:])


def _odometry(odom: Pose, before: Pose, after: Pose, sigma: float, rng) -> Pose:
    dx, dy = after.x - before.x, after.y - before.y
    if sigma > 0:
        dx, dy = dx + rng.normal(0, sigma), dy + rng.normal(0, sigma)
    return Pose(odom.x + dx, odom.y + dy, odom.theta)
