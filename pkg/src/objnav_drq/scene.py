"""Procedural multi-room scenes and a point robot with a semantic range sensor."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np

from . import container
from .grid import dijkstra, flood_fill, is_connected, traverse

CATEGORY_NAMES = ("chair", "couch", "potted plant", "bed", "toilet", "tv")
FOOTPRINTS = ((1, 1), (1, 2), (2, 1), (2, 2))


class SceneGenerationError(RuntimeError):
    pass


class Action(IntEnum):
    MOVE_FORWARD = 0
    TURN_LEFT = 1
    TURN_RIGHT = 2
    STOP = 3


@dataclass
class SceneConfig:
    width: int = 32
    height: int = 32
    cell_size: float = 0.25
    min_rooms: int = 2
    max_rooms: int = 5
    min_room_side: int = 5
    door_width: int = 3
    n_categories: int = 6
    max_extra_instances: int = 1
    max_retries: int = 60
    fov_deg: float = 79.0
    n_rays: int = 64
    max_depth: float = 5.0
    forward_step: float = 0.25
    turn_deg: float = 30.0
    pose_noise: float = 0.0


@dataclass(frozen=True)
class Pose:
    x: float
    y: float
    theta: float = 0.0


@dataclass
class Observation:
    angles: np.ndarray      # ray offsets from the heading, radians, increasing
    distances: np.ndarray   # metres, in (0, max_depth]
    hit: np.ndarray         # bool, ray ended on an obstacle
    labels: np.ndarray      # category id at the hit cell, -1 for walls / no hit


@dataclass(frozen=True)
class StepResult:
    pose: Pose
    collision: bool = False
    stopped: bool = False


@dataclass(frozen=True, eq=False)
class Scene:
    occupancy: np.ndarray          # (H, W) bool, True = blocked
    category: np.ndarray           # (H, W) int, -1 where no object
    objects: tuple                 # ((category, cells (k, 2) array), ...)
    rooms: tuple                   # ((r0, c0, r1, c1), ...) half-open interiors
    seed: int
    cell_size: float
    n_categories: int
    _fields: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        self.occupancy.setflags(write=False)
        self.category.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.occupancy.shape

    def same_as(self, other: "Scene") -> bool:
        return (np.array_equal(self.occupancy, other.occupancy)
                and np.array_equal(self.category, other.category))

    def cell_of(self, x: float, y: float) -> tuple[int, int]:
        return math.floor(y / self.cell_size), math.floor(x / self.cell_size)

    def cell_center(self, r: int, c: int) -> tuple[float, float]:
        return (c + 0.5) * self.cell_size, (r + 0.5) * self.cell_size

    def is_free(self, x: float, y: float) -> bool:
        r, c = self.cell_of(x, y)
        h, w = self.shape
        return 0 <= r < h and 0 <= c < w and not self.occupancy[r, c]

    def categories_present(self) -> list[int]:
        return sorted({int(cat) for cat, _ in self.objects})

    def distance_field(self, category: int) -> np.ndarray:
        """Geodesic distance in cells from every cell to the nearest ``category`` instance."""
        if category not in self._fields:
            cells = np.argwhere(self.category == category)
            if len(cells) == 0:
                raise ValueError(f"category {category} is not present in scene {self.seed}")
            self._fields[category] = dijkstra(~self.occupancy, [tuple(c) for c in cells])
        return self._fields[category]

    # -- serialisation -------------------------------------------------------
    def to_tensors(self) -> dict[str, np.ndarray]:
        objs = [(cat, r, c, i) for i, (cat, cells) in enumerate(self.objects) for r, c in cells]
        return {
            "meta": np.array([self.seed, self.cell_size, self.n_categories], dtype=np.float64),
            "occupancy": self.occupancy.astype(np.float32),
            "object_cells": np.array(objs, dtype=np.float32).reshape(-1, 4),
            "rooms": np.array(self.rooms, dtype=np.float32).reshape(-1, 4),
        }

    @classmethod
    def from_tensors(cls, t: dict[str, np.ndarray]) -> "Scene":
        seed, cell_size, n_cat = t["meta"]
        occ = t["occupancy"] > 0.5
        category = np.full(occ.shape, -1, dtype=np.int64)
        objects = {}
        for cat, r, c, i in t["object_cells"].astype(np.int64):
            category[r, c] = cat
            objects.setdefault(i, (int(cat), []))[1].append((r, c))
        objs = tuple((cat, np.array(cells)) for _, (cat, cells) in sorted(objects.items()))
        rooms = tuple(tuple(int(v) for v in room) for room in t["rooms"])
        return cls(occ, category, objs, rooms, int(seed), float(cell_size), int(n_cat))

    def save(self, path) -> None:
        container.save(path, self.to_tensors())

    @classmethod
    def load(cls, path) -> "Scene":
        return cls.from_tensors(container.load(path))


# -- generation --------------------------------------------------------------

def _split_rooms(cfg: SceneConfig, rng: np.random.Generator):
    h, w = cfg.height, cfg.width
    occ = np.zeros((h, w), dtype=bool)
    occ[0, :] = occ[-1, :] = True
    occ[:, 0] = occ[:, -1] = True
    leaves = [(1, 1, h - 1, w - 1)]
    doors: list[tuple[int, int]] = []
    target = int(rng.integers(cfg.min_rooms, cfg.max_rooms + 1))
    min_side = cfg.min_room_side
    while len(leaves) < target:
        options = []
        for i, (r0, c0, r1, c1) in enumerate(leaves):
            if r1 - r0 >= 2 * min_side + 1:
                options.append((i, 0))
            if c1 - c0 >= 2 * min_side + 1:
                options.append((i, 1))
        if not options:
            break
        # prefer splitting the largest room
        areas = np.array([(leaves[i][2] - leaves[i][0]) * (leaves[i][3] - leaves[i][1]) for i, _ in options], float)
        pick = options[int(rng.choice(len(options), p=areas / areas.sum()))]
        i, axis = pick
        r0, c0, r1, c1 = leaves.pop(i)
        for _ in range(20):
            # a new wall must not end beside an existing doorway
            if axis == 0:
                cut = int(rng.integers(r0 + min_side, r1 - min_side))
                bad = any(dc in (c0 - 1, c1) and abs(dr - cut) <= 1 for dr, dc in doors)
            else:
                cut = int(rng.integers(c0 + min_side, c1 - min_side))
                bad = any(dr in (r0 - 1, r1) and abs(dc - cut) <= 1 for dr, dc in doors)
            if not bad:
                break
        else:
            leaves.append((r0, c0, r1, c1))
            break
        if axis == 0:
            occ[cut, c0:c1] = True
            start = int(rng.integers(c0, c1 - cfg.door_width + 1))
            gap = [(cut, c) for c in range(start, start + cfg.door_width)]
            leaves += [(r0, c0, cut, c1), (cut + 1, c0, r1, c1)]
        else:
            occ[r0:r1, cut] = True
            start = int(rng.integers(r0, r1 - cfg.door_width + 1))
            gap = [(r, cut) for r in range(start, start + cfg.door_width)]
            leaves += [(r0, c0, r1, cut), (r0, cut + 1, r1, c1)]
        for cell in gap:
            occ[cell] = False
        doors += gap
    return occ, leaves, doors


def _near_door(r, c, doors, margin=1):
    return any(abs(r - dr) <= margin and abs(c - dc) <= margin for dr, dc in doors)


def generate_scene(cfg: SceneConfig | None = None, seed: int = 0) -> Scene:
    """Deterministic multi-room scene with every category placed at least once.

    Free space is 4-connected; raises :class:`SceneGenerationError` naming
    the category that could not be placed within ``max_retries`` attempts.
    """
    cfg = cfg or SceneConfig()
    if cfg.n_categories > len(CATEGORY_NAMES):
        raise ValueError(f"at most {len(CATEGORY_NAMES)} categories are defined")
    rng = np.random.default_rng(seed)
    for _ in range(cfg.max_retries):
        occ, rooms, doors = _split_rooms(cfg, rng)
        if is_connected(~occ):
            break
    else:
        raise SceneGenerationError(f"seed {seed}: could not build a connected floor plan")
    category = np.full(occ.shape, -1, dtype=np.int64)
    objects = []
    plan = [c for c in range(cfg.n_categories)]
    plan += [c for c in range(cfg.n_categories) if rng.random() < 0.5 and cfg.max_extra_instances > 0]
    for cat in plan:
        for _ in range(cfg.max_retries):
            r0, c0, r1, c1 = rooms[int(rng.integers(len(rooms)))]
            fh, fw = FOOTPRINTS[int(rng.integers(len(FOOTPRINTS)))]
            if r1 - r0 < fh + 2 or c1 - c0 < fw + 2:
                continue
            r = int(rng.integers(r0, r1 - fh + 1))
            c = int(rng.integers(c0, c1 - fw + 1))
            cells = [(r + i, c + j) for i in range(fh) for j in range(fw)]
            if any(occ[cell] or _near_door(*cell, doors) for cell in cells):
                continue
            trial = occ.copy()
            for cell in cells:
                trial[cell] = True
            if not is_connected(~trial):
                continue
            occ = trial
            for cell in cells:
                category[cell] = cat
            objects.append((cat, np.array(cells)))
            break
        else:
            if cat in [o[0] for o in objects]:
                continue
            raise SceneGenerationError(
                f"seed {seed}: could not place category {cat} ({CATEGORY_NAMES[cat]}) "
                f"after {cfg.max_retries} attempts")
    return Scene(occ, category, tuple(objects), tuple(rooms), seed, cfg.cell_size, cfg.n_categories)


# -- robot -------------------------------------------------------------------

def wrap_angle(theta: float) -> float:
    return math.remainder(theta, 2.0 * math.pi)


def step(scene: Scene, pose: Pose, action: Action, cfg: SceneConfig | None = None) -> StepResult:
    """Apply one discrete action.  Blocked forward moves leave the pose unchanged."""
    cfg = cfg or SceneConfig()
    action = Action(action)
    if action == Action.STOP:
        return StepResult(pose, stopped=True)
    if action in (Action.TURN_LEFT, Action.TURN_RIGHT):
        sign = 1.0 if action == Action.TURN_LEFT else -1.0
        return StepResult(Pose(pose.x, pose.y, wrap_angle(pose.theta + sign * math.radians(cfg.turn_deg))))
    nx = pose.x + cfg.forward_step * math.cos(pose.theta)
    ny = pose.y + cfg.forward_step * math.sin(pose.theta)
    for f in np.linspace(0.0, 1.0, 11)[1:]:
        if not scene.is_free(pose.x + f * (nx - pose.x), pose.y + f * (ny - pose.y)):
            return StepResult(pose, collision=True)
    return StepResult(Pose(nx, ny, pose.theta))


def ray_offsets(cfg: SceneConfig) -> np.ndarray:
    half = math.radians(cfg.fov_deg) / 2.0
    return np.linspace(-half, half, cfg.n_rays)


def observe(scene: Scene, pose: Pose, cfg: SceneConfig | None = None) -> Observation:
    """Cast the sensor fan; each ray stops at the first blocked cell it enters."""
    cfg = cfg or SceneConfig()
    offsets = ray_offsets(cfg)
    cs = scene.cell_size
    t_hit, hr, hc, _ = traverse(pose.x / cs, pose.y / cs, pose.theta + offsets,
                                cfg.max_depth / cs, blocked=scene.occupancy)
    hit = np.isfinite(t_hit)
    dist = np.where(hit, t_hit * cs, cfg.max_depth)
    dist = np.minimum(np.maximum(dist, 1e-9), cfg.max_depth)
    labels = np.full(len(offsets), -1, dtype=np.int64)
    h, w = scene.shape
    inside = hit & (hr >= 0) & (hr < h) & (hc >= 0) & (hc < w)
    labels[inside] = scene.category[hr[inside], hc[inside]]
    return Observation(offsets, dist, hit, labels)


def geodesic_distance(scene: Scene, pose: Pose, category: int) -> float:
    """Metres from the pose's cell to the nearest ``category`` cell; ``inf`` if unreachable."""
    r, c = scene.cell_of(pose.x, pose.y)
    return float(scene.distance_field(category)[r, c]) * scene.cell_size


def sample_spawn(scene: Scene, category: int, rng: np.random.Generator,
                 min_distance: float = 1.0) -> Pose:
    """Random reachable free-cell centre farther than ``min_distance`` from the target.

    Headings are multiples of 90 degrees so the map frame stays cell-aligned.
    """
    field_ = scene.distance_field(category) * scene.cell_size
    ok = (~scene.occupancy) & np.isfinite(field_) & (field_ > min_distance)
    cells = np.argwhere(ok)
    if len(cells) == 0:
        raise ValueError(f"no valid spawn for category {category} in scene {scene.seed}")
    r, c = cells[int(rng.integers(len(cells)))]
    x, y = scene.cell_center(int(r), int(c))
    return Pose(x, y, wrap_angle(math.pi / 2.0 * int(rng.integers(4))))


def reachable_free(scene: Scene, start: tuple[int, int]) -> np.ndarray:
    return flood_fill(~scene.occupancy, start)
