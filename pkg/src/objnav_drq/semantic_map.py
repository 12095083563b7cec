"""Allocentric semantic map built from range/label observations.

Map poses use *centred* cell coordinates: cell ``(r, c)`` is the unit square
centred on ``(r, c)``, so the start pose ``(M/2, M/2, 0)`` sits at the centre
of cell ``(M/2, M/2)``.  Channel layout: 0 obstacles, 1 explored, 2.. one
per category.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .grid import traverse
from .scene import Observation, Pose, Scene

OBSTACLE, EXPLORED = 0, 1


@dataclass(frozen=True)
class MapPose:
    row: float
    col: float
    theta: float = 0.0

    def cell(self) -> tuple[int, int]:
        return int(math.floor(self.row + 0.5)), int(math.floor(self.col + 0.5))


@dataclass
class SemanticMap:
    grid: np.ndarray  # (C + 2, M, M) in [0, 1]

    @property
    def n_categories(self) -> int:
        return self.grid.shape[0] - 2

    @property
    def size(self) -> int:
        return self.grid.shape[-1]

    @property
    def obstacles(self) -> np.ndarray:
        return self.grid[OBSTACLE]

    @property
    def explored(self) -> np.ndarray:
        return self.grid[EXPLORED]

    def category_layer(self, category: int) -> np.ndarray:
        return self.grid[2 + category]

    def copy(self) -> "SemanticMap":
        return SemanticMap(self.grid.copy())

    def to_tensors(self) -> dict[str, np.ndarray]:
        return {"semantic_map": self.grid.astype(np.float32)}

    def save_pgm(self, directory, stem: str = "map") -> list:
        """One binary PGM (P5) per channel; returns the written paths."""
        from pathlib import Path

        out = []
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for k, layer in enumerate(self.grid):
            path = d / f"{stem}_ch{k}.pgm"
            pix = (np.clip(layer, 0, 1) * 255).astype(np.uint8)
            header = f"P5\n{pix.shape[1]} {pix.shape[0]}\n255\n".encode("ascii")
            path.write_bytes(header + pix.tobytes())
            out.append(path)
        return out


def new_map(n_categories: int, size: int) -> tuple[SemanticMap, MapPose]:
    if size < 16:
        raise ValueError(f"map size must be >= 16, got {size}")
    if n_categories < 1:
        raise ValueError(f"need at least one category, got {n_categories}")
    return SemanticMap(np.zeros((n_categories + 2, size, size))), MapPose(size / 2, size / 2, 0.0)


@dataclass(frozen=True)
class MapFrame:
    """World <-> map transform fixed at episode start.

    The map is centred on the spawn cell and rotated by the spawn heading
    (a multiple of 90 degrees), so map cells stay aligned with scene cells.
    """

    spawn_row: int
    spawn_col: int
    quarter_turns: int
    size: int
    cell_size: float

    @classmethod
    def from_spawn(cls, scene: Scene, spawn: Pose, size: int) -> "MapFrame":
        r, c = scene.cell_of(spawn.x, spawn.y)
        k = round(spawn.theta / (math.pi / 2.0))
        if abs(spawn.theta - k * math.pi / 2.0) > 1e-9:
            raise ValueError("spawn heading must be a multiple of 90 degrees")
        return cls(r, c, k % 4, size, scene.cell_size)

    def _rot(self, dx, dy):
        # rotate a world displacement by -k * 90 degrees (exact integer matrix)
        k = self.quarter_turns
        cos_k, sin_k = ((1, 0), (0, 1), (-1, 0), (0, -1))[k]
        return cos_k * dx + sin_k * dy, -sin_k * dx + cos_k * dy

    def to_map(self, pose: Pose) -> MapPose:
        cs = self.cell_size
        dx = pose.x / cs - (self.spawn_col + 0.5)
        dy = pose.y / cs - (self.spawn_row + 0.5)
        mx, my = self._rot(dx, dy)
        theta = math.remainder(pose.theta - self.quarter_turns * math.pi / 2.0, 2.0 * math.pi)
        return MapPose(self.size / 2 + my, self.size / 2 + mx, theta)

    def cell_to_map(self, rows, cols):
        """Scene cell indices -> map cell indices (may fall outside the map)."""
        mx, my = self._rot(np.asarray(cols) - self.spawn_col, np.asarray(rows) - self.spawn_row)
        return my + self.size // 2, mx + self.size // 2


def ray_cells(map_pose: MapPose, obs: Observation, cell_size: float):
    """Cells each ray passes through, ending at its hit cell.

    Returns (rows, cols, is_hit_cell, ray_id) in map indices, unclipped.
    """
    x0, y0 = map_pose.col + 0.5, map_pose.row + 0.5
    limit = obs.distances / cell_size
    # a hit ray ends exactly on entering its obstacle cell, so allow a hair of slack
    _, _, _, visited = traverse(x0, y0, map_pose.theta + obs.angles, limit + 1e-7, collect=True)
    rows = np.concatenate([v[0] for v in visited])
    cols = np.concatenate([v[1] for v in visited])
    ids = np.concatenate([v[2] for v in visited])
    # the last cell of every ray that reported a hit is its obstacle cell
    last = np.zeros(len(ids), dtype=bool)
    _, first_rev = np.unique(ids[::-1], return_index=True)
    last_idx = len(ids) - 1 - first_rev
    last[last_idx] = True
    is_hit = last & obs.hit[ids]
    return rows, cols, is_hit, ids


def integrate(smap: SemanticMap, map_pose: MapPose, obs: Observation, cell_size: float = 0.25) -> SemanticMap:
    """Fuse one observation (sticky OR).  Cells beyond the map border are dropped."""
    grid = smap.grid.copy()
    m = smap.size
    rows, cols, is_hit, ids = ray_cells(map_pose, obs, cell_size)
    inside = (rows >= 0) & (rows < m) & (cols >= 0) & (cols < m)
    r, c, hit_cells, ids = rows[inside], cols[inside], is_hit[inside], ids[inside]
    grid[EXPLORED, r, c] = 1.0
    grid[OBSTACLE, r[hit_cells], c[hit_cells]] = 1.0
    labels = obs.labels[ids[hit_cells]]
    labelled = labels >= 0
    grid[2 + labels[labelled], r[hit_cells][labelled], c[hit_cells][labelled]] = 1.0
    return SemanticMap(grid)


def disk(size: int, center: tuple[int, int], radius: float = 2.0) -> np.ndarray:
    rr, cc = np.mgrid[0:size, 0:size]
    return ((rr - center[0]) ** 2 + (cc - center[1]) ** 2 <= radius * radius).astype(np.float64)


def state_tensor(smap: SemanticMap, map_pose: MapPose, visited: np.ndarray) -> np.ndarray:
    """(C + 4, M, M): obstacles, explored, current-location disk, visited trace, categories."""
    m = smap.size
    out = np.empty((smap.n_categories + 4, m, m))
    out[0] = smap.obstacles
    out[1] = smap.explored
    out[2] = disk(m, map_pose.cell())
    out[3] = visited
    out[4:] = smap.grid[2:]
    return out


def coverage_sweep(scene: Scene, size: int = 64, stride: int = 2, n_headings: int = 12,
                   start: tuple[int, int] | None = None, cfg=None):
    """Map a scene by observing from every ``stride``-th reachable free cell.

    Poses are exact (noise-free), visited row by row from the start cell's
    component with ``n_headings`` evenly spaced headings each.  Returns the
    final map, the frame and the explored-cell count after every
    observation.
    """
    from .scene import SceneConfig, observe, reachable_free

    cfg = cfg or SceneConfig(cell_size=scene.cell_size)
    free = np.argwhere(~scene.occupancy)
    if start is None:
        start = tuple(int(v) for v in free[len(free) // 2])
    spawn = Pose(*scene.cell_center(*start), 0.0)
    frame = MapFrame.from_spawn(scene, spawn, size)
    smap, _ = new_map(scene.n_categories, size)
    reach = reachable_free(scene, start)
    counts = []
    for r, c in np.argwhere(reach):
        if r % stride or c % stride:
            continue
        x, y = scene.cell_center(int(r), int(c))
        for k in range(n_headings):
            pose = Pose(x, y, 2.0 * math.pi * k / n_headings)
            smap = integrate(smap, frame.to_map(pose), observe(scene, pose, cfg), scene.cell_size)
            counts.append(int(smap.explored.sum()))
    return smap, frame, counts


def ground_truth_layers(scene: Scene, frame: MapFrame) -> tuple[np.ndarray, np.ndarray]:
    """Scene occupancy and category ids resampled into map cells (-1 / False outside)."""
    m = frame.size
    occ = np.zeros((m, m), dtype=bool)
    cat = np.full((m, m), -1, dtype=np.int64)
    rows, cols = np.indices(scene.shape)
    mr, mc = frame.cell_to_map(rows.ravel(), cols.ravel())
    ok = (mr >= 0) & (mr < m) & (mc >= 0) & (mc < m)
    occ[mr[ok], mc[ok]] = scene.occupancy.ravel()[ok]
    cat[mr[ok], mc[ok]] = scene.category.ravel()[ok]
    return occ, cat


def obstacle_iou(smap: SemanticMap, truth: np.ndarray) -> float:
    pred = smap.obstacles > 0.5
    union = (pred | truth).sum()
    return float((pred & truth).sum() / union) if union else 1.0
