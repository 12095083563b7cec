"""Fast-marching travel-time fields and the deterministic local policy.

Fields are solved outward from the goal with a first-order upwind update on
the 4-neighbour stencil and unit speed in free cells, so one solve serves
every agent position until the map changes.  Values are in cell units.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from .grid import NEIGHBOURS_8
from .scene import Action

# cells within this radius of the source are seeded with exact Euclidean
# values; it removes the point-source error of the first-order stencil
SEED_RADIUS = 3.0


class PlanningError(RuntimeError):
    pass


@dataclass
class DistanceField:
    values: np.ndarray          # (M, M), +inf on obstacles and unreachable cells
    sources: list = field(default_factory=list)

    def at(self, r: int, c: int) -> float:
        return float(self.values[r, c])

    def to_tensors(self) -> dict[str, np.ndarray]:
        v = np.where(np.isfinite(self.values), self.values, -1.0)
        return {"field": v.astype(np.float32),
                "sources": np.array(self.sources, dtype=np.float32).reshape(-1, 2)}


def nearest_free(free: np.ndarray, cell: tuple[int, int]) -> tuple[int, int]:
    """Closest free cell by Euclidean distance (ties broken row-major)."""
    cells = np.argwhere(free)
    if len(cells) == 0:
        raise PlanningError("no free cell to plan on")
    d2 = ((cells - np.asarray(cell)) ** 2).sum(axis=1)
    r, c = cells[int(np.argmin(d2))]
    return int(r), int(c)


def _solve_quadratic(a: float, b: float) -> float:
    # unit-speed upwind update from the smaller row and column neighbours
    if math.isinf(b) or b - a >= 1.0:
        return a + 1.0
    return 0.5 * (a + b + math.sqrt(2.0 - (a - b) ** 2))


def fmm_solve(obstacles: np.ndarray, goal, seed_radius: float = SEED_RADIUS,
              stop_at=None, margin: float = 1.5) -> DistanceField:
    """Travel time from ``goal`` (a cell, or a list of cells) over free space.

    Occupied goals are snapped to the nearest free cell.  Finalised cells are
    never revisited.  With ``stop_at`` the march halts once every cell up to
    ``margin`` beyond that cell's value is final; the rest is left at +inf,
    which is enough to descend from ``stop_at``.
    """
    blocked = np.asarray(obstacles, dtype=bool)
    free = ~blocked
    h, w = blocked.shape
    goals = [goal] if np.ndim(goal) == 1 else list(goal)
    sources = []
    for g in goals:
        g = (int(g[0]), int(g[1]))
        if not (0 <= g[0] < h and 0 <= g[1] < w):
            raise PlanningError(f"goal {g} outside the {h}x{w} grid")
        sources.append(g if free[g] else nearest_free(free, g))
    sources = sorted(set(sources))

    values = np.full((h, w), np.inf)
    done = np.zeros((h, w), dtype=bool)
    heap: list = []
    for sr, sc in sources:
        values[sr, sc] = 0.0
        heap.append((0.0, sr, sc))
    if seed_radius > 0 and len(sources) == 1:
        _seed_exact(values, free, sources[0], seed_radius, heap)
    heapq.heapify(heap)
    horizon = math.inf
    while heap:
        d, r, c = heapq.heappop(heap)
        if done[r, c] or d > values[r, c]:
            continue
        if d > horizon:
            break
        done[r, c] = True
        if stop_at is not None and (r, c) == tuple(stop_at):
            horizon = d + margin
        for nr, nc in ((r - 1, c), (r + 1, c), (r, c - 1), (r, c + 1)):
            if not (0 <= nr < h and 0 <= nc < w) or done[nr, nc] or not free[nr, nc]:
                continue
            a = min(values[nr - 1, nc] if nr > 0 else math.inf,
                    values[nr + 1, nc] if nr < h - 1 else math.inf)
            b = min(values[nr, nc - 1] if nc > 0 else math.inf,
                    values[nr, nc + 1] if nc < w - 1 else math.inf)
            a, b = min(a, b), max(a, b)
            nd = _solve_quadratic(a, b)
            if nd < values[nr, nc]:
                values[nr, nc] = nd
                heapq.heappush(heap, (nd, nr, nc))
    if stop_at is not None:
        values[~done] = np.inf
    return DistanceField(values, sources)


def _seed_exact(values, free, source, radius, heap):
    """Exact distances near the source where the segment to it is clear."""
    sr, sc = source
    h, w = values.shape
    k = int(math.ceil(radius))
    for r in range(max(sr - k, 0), min(sr + k + 1, h)):
        for c in range(max(sc - k, 0), min(sc + k + 1, w)):
            d = math.hypot(r - sr, c - sc)
            if 0 < d <= radius and free[r, c] and _clear(free, (sr, sc), (r, c)):
                values[r, c] = d
                heap.append((d, r, c))


def _clear(free, a, b) -> bool:
    # whole bounding box free, so no straight segment can clip a corner
    r0, r1 = sorted((a[0], b[0]))
    c0, c1 = sorted((a[1], b[1]))
    return bool(free[r0:r1 + 1, c0:c1 + 1].all())


def descend(field_: DistanceField, cell) -> tuple[int, int] | None:
    """Neighbour with the steepest descent rate, or None at a minimum.

    Diagonal moves may not cut obstacle corners.
    """
    v = field_.values
    h, w = v.shape
    r, c = cell
    here = v[r, c]
    best, best_rate = None, 0.0
    for dr, dc, cost in NEIGHBOURS_8:
        nr, nc = r + dr, c + dc
        if not (0 <= nr < h and 0 <= nc < w) or not np.isfinite(v[nr, nc]):
            continue
        if dr and dc and not (np.isfinite(v[r + dr, c]) and np.isfinite(v[r, c + dc])):
            continue
        rate = (here - v[nr, nc]) / cost
        if rate > best_rate + 1e-12:
            best, best_rate = (nr, nc), rate
    return best


def extract_path(field_: DistanceField, start, max_len: int | None = None) -> list[tuple[int, int]]:
    """Steepest-descent cell path from ``start`` to a source (inclusive).

    Raises :class:`PlanningError` if ``start`` is unreachable.
    """
    v = field_.values
    start = (int(start[0]), int(start[1]))
    if not np.isfinite(v[start]):
        raise PlanningError(f"cell {start} is unreachable from the goal")
    path = [start]
    limit = max_len or v.size
    while v[path[-1]] > 0.0 and len(path) <= limit:
        nxt = descend(field_, path[-1])
        if nxt is None:
            break
        path.append(nxt)
    return path


def path_length(path) -> float:
    p = np.asarray(path, dtype=np.float64)
    if len(p) < 2:
        return 0.0
    return float(np.hypot(*np.diff(p, axis=0).T).sum())


def dilate(obstacles: np.ndarray, radius: int = 1) -> np.ndarray:
    """Square (Chebyshev) dilation."""
    out = obstacles.astype(bool).copy()
    h, w = out.shape
    src = obstacles.astype(bool)
    for dr in range(-radius, radius + 1):
        for dc in range(-radius, radius + 1):
            if dr == 0 and dc == 0:
                continue
            shifted = np.zeros_like(src)
            shifted[max(dr, 0):h + min(dr, 0), max(dc, 0):w + min(dc, 0)] = \
                src[max(-dr, 0):h + min(-dr, 0), max(-dc, 0):w + min(-dc, 0)]
            out |= shifted
    return out


@dataclass(frozen=True)
class LocalStep:
    action: Action | None   # None means replan: the agent cannot reach the goal
    reached: bool = False


def extract_action(field_: DistanceField, map_pose, stop_radius: float = 4.0,
                   turn_tolerance_deg: float = 15.0, lookahead: int = 2,
                   blocked: np.ndarray | None = None, turn_deg: float = 30.0) -> LocalStep:
    """One low-level action toward the field's source.

    The steepest-descent path sets the desired heading; the agent turns
    until it is within ``turn_tolerance_deg`` and then moves forward.  With
    a ``blocked`` grid the agent instead picks, among the headings reachable
    by whole turns, the one whose one-cell forward move is collision-free
    and lands lowest on the field, which keeps off-centre poses from
    clipping corners.  ``stop_radius`` is in cells; the caller decides what
    ``reached`` means.
    """
    cell = map_pose.cell()
    h, w = field_.values.shape
    if not (0 <= cell[0] < h and 0 <= cell[1] < w) or not np.isfinite(field_.values[cell]):
        return LocalStep(None)
    if field_.values[cell] <= stop_radius:
        return LocalStep(Action.STOP, reached=True)
    if blocked is not None:
        choice = _safest_heading(field_, map_pose, blocked, turn_deg)
        if choice is not None:
            return LocalStep(choice)
    path = extract_path(field_, cell, max_len=lookahead)
    if len(path) < 2:
        return LocalStep(None)
    tr, tc = path[-1]
    desired = math.atan2(tr - map_pose.row, tc - map_pose.col)
    diff = math.remainder(desired - map_pose.theta, 2.0 * math.pi)
    tol = math.radians(turn_tolerance_deg) + 1e-9
    if abs(diff) <= tol:
        return LocalStep(Action.MOVE_FORWARD)
    return LocalStep(Action.TURN_LEFT if diff > 0 else Action.TURN_RIGHT)


def sweep_clear(blocked: np.ndarray, row: float, col: float, theta: float, reach: float = 1.0) -> bool:
    """Forward move of ``reach`` cells stays on unblocked cells (10 samples, as the simulator checks)."""
    h, w = blocked.shape
    for f in np.linspace(0.1, 1.0, 10) * reach:
        r = int(math.floor(row + f * math.sin(theta) + 0.5))
        c = int(math.floor(col + f * math.cos(theta) + 0.5))
        if not (0 <= r < h and 0 <= c < w) or blocked[r, c]:
            return False
    return True


def _safest_heading(field_, map_pose, blocked, turn_deg):
    v = field_.values
    h, w = v.shape
    here = v[map_pose.cell()]
    n = int(round(360.0 / turn_deg))
    best = None
    for k in range(n):
        # k turns left or right, fewest turns first so ties keep the heading
        for turns in ((0,) if k == 0 else (k, -k)):
            if abs(turns) > n // 2:
                continue
            theta = map_pose.theta + math.radians(turn_deg) * turns
            if not sweep_clear(blocked, map_pose.row, map_pose.col, theta):
                continue
            r = int(math.floor(map_pose.row + math.sin(theta) + 0.5))
            c = int(math.floor(map_pose.col + math.cos(theta) + 0.5))
            val = v[r, c]
            if val < here - 1e-9 and (best is None or val < best[0] - 1e-9):
                best = (val, turns)
    if best is None:
        return None
    turns = best[1]
    if turns == 0:
        return Action.MOVE_FORWARD
    return Action.TURN_LEFT if turns > 0 else Action.TURN_RIGHT
