"""Grid primitives shared by the simulator, the mapper and the planner.

Coordinates here are *standard cell coordinates*: cell ``(r, c)`` covers
``[c, c+1) x [r, r+1)`` with x along columns and y along rows.
"""
from __future__ import annotations

import heapq
import math
from collections import deque

import numpy as np

SQRT2 = math.sqrt(2.0)
NEIGHBOURS_8 = [(-1, 0, 1.0), (1, 0, 1.0), (0, -1, 1.0), (0, 1, 1.0),
                (-1, -1, SQRT2), (-1, 1, SQRT2), (1, -1, SQRT2), (1, 1, SQRT2)]


def traverse(x0: float, y0: float, angles: np.ndarray, max_t: np.ndarray | float,
             blocked: np.ndarray | None = None, collect: bool = False):
    """Amanatides-Woo traversal of many rays at once.

    Each ray starts at (x0, y0) with direction (cos a, sin a) and walks cell
    boundaries until it enters a ``blocked`` cell (if given) or the entry
    parameter exceeds ``max_t``.  Cells outside ``blocked`` count as blocked.

    Returns ``(t_hit, hit_r, hit_c, visited)``: entry parameter of the hit
    cell (``inf`` when nothing was hit), its indices (-1 when none) and, with
    ``collect``, a list of (rows, cols, ray_ids) arrays per iteration
    including the start cell.
    """
    angles = np.asarray(angles, dtype=np.float64)
    n = angles.shape[0]
    max_t = np.broadcast_to(np.asarray(max_t, dtype=np.float64), (n,))
    dx, dy = np.cos(angles), np.sin(angles)
    col = np.full(n, math.floor(x0), dtype=np.int64)
    row = np.full(n, math.floor(y0), dtype=np.int64)
    step_c = np.where(dx >= 0, 1, -1)
    step_r = np.where(dy >= 0, 1, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        next_x = np.where(dx >= 0, col + 1.0, col * 1.0)
        next_y = np.where(dy >= 0, row + 1.0, row * 1.0)
        tmax_c = np.where(np.abs(dx) > 1e-15, (next_x - x0) / dx, np.inf)
        tmax_r = np.where(np.abs(dy) > 1e-15, (next_y - y0) / dy, np.inf)
        tdel_c = np.where(np.abs(dx) > 1e-15, 1.0 / np.abs(dx), np.inf)
        tdel_r = np.where(np.abs(dy) > 1e-15, 1.0 / np.abs(dy), np.inf)
    t_hit = np.full(n, np.inf)
    hit_r = np.full(n, -1, dtype=np.int64)
    hit_c = np.full(n, -1, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    visited = [(row.copy(), col.copy(), np.arange(n))] if collect else None
    h, w = (blocked.shape if blocked is not None else (None, None))
    while active.any():
        use_c = tmax_c < tmax_r
        t_enter = np.where(use_c, tmax_c, tmax_r)
        active &= t_enter <= max_t
        if not active.any():
            break
        mc = active & use_c
        mr = active & ~use_c
        col[mc] += step_c[mc]
        tmax_c[mc] += tdel_c[mc]
        row[mr] += step_r[mr]
        tmax_r[mr] += tdel_r[mr]
        idx = np.nonzero(active)[0]
        if collect:
            visited.append((row[idx].copy(), col[idx].copy(), idx))
        if blocked is not None:
            r, c = row[idx], col[idx]
            outside = (r < 0) | (r >= h) | (c < 0) | (c >= w)
            hit = outside.copy()
            inside = ~outside
            hit[inside] = blocked[r[inside], c[inside]]
            hid = idx[hit]
            t_hit[hid] = t_enter[hid]
            hit_r[hid] = row[hid]
            hit_c[hid] = col[hid]
            active[hid] = False
    return t_hit, hit_r, hit_c, visited


def flood_fill(free: np.ndarray, start: tuple[int, int]) -> np.ndarray:
    """4-connected component of ``free`` containing ``start``."""
    h, w = free.shape
    seen = np.zeros_like(free, dtype=bool)
    if not free[start]:
        return seen
    seen[start] = True
    queue = deque([start])
    while queue:
        r, c = queue.popleft()
        for dr, dc in ((-1, 0), (1, 0), (0, -1), (0, 1)):
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and free[nr, nc] and not seen[nr, nc]:
                seen[nr, nc] = True
                queue.append((nr, nc))
    return seen


def is_connected(free: np.ndarray) -> bool:
    cells = np.argwhere(free)
    if len(cells) == 0:
        return False
    return int(flood_fill(free, tuple(cells[0])).sum()) == len(cells)


def diagonal_ok(passable: np.ndarray, r: int, c: int, dr: int, dc: int) -> bool:
    """A diagonal move may not cut an obstacle corner."""
    return bool(passable[r + dr, c] and passable[r, c + dc])


def dijkstra(passable: np.ndarray, sources) -> np.ndarray:
    """Multi-source 8-connected shortest distances (cells), no corner cutting.

    ``sources`` may be impassable themselves (object cells); they seed the
    search at distance 0 and are treated as passable for corner checks.
    """
    h, w = passable.shape
    dist = np.full((h, w), np.inf)
    ok = passable.copy()
    heap = []
    for r, c in sources:
        ok[r, c] = True
        dist[r, c] = 0.0
        heap.append((0.0, int(r), int(c)))
    heapq.heapify(heap)
    done = np.zeros((h, w), dtype=bool)
    while heap:
        d, r, c = heapq.heappop(heap)
        if done[r, c]:
            continue
        done[r, c] = True
        for dr, dc, cost in NEIGHBOURS_8:
            nr, nc = r + dr, c + dc
            if not (0 <= nr < h and 0 <= nc < w) or not passable[nr, nc] or done[nr, nc]:
                continue
            if dr and dc and not (ok[r + dr, c] and ok[r, c + dc]):
                continue
            nd = d + cost
            if nd < dist[nr, nc]:
                dist[nr, nc] = nd
                heapq.heappush(heap, (nd, nr, nc))
    return dist
