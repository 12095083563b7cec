"""Input checks shared by the estimator and the CLI."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .scene import Scene


def check_states(X, n_categories: int, map_size: int) -> np.ndarray:
    """(N, C+4, M, M) float array; a single state gains a leading axis."""
    X = check_array(X, allow_nd=True, ensure_2d=False, dtype=np.float64)
    if X.ndim == 3:
        X = X[None]
    expected = (n_categories + 4, map_size, map_size)
    if X.ndim != 4 or X.shape[1:] != expected:
        raise ValueError(f"states must have shape (N, {expected[0]}, {map_size}, {map_size}), got {X.shape}")
    return X


def check_goals(goals, n: int, n_categories: int) -> np.ndarray:
    """Category indices or one-hot rows, returned as an (n, C) one-hot array."""
    g = np.asarray(goals)
    if g.ndim == 0:
        g = np.full(n, int(g))
    if g.ndim == 1:
        if not np.issubdtype(g.dtype, np.integer):
            raise ValueError("goal indices must be integers")
        if len(g) != n:
            raise ValueError(f"got {len(g)} goals for {n} states")
        if g.min(initial=0) < 0 or g.max(initial=0) >= n_categories:
            raise ValueError(f"goal category out of range [0, {n_categories})")
        return np.eye(n_categories)[g]
    g = check_array(g, dtype=np.float64)
    if g.shape != (n, n_categories):
        raise ValueError(f"one-hot goals must have shape ({n}, {n_categories}), got {g.shape}")
    if not (np.all((g == 0) | (g == 1)) and np.all(g.sum(axis=1) == 1)):
        raise ValueError("goal rows must be one-hot")
    return g


def check_scenes(scenes, make) -> list[Scene]:
    """Accept Scene objects or integer seeds (built with ``make(seed)``)."""
    if isinstance(scenes, (int, np.integer, Scene)):
        scenes = [scenes]
    out = []
    for s in scenes:
        if isinstance(s, Scene):
            out.append(s)
        elif isinstance(s, (int, np.integer)):
            out.append(make(int(s)))
        else:
            raise TypeError(f"expected Scene or int seed, got {type(s).__name__}")
    if not out:
        raise ValueError("need at least one scene")
    return out
