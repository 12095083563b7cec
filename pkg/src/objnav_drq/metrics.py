"""Success rate, SPL and distance-to-success over episode results."""
from __future__ import annotations

from typing import Iterable

import numpy as np


def _kept(results):
    return [r for r in results if not getattr(r, "excluded", False)]


def success_rate(results: Iterable) -> float:
    kept = _kept(results)
    if not kept:
        return float("nan")
    return float(np.mean([r.success for r in kept]))


def spl_term(result) -> float:
    """S * l / max(p, l) for one episode."""
    if not result.success:
        return 0.0
    return float(result.shortest_length / max(result.path_length, result.shortest_length))


def spl(results: Iterable) -> float:
    kept = _kept(results)
    if not kept:
        return float("nan")
    return float(np.mean([spl_term(r) for r in kept]))


def dts(result, success_distance: float = 1.0) -> float:
    """max(final distance - d_s, 0)."""
    return max(float(result.final_distance) - success_distance, 0.0)


def mean_dts(results: Iterable, success_distance: float = 1.0) -> float:
    kept = _kept(results)
    if not kept:
        return float("nan")
    return float(np.mean([dts(r, success_distance) for r in kept]))


def summarize(results, success_distance: float = 1.0) -> dict:
    results = list(results)
    return {
        "episodes": len(_kept(results)),
        "excluded": len(results) - len(_kept(results)),
        "success": success_rate(results),
        "spl": spl(results),
        "dts": mean_dts(results, success_distance),
    }
