import math

import numpy as np
import pytest

from objnav_drq.fmm import (DistanceField, PlanningError, dilate, extract_action, extract_path, fmm_solve,
                            path_length)
from objnav_drq.scene import Action
from objnav_drq.semantic_map import MapPose


def test_goal_is_zero_and_obstacles_inf():
    obst = np.zeros((20, 20), dtype=bool)
    obst[5, 3:9] = True
    f = fmm_solve(obst, (10, 10))
    assert f.at(10, 10) == 0.0
    assert np.all(np.isinf(f.values[obst]))
    assert np.all(np.isfinite(f.values[~obst]))


def test_open_field_close_to_euclidean():
    f = fmm_solve(np.zeros((32, 32), dtype=bool), (16, 16))
    rr, cc = np.indices((32, 32))
    d = np.hypot(rr - 16, cc - 16)
    far = d >= 5
    assert np.max(np.abs(f.values[far] - d[far]) / d[far]) < 0.08


def test_wall_makes_field_exceed_euclidean():
    obst = np.zeros((20, 20), dtype=bool)
    obst[2:18, 10] = True
    f = fmm_solve(obst, (10, 5))
    assert f.at(10, 15) > 10.0 + 1e-6


def test_occupied_goal_snaps_to_free():
    obst = np.zeros((10, 10), dtype=bool)
    obst[4:7, 4:7] = True
    f = fmm_solve(obst, (5, 5))
    (r, c), = f.sources
    assert not obst[r, c] and f.at(r, c) == 0.0
    assert math.hypot(r - 5, c - 5) <= 2


def test_no_free_cells_raises():
    with pytest.raises(PlanningError):
        fmm_solve(np.ones((5, 5), dtype=bool), (2, 2))


def test_multiple_sources():
    f = fmm_solve(np.zeros((16, 16), dtype=bool), [(2, 2), (13, 13)])
    assert f.at(2, 2) == 0.0 and f.at(13, 13) == 0.0
    assert f.at(3, 2) == pytest.approx(1.0) and f.at(12, 13) == pytest.approx(1.0)


def test_stop_at_agrees_with_full_solve():
    rng = np.random.default_rng(0)
    obst = rng.random((32, 32)) < 0.2
    obst[16, 16] = obst[3, 3] = False
    full = fmm_solve(obst, (16, 16))
    if not np.isfinite(full.at(3, 3)):
        pytest.skip("start not reachable on this draw")
    part = fmm_solve(obst, (16, 16), stop_at=(3, 3))
    done = np.isfinite(part.values)
    assert np.array_equal(part.values[done], full.values[done])
    assert done[3, 3]


def test_path_descends_and_reaches_goal():
    obst = np.zeros((20, 20), dtype=bool)
    obst[3:17, 9] = True
    f = fmm_solve(obst, (10, 2))
    path = extract_path(f, (10, 17))
    assert path[-1] == (10, 2)
    vals = [f.at(*c) for c in path]
    assert all(b < a for a, b in zip(vals, vals[1:]))
    assert not any(obst[c] for c in path)
    assert path_length(path) >= math.hypot(0, 15)


def test_unreachable_start_raises_and_replans():
    obst = np.zeros((10, 10), dtype=bool)
    obst[:, 5] = True
    f = fmm_solve(obst, (5, 2))
    with pytest.raises(PlanningError):
        extract_path(f, (5, 8))
    assert extract_action(f, MapPose(5, 8, 0.0)).action is None


def test_goal_east_facing_east_moves_forward():
    f = fmm_solve(np.zeros((20, 20), dtype=bool), (10, 18))
    step = extract_action(f, MapPose(10, 5, 0.0), stop_radius=0.5)
    assert step.action == Action.MOVE_FORWARD and not step.reached


def test_goal_behind_turns_first():
    f = fmm_solve(np.zeros((20, 20), dtype=bool), (10, 2))
    step = extract_action(f, MapPose(10, 15, 0.0), stop_radius=0.5)
    assert step.action in (Action.TURN_LEFT, Action.TURN_RIGHT)


def test_adjacent_aligned_reaches_stop_within_two_actions():
    f = fmm_solve(np.zeros((20, 20), dtype=bool), (10, 11))
    pose = MapPose(10, 10, 0.0)
    actions = []
    for _ in range(2):
        step = extract_action(f, pose, stop_radius=0.5)
        actions.append(step.action)
        if step.action == Action.STOP:
            break
        assert step.action == Action.MOVE_FORWARD
        pose = MapPose(pose.row, pose.col + 1, pose.theta)
    assert actions[-1] == Action.STOP


def test_blocked_grid_avoids_collisions():
    obst = np.zeros((20, 20), dtype=bool)
    obst[9, 11] = True   # corner beside the diagonal
    f = fmm_solve(obst, (2, 18))
    step = extract_action(f, MapPose(10, 10, 0.0), stop_radius=0.5, blocked=obst)
    assert step.action is not None


def test_dilate_square():
    obst = np.zeros((7, 7), dtype=bool)
    obst[3, 3] = True
    d = dilate(obst, 1)
    assert d.sum() == 9 and d[2:5, 2:5].all()
    assert np.array_equal(dilate(obst, 0), obst)


def test_field_dump_tensors():
    f = fmm_solve(np.eye(8, dtype=bool), (0, 7))
    t = f.to_tensors()
    assert t["field"].dtype == np.float32 and t["field"][0, 0] == -1.0
    assert t["sources"].tolist() == [[0.0, 7.0]]
    assert isinstance(f, DistanceField)
