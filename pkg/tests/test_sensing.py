# -*- coding: utf-8 -*-
from dataclasses import replace

import numpy as np
import pytest

from app.models.observation import CHANNEL_DRIVABLE, CHANNEL_ROUTE, GridFrame, GridSpec
from app.models.vehicle import VehicleState
from app.services import world as sim
from app.services.lidar import beam_angles, raycast_scan
from app.services.ogm import ObservationBuilder, ogm_project, stack_frames, stack_offsets
from app.utils.geometry import rect_corners, to_local

EGO = VehicleState(id=0, x=0.0, y=0.0, heading=0.0, speed=0.0, length=4.5, width=1.9, route=("main",), is_ego=True)


def _box(x, y, length=4.5, width=1.9):
    return rect_corners(x, y, 0.0, length, width)


def test_beam_angles_strictly_increasing():
    angles = beam_angles(720)
    assert angles[0] == pytest.approx(-np.pi)
    assert np.all(np.diff(angles) > 0)
    assert angles[-1] < np.pi


def test_empty_scan_reports_max_range():
    scan = raycast_scan(EGO, np.empty((0, 4, 2)), 360, 50.0)
    assert np.all(scan.ranges == 50.0)
    assert np.all(scan.hit_ids == -1)
    assert len(scan.hit_points) == 0


def test_nearest_face_is_returned():
    scan = raycast_scan(EGO, np.stack([_box(10.0, 0.0)]), 360, 50.0, ids=[7])
    forward = 180
    assert scan.ranges[forward] == pytest.approx(10.0 - 2.25)
    assert scan.hit_ids[forward] == 7


def test_occluded_vehicle_is_not_hit():
    scan = raycast_scan(EGO, np.stack([_box(10.0, 0.0, width=4.0), _box(25.0, 0.0)]), 720, 50.0, ids=[1, 2])
    assert 1 in scan.hit_ids
    assert 2 not in scan.hit_ids


def test_out_of_range_vehicle_is_not_hit():
    scan = raycast_scan(EGO, np.stack([_box(60.0, 0.0)]), 360, 50.0)
    assert np.all(scan.hit_ids == -1)


def test_scan_rejects_bad_arguments():
    with pytest.raises(ValueError):
        raycast_scan(EGO, np.empty((0, 4, 2)), 0, 50.0)
    with pytest.raises(ValueError):
        raycast_scan(EGO, np.empty((0, 4, 2)), 10, 0.0)


def test_projection_marks_hit_cell():
    scan = raycast_scan(EGO, np.stack([_box(10.0, 0.0)]), 360, 50.0)
    grid = ogm_project(scan, GridSpec())
    assert grid.dtype == np.float32
    assert grid[109, 140] == 1.0
    assert set(np.unique(grid)) <= {0.0, 1.0}


def test_grid_cell_indices_orientation():
    spec = GridSpec()
    rows, cols, inside = spec.cell_indices(np.array([[34.9, 34.9], [-14.9, -34.9], [40.0, 0.0]]))
    assert (rows[0], cols[0]) == (0, 0)
    assert (rows[1], cols[1]) == (spec.rows - 1, spec.cols - 1)
    assert inside.tolist() == [True, True, False]


# ==================== 随机场景与不变性 ====================

def _brute_force_ranges(ego, obstacles, n_beams):
    """
    世界坐标下逐边求交，不做任何遮挡剪枝

    返回:
        (B, N) 每条光束到每个障碍物的最近交点距离，无交点为 inf
    """
    angles = ego.heading + beam_angles(n_beams)
    dx, dy = np.cos(angles), np.sin(angles)
    out = np.full((n_beams, len(obstacles)), np.inf)
    for k, corners in enumerate(obstacles):
        for a, b in zip(corners, np.roll(corners, -1, axis=0)):
            ex, ey = b - a
            rx, ry = a[0] - ego.x, a[1] - ego.y
            det = ex * dy - dx * ey
            safe = np.where(np.abs(det) > 1e-12, det, np.nan)
            t = (ex * ry - rx * ey) / safe
            u = (dx * ry - dy * rx) / safe
            hit = (t > 0) & (u >= 0) & (u <= 1)
            out[:, k] = np.where(hit, np.fmin(out[:, k], t), out[:, k])
    return out


def _random_scene(rng):
    ego = replace(EGO, x=float(rng.uniform(-50, 50)), y=float(rng.uniform(-50, 50)),
                  heading=float(rng.uniform(-np.pi, np.pi)))
    count = int(rng.integers(1, 7))
    obstacles = []
    while len(obstacles) < count:
        r, bearing = rng.uniform(3.0, 35.0), rng.uniform(-np.pi, np.pi)
        length, width = rng.uniform(2.0, 6.0), rng.uniform(1.0, 2.5)
        x, y, heading = ego.x + r * np.cos(bearing), ego.y + r * np.sin(bearing), rng.uniform(-np.pi, np.pi)
        local = to_local(np.array([ego.x, ego.y]), x, y, heading)
        if abs(local[0]) < 0.5 * length and abs(local[1]) < 0.5 * width:
            continue
        obstacles.append(rect_corners(x, y, heading, length, width))
    return ego, np.stack(obstacles)


def test_scan_matches_all_edges_intersection_on_random_scenes():
    rng = np.random.default_rng(8)
    n_beams, max_range = 90, 30.0
    for _ in range(1000):
        ego, obstacles = _random_scene(rng)
        ids = np.arange(len(obstacles)) + 100
        scan = raycast_scan(ego, obstacles, n_beams, max_range, ids=ids)
        per_obstacle = _brute_force_ranges(ego, obstacles, n_beams)
        nearest = per_obstacle.min(axis=1)

        np.testing.assert_allclose(scan.ranges, np.minimum(nearest, max_range), atol=1e-6)
        decided = np.abs(nearest - max_range) > 1e-6
        np.testing.assert_array_equal(scan.returned[decided], (nearest <= max_range)[decided])

        # 命中 id 为最近的障碍物（排除两个障碍物几乎等距的光束）
        ordered = np.sort(per_obstacle, axis=1)
        runner_up = ordered[:, 1] if len(obstacles) > 1 else np.full(n_beams, np.inf)
        clear = scan.returned & (runner_up - nearest > 1e-6)
        np.testing.assert_array_equal(scan.hit_ids[clear], ids[per_obstacle.argmin(axis=1)][clear])


def test_grid_recovers_rectangle_extent():
    # 右前方的矩形同时露出近端面和右侧面，两者合起来覆盖整个外接框
    spec = GridSpec()
    scan = raycast_scan(EGO, np.stack([rect_corners(12.1, 6.1, 0.0, 4.0, 2.0)]), 1440, 50.0)
    grid = ogm_project(scan, spec)
    occupied = spec.cell_centers()[grid > 0]
    half = 0.5 * spec.resolution
    forward = (occupied[:, 0].min() - half, occupied[:, 0].max() + half)
    lateral = (occupied[:, 1].min() - half, occupied[:, 1].max() + half)
    assert forward == pytest.approx((10.1, 14.1), abs=0.25 + 1e-9)
    assert lateral == pytest.approx((5.1, 7.1), abs=0.25 + 1e-9)


def test_scan_and_grid_are_translation_invariant():
    ego = replace(EGO, x=3.0, y=-2.0, heading=0.4)
    boxes = np.stack([rect_corners(15.3, 4.7, 0.2, 4.5, 1.9), rect_corners(-8.6, 11.2, 1.3, 5.0, 2.1),
                      rect_corners(2.4, -17.9, -0.7, 4.2, 1.8), rect_corners(24.1, 9.3, 2.5, 4.5, 1.9)])
    shift = np.array([137.25, -58.5])
    moved = replace(ego, x=ego.x + shift[0], y=ego.y + shift[1])
    spec = GridSpec()

    scan = raycast_scan(ego, boxes, 720, 50.0, ids=[1, 2, 3, 4])
    shifted = raycast_scan(moved, boxes + shift, 720, 50.0, ids=[1, 2, 3, 4])
    np.testing.assert_allclose(shifted.ranges, scan.ranges, atol=1e-9)
    np.testing.assert_array_equal(shifted.hit_ids, scan.hit_ids)
    assert scan.returned.sum() > 0
    np.testing.assert_array_equal(ogm_project(shifted, spec), ogm_project(scan, spec))


def test_stack_offsets():
    assert stack_offsets(1.0, 3, 0.1) == [10, 5, 0]
    assert stack_offsets(1.0, 1, 0.1) == [0]


def test_stack_frames_pads_with_oldest():
    frames = [GridFrame(cells=np.full((2, 2, 3), k, np.float32), ego_pose=(0, 0, 0), step_index=k)
              for k in range(3)]
    obs = stack_frames(frames, 0.2, horizon=1.0, n_frames=3, dt=0.1)
    assert [f.step_index for f in obs.frames] == [0, 0, 2]
    assert obs.shape == (2, 2, 9)
    with pytest.raises(KeyError):
        stack_frames(frames, 0.5)


def test_builder_observation(t_merge, tiny_settings):
    builder = ObservationBuilder(t_merge, tiny_settings.sensing)
    world = sim.reset(t_merge, 4, "sparse")
    obs = builder.observe(world)
    s = tiny_settings.sensing
    assert obs.shape == (s.rows, s.cols, 9)
    assert obs.dtype == np.float32
    assert obs.min() >= 0.0 and obs.max() <= 1.0
    current = obs[..., 6:9]
    assert current[..., CHANNEL_DRIVABLE].sum() > 0
    assert current[..., CHANNEL_ROUTE].sum() > 0
    # 第一步时三帧都是同一帧
    np.testing.assert_array_equal(obs[..., 0:3], current)
