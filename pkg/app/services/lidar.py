# -*- coding: utf-8 -*-
"""
二维激光雷达仿真
光束与车辆足迹边求交，最近交点即回波，遮挡自然产生
"""

import numpy as np

from app.config import SensingConfig
from app.models.observation import LidarScan
from app.utils.geometry import ray_segment_distances, to_local


def beam_angles(n_beams):
    """[-π, π) 上等间隔、严格递增的光束角"""
    return -np.pi + np.arange(n_beams) * (2.0 * np.pi / n_beams)


def raycast_scan(ego, obstacles, n_beams, max_range, ids=None):
    """
    单次 360° 扫描

    参数:
        ego: 自车 VehicleState（自身足迹不参与求交）
        obstacles: 世界坐标下的有向矩形角点，(N, 4, 2)
        n_beams: 光束数
        max_range: 最大量程（米）
        ids: 每个障碍物的 id，默认 0..N-1

    返回:
        LidarScan
    """
    if n_beams < 1:
        raise ValueError("光束数必须 ≥ 1")
    if max_range <= 0:
        raise ValueError("量程必须为正")
    angles = beam_angles(n_beams)
    ranges = np.full(n_beams, float(max_range))
    hit_ids = np.full(n_beams, -1, dtype=np.int64)

    corners = np.asarray(obstacles, dtype=float).reshape(-1, 4, 2)
    if len(corners) == 0:
        return LidarScan(beam_angles=angles, ranges=ranges, hit_ids=hit_ids, max_range=float(max_range))
    ids = np.arange(len(corners)) if ids is None else np.asarray(ids, dtype=np.int64)

    local = to_local(corners, ego.x, ego.y, ego.heading)
    seg_a = local.reshape(-1, 2)
    seg_b = np.roll(local, -1, axis=1).reshape(-1, 2)
    directions = np.stack([np.cos(angles), np.sin(angles)], axis=-1)

    distances = ray_segment_distances(np.zeros(2), directions, seg_a, seg_b)
    nearest = np.argmin(distances, axis=1)
    best = distances[np.arange(n_beams), nearest]
    returned = best <= max_range
    ranges[returned] = best[returned]
    hit_ids[returned] = ids[nearest[returned] // 4]
    return LidarScan(beam_angles=angles, ranges=ranges, hit_ids=hit_ids, max_range=float(max_range))


def scan_world(world, cfg: SensingConfig = None):
    """对世界中所有背景车扫描一次"""
    cfg = cfg or SensingConfig()
    others = world.background
    corners = np.stack([v.corners() for v in others]) if others else np.empty((0, 4, 2))
    return raycast_scan(world.ego, corners, cfg.n_beams, cfg.max_range, ids=[v.id for v in others])
