# -*- coding: utf-8 -*-
"""
占据栅格模块
激光点云投影、高精地图图层融合与多帧堆叠
"""

from collections import deque

import numpy as np

from app.config import SensingConfig
from app.models.observation import (
    GridSpec, GridFrame, Observation,
    CHANNEL_OCCUPANCY, CHANNEL_DRIVABLE, CHANNEL_ROUTE, FRAME_CHANNELS,
)
from app.utils.geometry import to_local, to_world, point_segment_distances
from app.services.lidar import scan_world


def ogm_project(scan, spec=None):
    """
    把扫描回波投影为二值占据通道

    返回:
        (rows, cols) float32，有回波落入的栅格为 1
    """
    spec = spec or GridSpec()
    grid = np.zeros(spec.shape, dtype=np.float32)
    points = scan.hit_points
    if len(points) == 0:
        return grid
    rows, cols, inside = spec.cell_indices(points)
    grid[rows[inside], cols[inside]] = 1.0
    return grid


class DrivableRaster:
    """
    场景可行驶区域的世界坐标栅格（一次计算，逐帧最近邻采样）

    栅格原点对齐到分辨率的整数倍
    """

    def __init__(self, scenario, resolution):
        self.resolution = resolution
        xmin, ymin, xmax, ymax = scenario.bounds(margin=10.0)
        self.x0 = np.floor(xmin / resolution) * resolution
        self.y0 = np.floor(ymin / resolution) * resolution
        nx = int(np.ceil((xmax - self.x0) / resolution))
        ny = int(np.ceil((ymax - self.y0) / resolution))
        self.mask = np.zeros((nx, ny), dtype=bool)
        for lane in scenario.lanes.values():
            half = 0.5 * lane.width
            pts = lane.centerline.points
            for a, b in zip(pts[:-1], pts[1:]):
                self._paint_segment(a, b, half)

    def _paint_segment(self, a, b, half):
        res = self.resolution
        lo = np.minimum(a, b) - half
        hi = np.maximum(a, b) + half
        i0 = max(int(np.floor((lo[0] - self.x0) / res)), 0)
        j0 = max(int(np.floor((lo[1] - self.y0) / res)), 0)
        i1 = min(int(np.ceil((hi[0] - self.x0) / res)), self.mask.shape[0])
        j1 = min(int(np.ceil((hi[1] - self.y0) / res)), self.mask.shape[1])
        if i1 <= i0 or j1 <= j0:
            return
        xs = self.x0 + (np.arange(i0, i1) + 0.5) * res
        ys = self.y0 + (np.arange(j0, j1) + 0.5) * res
        gx, gy = np.meshgrid(xs, ys, indexing='ij')
        dist = point_segment_distances(np.stack([gx, gy], axis=-1), a, b)
        self.mask[i0:i1, j0:j1] |= dist <= half

    def sample(self, world_points):
        """最近邻查询，区域外为 False"""
        pts = np.asarray(world_points, dtype=float)
        i = np.floor((pts[..., 0] - self.x0) / self.resolution).astype(np.int64)
        j = np.floor((pts[..., 1] - self.y0) / self.resolution).astype(np.int64)
        inside = (i >= 0) & (i < self.mask.shape[0]) & (j >= 0) & (j < self.mask.shape[1])
        out = np.zeros(pts.shape[:-1], dtype=bool)
        out[inside] = self.mask[i[inside], j[inside]]
        return out


def drivable_raster(scenario, spec):
    """按场景缓存的可行驶区域栅格"""
    resolution = min(0.125, spec.resolution / 2.0)
    key = ("drivable", resolution)
    raster = scenario._cache.get(key)
    if raster is None:
        raster = DrivableRaster(scenario, resolution)
        scenario._cache[key] = raster
    return raster


def _route_channel(scenario, ego, spec):
    channel = np.zeros(spec.shape, dtype=np.float32)
    path = scenario.route_polyline(ego.route)
    start = max(ego.progress, 0.0)
    end = min(path.length, start + spec.reach + 1.0)
    points = path.sample(start, end, spec.resolution / 2.0)
    if len(points):
        rows, cols, inside = spec.cell_indices(to_local(points, *ego.pose))
        channel[rows[inside], cols[inside]] = 1.0
    # 目标区域圆盘
    goal_local = to_local(np.array(scenario.goal_point), *ego.pose)
    radius = scenario.goal_region.radius
    centers = spec.cell_centers()
    disk = np.hypot(centers[..., 0] - goal_local[0], centers[..., 1] - goal_local[1]) <= radius
    channel[disk] = 1.0
    return channel


def render_frame(occupancy, scenario, ego, spec=None, step_index=0):
    """
    融合占据通道与地图图层为单帧

    通道 0 = 占据（原样传入），1 = 可行驶区域，2 = 剩余路线与目标
    """
    spec = spec or GridSpec()
    cells = np.zeros(spec.shape + (FRAME_CHANNELS,), dtype=np.float32)
    cells[..., CHANNEL_OCCUPANCY] = occupancy
    world_centers = to_world(spec.cell_centers(), *ego.pose)
    cells[..., CHANNEL_DRIVABLE] = drivable_raster(scenario, spec).sample(world_centers)
    cells[..., CHANNEL_ROUTE] = _route_channel(scenario, ego, spec)
    return GridFrame(cells=cells, ego_pose=ego.pose, step_index=step_index)


def stack_offsets(horizon, n_frames, dt):
    """各堆叠帧相对当前时刻的步数偏移（从旧到新）"""
    span = int(round(horizon / dt))
    if n_frames == 1:
        return [0]
    return [int(round(span * (n_frames - 1 - k) / (n_frames - 1))) for k in range(n_frames)]


def stack_frames(history, now, horizon=1.0, n_frames=3, dt=0.1):
    """
    选取 now−horizon … now 的等间隔帧组成观测

    参数:
        history: 带 step_index 的 GridFrame 序列，必须包含 now 时刻的帧
        now: 当前时刻（秒）

    缺失的历史帧用最早的可用帧代替
    """
    by_step = {frame.step_index: frame for frame in history}
    now_step = int(round(now / dt))
    if now_step not in by_step:
        raise KeyError(f"历史中没有 t={now:.2f}s 的帧")
    oldest = by_step[min(by_step)]
    frames = tuple(by_step.get(now_step - offset, oldest)
                   for offset in stack_offsets(horizon, n_frames, dt))
    return Observation(frames=frames)


class ObservationBuilder:
    """
    每个环境实例一个：扫描 → 投影 → 融合 → 堆叠

    历史只保留堆叠所需的最近 horizon 秒
    """

    def __init__(self, scenario, cfg: SensingConfig = None, dt=0.1):
        self.scenario = scenario
        self.cfg = cfg or SensingConfig()
        self.spec = GridSpec.from_config(self.cfg)
        self.dt = dt
        self.history = deque(maxlen=int(round(self.cfg.stack_horizon / dt)) + 1)
        self.last_scan = None

    def reset(self):
        self.history.clear()
        self.last_scan = None

    def capture(self, world):
        scan = scan_world(world, self.cfg)
        self.last_scan = scan
        frame = render_frame(ogm_project(scan, self.spec), self.scenario, world.ego,
                             self.spec, step_index=world.step_index)
        self.history.append(frame)
        return frame

    def observe(self, world):
        """采集当前帧并返回堆叠后的 (rows, cols, 9) float32 数组"""
        self.capture(world)
        obs = stack_frames(self.history, world.time, self.cfg.stack_horizon,
                           self.cfg.stack_frames, self.dt)
        return obs.as_array()
