# -*- coding: utf-8 -*-
"""
感知数据模型
激光雷达扫描、栅格规格、单帧栅格与堆叠观测
"""

import math
from dataclasses import dataclass

import numpy as np

from app.config import SensingConfig

# 通道约定
CHANNEL_OCCUPANCY = 0
CHANNEL_DRIVABLE = 1
CHANNEL_ROUTE = 2
FRAME_CHANNELS = 3


@dataclass(frozen=True)
class LidarScan:
    """
    单次扫描（自车坐标系）

    ranges 中无回波的光束取 max_range；hit_ids 为命中车辆 id，无回波为 -1
    """
    beam_angles: np.ndarray
    ranges: np.ndarray
    hit_ids: np.ndarray
    max_range: float

    @property
    def returned(self):
        return self.hit_ids >= 0

    @property
    def hit_points(self):
        mask = self.returned
        r = self.ranges[mask]
        a = self.beam_angles[mask]
        return np.stack([r * np.cos(a), r * np.sin(a)], axis=-1)


@dataclass(frozen=True)
class GridSpec:
    """
    自车坐标系下的栅格范围

    第 0 行位于前方 front 米，第 0 列位于左侧 left 米
    """
    rows: int = 200
    cols: int = 280
    resolution: float = 0.25
    front: float = 35.0
    left: float = 35.0

    @classmethod
    def from_config(cls, cfg: SensingConfig):
        return cls(rows=cfg.rows, cols=cfg.cols, resolution=cfg.resolution,
                   front=cfg.front, left=cfg.left)

    @property
    def shape(self):
        return (self.rows, self.cols)

    def cell_indices(self, points):
        """
        自车坐标点 (forward, lateral) → (row, col, 是否在栅格内)
        """
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        rows = np.floor((self.front - pts[:, 0]) / self.resolution).astype(np.int64)
        cols = np.floor((self.left - pts[:, 1]) / self.resolution).astype(np.int64)
        inside = (rows >= 0) & (rows < self.rows) & (cols >= 0) & (cols < self.cols)
        return rows, cols, inside

    def cell_centers(self):
        """每个栅格中心的自车坐标，(rows, cols, 2)"""
        forward = self.front - (np.arange(self.rows) + 0.5) * self.resolution
        lateral = self.left - (np.arange(self.cols) + 0.5) * self.resolution
        f, l = np.meshgrid(forward, lateral, indexing='ij')
        return np.stack([f, l], axis=-1)

    @property
    def reach(self):
        """栅格覆盖区域到自车的最大距离"""
        back = self.rows * self.resolution - self.front
        right = self.cols * self.resolution - self.left
        return math.hypot(max(self.front, back), max(self.left, right))


@dataclass(frozen=True)
class GridFrame:
    cells: np.ndarray          # (rows, cols, 3) float32, 值域 [0, 1]
    ego_pose: tuple            # 采集时刻的 (x, y, heading)
    step_index: int = 0


@dataclass(frozen=True)
class Observation:
    """按时间先后排列的帧（最后一帧为当前时刻）"""
    frames: tuple

    def as_array(self):
        """按通道拼接为 (rows, cols, 3 × 帧数)"""
        return np.concatenate([f.cells for f in self.frames], axis=-1)

    @property
    def shape(self):
        rows, cols, ch = self.frames[0].cells.shape
        return (rows, cols, ch * len(self.frames))
