# -*- coding: utf-8 -*-
"""
场景数据模型
车道图、出生区、自车路线、目标区域与交通密度预设
"""

from dataclasses import dataclass, field

import numpy as np

from app.utils.geometry import Polyline


@dataclass(frozen=True, eq=False)
class Lane:
    id: str
    centerline: Polyline
    width: float
    successors: tuple = ()

    @property
    def length(self):
        return self.centerline.length


@dataclass(frozen=True)
class SpawnZone:
    lane_id: str
    start: float
    end: float


@dataclass(frozen=True)
class GoalRegion:
    lane_id: str
    position: float
    radius: float


@dataclass(frozen=True)
class DensityPreset:
    name: str
    min_count: int
    max_count: int
    spawn_rate: float


@dataclass(frozen=True)
class ConflictPoint:
    """两条车道中心线的交叉或汇入点"""
    index: int
    lane_a: str
    s_a: float
    lane_b: str
    s_b: float
    point: tuple

    def other(self, lane_id):
        """返回 (另一条车道, 另一条车道上的弧长)"""
        if lane_id == self.lane_a:
            return self.lane_b, self.s_b
        return self.lane_a, self.s_a

    def position_on(self, lane_id):
        return self.s_a if lane_id == self.lane_a else self.s_b


@dataclass(eq=False)
class Scenario:
    """
    场景描述

    lanes 以 id 为键；conflicts 由加载器根据车道几何计算后填充
    """
    id: str
    lanes: dict
    spawn_zones: tuple
    ego_route: tuple
    goal_region: GoalRegion
    density_presets: dict
    format_version: int = 1
    description: str = ""
    conflicts: tuple = ()
    _cache: dict = field(default_factory=dict, repr=False)

    def lane(self, lane_id):
        return self.lanes[lane_id]

    def route_polyline(self, route):
        """路线（车道 id 序列）拼接后的折线，结果缓存"""
        key = ("route",) + tuple(route)
        cached = self._cache.get(key)
        if cached is None:
            points = np.concatenate([self.lanes[lid].centerline.points for lid in route])
            offsets = np.concatenate([[0.0], np.cumsum([self.lanes[lid].length for lid in route])])
            cached = (Polyline(points), offsets)
            self._cache[key] = cached
        return cached[0]

    def route_offsets(self, route):
        """路线中每条车道起点在路线弧长上的位置，末尾附总长"""
        self.route_polyline(route)
        return self._cache[("route",) + tuple(route)][1]

    @property
    def ego_path(self):
        return self.route_polyline(self.ego_route)

    @property
    def goal_progress(self):
        """目标点在自车路线上的弧长"""
        offsets = self.route_offsets(self.ego_route)
        return float(offsets[len(self.ego_route) - 1] + self.goal_region.position)

    @property
    def goal_point(self):
        lane = self.lanes[self.goal_region.lane_id]
        x, y, _ = lane.centerline.interpolate(self.goal_region.position)
        return (x, y)

    def conflicts_on(self, lane_id):
        return [c for c in self.conflicts if lane_id in (c.lane_a, c.lane_b)]

    def route_conflicts(self, route):
        """
        路线上的所有冲突点，按路线弧长排序

        返回:
            tuple of (路线弧长, ConflictPoint, 冲突车道 id)
        """
        key = ("conflicts",) + tuple(route)
        cached = self._cache.get(key)
        if cached is None:
            offsets = self.route_offsets(route)
            found = []
            for j, lane_id in enumerate(route):
                for c in self.conflicts_on(lane_id):
                    other_lane, _ = c.other(lane_id)
                    # 路线自身的车道之间不构成冲突（例如环道与驶出道）
                    if other_lane in route:
                        continue
                    found.append((float(offsets[j] + c.position_on(lane_id)), c, other_lane))
            cached = tuple(sorted(found, key=lambda item: item[0]))
            self._cache[key] = cached
        return cached

    def bounds(self, margin=10.0):
        """所有车道点的外接矩形 (xmin, ymin, xmax, ymax)"""
        pts = np.concatenate([lane.centerline.points for lane in self.lanes.values()])
        lo = pts.min(axis=0) - margin
        hi = pts.max(axis=0) + margin
        return float(lo[0]), float(lo[1]), float(hi[0]), float(hi[1])
