# -*- coding: utf-8 -*-
"""
FSM-TTC 规则基线
可见性判定 + 足迹 TTC + Cruise / Approach / Yield / Go 有限状态机，输出与学习策略相同的离散动作
"""

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from app.config import BaselineConfig, SensingConfig
from app.services.lidar import scan_world
from app.utils.geometry import rect_corners, rect_corners_batch, rects_overlap_batch, segment_blocked

ACTION_STOP = 0
ACTION_APPROACH = 2
ACTION_CRUISE = 3

BISECTION_STEPS = 20


# ==================== 可见性 ====================

def visible_vehicles(ego, world, scan=None, sensing: SensingConfig = None):
    """
    自车可见的背景车

    可见条件（任一成立）：
      1. 本帧激光雷达有回波落在该车上
      2. 从自车中心到该车任一角点或中心的连线不被其他车辆足迹遮挡，且在雷达量程内
    """
    sensing = sensing or SensingConfig()
    others = list(world.background)
    if not others:
        return []
    scan = scan if scan is not None else scan_world(world, sensing)
    lidar_ids = set(int(i) for i in scan.hit_ids[scan.hit_ids >= 0])

    corners = {v.id: v.corners() for v in others}
    origin = np.array([ego.x, ego.y])
    visible = []
    for v in others:
        if v.id in lidar_ids:
            visible.append(v)
            continue
        blockers = [corners[o.id] for o in others if o.id != v.id]
        if blockers:
            stacked = np.stack(blockers)
            seg_a = stacked.reshape(-1, 2)
            seg_b = np.roll(stacked, -1, axis=1).reshape(-1, 2)
        else:
            seg_a = seg_b = np.empty((0, 2))
        targets = np.vstack([corners[v.id], [[v.x, v.y]]])
        for target in targets:
            if np.hypot(*(target - origin)) > sensing.max_range:
                continue
            if not segment_blocked(origin, target, seg_a, seg_b):
                visible.append(v)
                break
    return visible


# ==================== TTC ====================

@dataclass(frozen=True)
class TtcEstimate:
    other_id: int
    ttc: float
    conflict_point: tuple = None


def _ego_poses(path, s0, speed, times):
    x, y, heading = path.interpolate(s0 + speed * np.asarray(times))
    return np.asarray(x), np.asarray(y), np.asarray(heading)


def _overlap_at(ego, path, s0, ego_speed, other, times):
    ex, ey, eh = _ego_poses(path, s0, ego_speed, times)
    ox = other.x + other.speed * math.cos(other.heading) * times
    oy = other.y + other.speed * math.sin(other.heading) * times
    ego_corners = rect_corners_batch(ex, ey, eh, ego.length, ego.width)
    other_corners = rect_corners_batch(ox, oy, np.full_like(times, other.heading), other.length, other.width)
    return rects_overlap_batch(ego_corners, other_corners)


def compute_ttc(ego, path, other, ego_speed=None, horizon=10.0, dt=0.01):
    """
    足迹碰撞时间

    自车以 ego_speed 沿 path 匀速前进（起点为 ego.progress），他车保持速度与航向；
    先以 dt 采样找到首个重叠时刻，再在该区间内二分细化

    返回:
        TtcEstimate；horizon 内无重叠时 ttc 为 inf，初始即重叠时为 0
    """
    speed = ego.speed if ego_speed is None else ego_speed
    times = np.arange(0.0, horizon + 0.5 * dt, dt)
    overlap = _overlap_at(ego, path, ego.progress, speed, other, times)
    hits = np.flatnonzero(overlap)
    if len(hits) == 0:
        return TtcEstimate(other_id=other.id, ttc=math.inf)
    k = int(hits[0])
    if k == 0:
        ttc = 0.0
    else:
        lo, hi = float(times[k - 1]), float(times[k])
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            if _overlap_at(ego, path, ego.progress, speed, other, np.array([mid]))[0]:
                hi = mid
            else:
                lo = mid
        ttc = hi
    ex, ey, _ = path.interpolate(ego.progress + speed * ttc)
    ox = other.x + other.speed * math.cos(other.heading) * ttc
    oy = other.y + other.speed * math.sin(other.heading) * ttc
    return TtcEstimate(other_id=other.id, ttc=ttc, conflict_point=(0.5 * (ex + ox), 0.5 * (ey + oy)))


def rollout_ttc(ego, path, other, ego_speed=None, horizon=10.0, dt=0.01):
    """逐步推进的暴力 TTC（用作对照）"""
    speed = ego.speed if ego_speed is None else ego_speed
    steps = int(round(horizon / dt))
    for i in range(steps + 1):
        t = i * dt
        x, y, h = path.interpolate(ego.progress + speed * t)
        a = rect_corners(x, y, h, ego.length, ego.width)
        b = rect_corners(other.x + other.speed * math.cos(other.heading) * t,
                         other.y + other.speed * math.sin(other.heading) * t,
                         other.heading, other.length, other.width)
        if rects_overlap_batch(a, b):
            return t
    return math.inf


# ==================== 有限状态机 ====================

class FsmMode(str, Enum):
    CRUISE = "cruise"
    APPROACH = "approach"
    YIELD = "yield"
    GO = "go"


MODE_ACTIONS = {
    FsmMode.CRUISE: ACTION_CRUISE,
    FsmMode.APPROACH: ACTION_APPROACH,
    FsmMode.YIELD: ACTION_STOP,
    FsmMode.GO: ACTION_CRUISE,
}

TRANSITIONS = {
    FsmMode.CRUISE: {FsmMode.CRUISE, FsmMode.APPROACH, FsmMode.YIELD, FsmMode.GO},
    FsmMode.APPROACH: {FsmMode.APPROACH, FsmMode.YIELD, FsmMode.GO, FsmMode.CRUISE},
    FsmMode.YIELD: {FsmMode.YIELD, FsmMode.GO},
    FsmMode.GO: {FsmMode.GO, FsmMode.YIELD, FsmMode.CRUISE},
}


@dataclass(frozen=True)
class JunctionContext:
    """自车路线上冲突区的弧长范围 [enter, exit] 与各冲突点坐标"""
    enter: float
    exit: float
    points: tuple

    @classmethod
    def from_scenario(cls, scenario, margin):
        conflicts = scenario.route_conflicts(scenario.ego_route)
        if not conflicts:
            return None
        s_values = [s for s, _, _ in conflicts]
        points = tuple(tuple(c.point) for _, c, _ in conflicts)
        return cls(enter=min(s_values) - margin, exit=max(s_values) + margin, points=points)


@dataclass(frozen=True)
class FsmState:
    mode: FsmMode = FsmMode.CRUISE
    junction: JunctionContext = None
    distance_to_junction: float = math.inf
    clear_steps: int = 0
    min_ttc: float = math.inf


def _ahead(ego, other):
    """他车是否不在自车正后方"""
    dx, dy = other.x - ego.x, other.y - ego.y
    return dx * math.cos(ego.heading) + dy * math.sin(ego.heading) > -0.5 * ego.length


def zone_occupied(junction, visible, radius):
    if junction is None:
        return False
    for v in visible:
        for px, py in junction.points:
            if math.hypot(v.x - px, v.y - py) <= radius:
                return True
    return False


def fsm_policy(state, ego, visible, path, cfg: BaselineConfig = None, radius=4.0):
    """
    单步决策

    参数:
        state: 当前 FsmState（junction 为 None 表示路线上没有冲突区）
        ego: 自车 VehicleState
        visible: 可见背景车列表
        path: 自车路线折线
        radius: 冲突点占用判定半径（米）
    返回:
        (动作序号, 新 FsmState)
    """
    cfg = cfg or BaselineConfig()
    junction = state.junction
    probe = max(ego.speed, cfg.probe_speed_kmh / 3.6)
    candidates = [v for v in visible if _ahead(ego, v)]
    ttcs = [compute_ttc(ego, path, v, ego_speed=probe, horizon=cfg.horizon, dt=cfg.ttc_dt).ttc
            for v in candidates]
    min_ttc = min(ttcs, default=math.inf)

    if junction is None:
        distance, entered, passed, occupied = math.inf, False, False, False
    else:
        distance = junction.enter - ego.progress
        entered = ego.progress >= junction.enter
        passed = ego.progress > junction.exit
        occupied = zone_occupied(junction, candidates, radius)
    danger = min_ttc < cfg.t_yield or occupied
    clear = min_ttc >= cfg.t_go and not occupied

    mode = state.mode
    clear_steps = state.clear_steps + 1 if clear else 0
    if not entered and not passed and danger:
        next_mode = FsmMode.YIELD
    elif mode is FsmMode.YIELD:
        next_mode = FsmMode.GO if clear_steps >= cfg.hysteresis else FsmMode.YIELD
    elif passed:
        next_mode = FsmMode.CRUISE
    elif entered:
        next_mode = FsmMode.GO
    elif distance <= cfg.approach_distance and mode is not FsmMode.GO:
        next_mode = FsmMode.APPROACH
    else:
        next_mode = mode

    if next_mode not in TRANSITIONS[mode]:
        raise RuntimeError(f"非法状态转移 {mode.value} → {next_mode.value}")
    new_state = replace(state, mode=next_mode, distance_to_junction=distance,
                        clear_steps=clear_steps, min_ttc=min_ttc)
    return MODE_ACTIONS[next_mode], new_state
