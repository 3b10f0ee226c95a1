# -*- coding: utf-8 -*-
"""
背景交通模块
IDM 跟车、路口概率让行、车辆属性抽样与出生布置
"""

import math

import numpy as np

from app.config import VEHICLE_TYPES
from app.models.vehicle import BehaviorParams, VehicleState
from app.utils.geometry import rect_corners, rects_overlap

# 到达时间估计使用的最低速度（m/s），避免静止车辆的到达时间为无穷
MIN_ARRIVAL_SPEED = 0.5
# 背景车路线最多串联的车道数（环岛可能无限绕圈）
MAX_ROUTE_LANES = 8
# IDM 计算中车距的下限（米）
MIN_GAP_FLOOR = 0.1


# ==================== 属性抽样 ====================

def sample_behavior(rng):
    """抽样一组异质驾驶风格参数"""
    return BehaviorParams(
        desired_speed=float(rng.uniform(6.0, 11.0)),
        min_gap=float(rng.uniform(1.5, 3.0)),
        time_headway=float(rng.uniform(0.8, 1.8)),
        max_accel=float(rng.uniform(1.5, 3.0)),
        comfort_decel=float(rng.uniform(3.5, 5.0)),
        yield_aggressiveness=float(rng.uniform(0.0, 1.0)),
    )


def sample_vehicle_type(rng):
    """按权重抽样车型，返回 (长, 宽)"""
    weights = np.array([t[2] for t in VEHICLE_TYPES])
    idx = int(rng.choice(len(VEHICLE_TYPES), p=weights / weights.sum()))
    return VEHICLE_TYPES[idx][0], VEHICLE_TYPES[idx][1]


def sample_route(scenario, start_lane, rng):
    """从起始车道出发随机选择后继，直到没有后继的车道"""
    route = [start_lane]
    while len(route) < MAX_ROUTE_LANES:
        successors = scenario.lanes[route[-1]].successors
        if not successors:
            break
        route.append(successors[int(rng.integers(len(successors)))])
    return tuple(route)


# ==================== 路线定位 ====================

def lane_index(scenario, route, progress):
    """progress 所在的路线车道序号"""
    offsets = scenario.route_offsets(route)
    idx = int(np.searchsorted(offsets, progress, side='right')) - 1
    return min(max(idx, 0), len(route) - 1)


def find_leader(vehicle, world):
    """
    查找同一路线前方最近的车辆

    返回:
        (净车距, 前车速度)；前方 leader_lookahead 内无车时返回 None
    """
    scenario = world.scenario
    cfg = world.config
    offsets_v = scenario.route_offsets(vehicle.route)
    start_idx = lane_index(scenario, vehicle.route, vehicle.progress)
    ahead_lanes = vehicle.route[start_idx:]
    best = None
    for other in world.vehicles:
        if other.id == vehicle.id:
            continue
        o_idx = lane_index(scenario, other.route, other.progress)
        o_lane = other.route[o_idx]
        if o_lane not in ahead_lanes:
            continue
        j = start_idx + ahead_lanes.index(o_lane)
        o_local = other.progress - scenario.route_offsets(other.route)[o_idx]
        s_other = offsets_v[j] + o_local
        if s_other <= vehicle.progress:
            continue
        gap = s_other - vehicle.progress - 0.5 * (other.length + vehicle.length)
        if gap > cfg.leader_lookahead:
            continue
        if best is None or gap < best[0]:
            best = (gap, other.speed)
    return best


# ==================== 让行 ====================

def decides_to_yield(vehicle, conflict):
    """
    对某个冲突点是否让行

    由 (yield_seed, 冲突点序号) 确定性地抽取 u ~ U[0,1)，u ≥ 激进度时让行
    """
    aggressiveness = vehicle.behavior.yield_aggressiveness if vehicle.behavior else 1.0
    u = np.random.default_rng([vehicle.yield_seed, conflict.index]).random()
    return bool(u >= aggressiveness)


def _conflicting_traffic(vehicle, world, conflict, other_lane, d_vehicle):
    """冲突车道上是否有车辆占据冲突区或将先于本车到达"""
    scenario = world.scenario
    cfg = world.config
    radius = cfg.conflict_radius
    t_self = (d_vehicle - radius) / max(vehicle.speed, MIN_ARRIVAL_SPEED)
    for other in world.vehicles:
        if other.id == vehicle.id or other_lane not in other.route:
            continue
        o_idx = lane_index(scenario, other.route, other.progress)
        remaining = other.route[o_idx:]
        if other_lane not in remaining:
            continue
        j = o_idx + remaining.index(other_lane)
        s_conflict = scenario.route_offsets(other.route)[j] + conflict.position_on(other_lane)
        d_other = s_conflict - other.progress
        half = 0.5 * other.length
        if d_other + half < -radius:
            continue  # 已驶离冲突区
        if d_other - half <= radius:
            return True  # 正在冲突区内
        t_other = (d_other - radius) / max(other.speed, MIN_ARRIVAL_SPEED)
        if t_other < t_self and t_other <= cfg.yield_arrival_window:
            return True
    return False


def yield_stop_gap(vehicle, world):
    """
    需要让行时返回到停止线的净距离（作为静止虚拟前车），否则 None

    停止线位于冲突点前 conflict_radius 处；车头已越过停止线的冲突不再让行
    """
    cfg = world.config
    best = None
    for s_conflict, conflict, other_lane in world.scenario.route_conflicts(vehicle.route):
        d = s_conflict - vehicle.progress
        gap = d - cfg.conflict_radius - 0.5 * vehicle.length
        if gap <= 0.5:
            continue
        if d > cfg.yield_distance + cfg.conflict_radius:
            break
        if best is not None and gap >= best:
            continue
        if not _conflicting_traffic(vehicle, world, conflict, other_lane, d):
            continue
        if decides_to_yield(vehicle, conflict):
            best = gap
    return best


# ==================== 纵向加速度 ====================

def idm_acceleration(speed, behavior, gap=None, leader_speed=0.0):
    """
    智能驾驶员模型 (IDM)

    参数:
        speed: 本车速度
        behavior: BehaviorParams
        gap: 与前车净距离；None 表示前方无车
        leader_speed: 前车速度

    返回:
        加速度 (m/s²)，未截断
    """
    a_max = behavior.max_accel
    free = 1.0 - (speed / behavior.desired_speed) ** 4
    if gap is None:
        return a_max * free
    dv = speed - leader_speed
    s_star = behavior.min_gap + max(0.0, speed * behavior.time_headway
                                    + speed * dv / (2.0 * math.sqrt(a_max * behavior.comfort_decel)))
    s = max(gap, MIN_GAP_FLOOR)
    return a_max * (free - (s_star / s) ** 2)


def background_policy(vehicle, world):
    """
    背景车加速度：IDM 跟车，叠加路口让行约束

    让行建模为停止线处的静止虚拟前车；结果截断到 [-comfort_decel, max_accel]
    """
    if vehicle.is_ego:
        raise ValueError("background_policy 不适用于自车")
    behavior = vehicle.behavior
    accel = idm_acceleration(vehicle.speed, behavior)
    leader = find_leader(vehicle, world)
    if leader is not None:
        accel = min(accel, idm_acceleration(vehicle.speed, behavior, leader[0], leader[1]))
    stop_gap = yield_stop_gap(vehicle, world)
    if stop_gap is not None:
        accel = min(accel, idm_acceleration(vehicle.speed, behavior, stop_gap, 0.0))
    return float(np.clip(accel, -behavior.comfort_decel, behavior.max_accel))


# ==================== 出生布置 ====================

def footprint_clear(candidate, vehicles, clearance):
    """candidate 外扩 clearance 后与已有车辆均不重叠"""
    inflated = rect_corners(candidate.x, candidate.y, candidate.heading,
                            candidate.length + 2.0 * clearance, candidate.width + clearance)
    for other in vehicles:
        if math.hypot(other.x - candidate.x, other.y - candidate.y) > 0.5 * (
                candidate.length + other.length) + candidate.width + other.width + 2.0 * clearance:
            continue
        if rects_overlap(inflated, other.corners()):
            return False
    return True


def make_background_vehicle(scenario, rng, vehicle_id, zone, progress, speed_fraction=None):
    """
    在出生区 zone 的弧长 progress 处构造一辆背景车

    抽样顺序固定：路线、车型、驾驶风格、初速度比例、让行种子
    """
    route = sample_route(scenario, zone.lane_id, rng)
    length, width = sample_vehicle_type(rng)
    behavior = sample_behavior(rng)
    fraction = float(rng.uniform(0.6, 1.0)) if speed_fraction is None else speed_fraction
    yield_seed = int(rng.integers(0, 2 ** 63 - 1))
    x, y, heading = scenario.route_polyline(route).interpolate(progress)
    return VehicleState(
        id=vehicle_id, x=x, y=y, heading=heading,
        speed=behavior.desired_speed * fraction,
        length=length, width=width,
        route=route, progress=float(progress),
        behavior=behavior, is_ego=False,
        wheelbase=0.6 * length, yield_seed=yield_seed,
    )
