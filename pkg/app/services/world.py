# -*- coding: utf-8 -*-
"""
仿真世界模块
回合初始化、0.1 秒定步长推进、碰撞检测、奖励与回合状态
"""

import copy
import logging
import math
from dataclasses import replace

import numpy as np

from app.config import SimulationConfig, ControlConfig
from app.errors import ConfigError, SpawnError, InvalidState, PathExhausted
from app.models.vehicle import Status, RewardSignal, VehicleState, WorldState
from app.services.control import lookahead_distance, pure_pursuit_steer, throttle_to_accel
from app.services.traffic import background_policy, footprint_clear, make_background_vehicle
from app.utils.geometry import rects_overlap_batch

logger = logging.getLogger(__name__)

EGO_ID = 0
COLLISION_PENALTY = -50.0
# 奖励归一化速度 (km/h)
REWARD_SPEED_KMH = 30.0


def _new_rng(seed):
    return np.random.default_rng(np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF))


def place_ego(scenario, config):
    """自车放在路线起点，朝向路线切线，初速度 0"""
    x, y, heading = scenario.ego_path.interpolate(0.0)
    return VehicleState(
        id=EGO_ID, x=x, y=y, heading=heading, speed=0.0,
        length=config.ego_length, width=config.ego_width,
        route=scenario.ego_route, progress=0.0,
        is_ego=True, wheelbase=config.ego_wheelbase,
    )


def reset(scenario, seed, density, config=None):
    """
    初始化一个回合

    参数:
        scenario: Scenario
        seed: 整数种子，决定背景车的数量、位置、车型和驾驶风格
        density: 密度预设名

    返回:
        WorldState

    异常:
        ConfigError: 场景没有该密度预设
        SpawnError: 有限次尝试内找不到无重叠布置
    """
    config = config or SimulationConfig()
    if density not in scenario.density_presets:
        raise ConfigError(f"场景 {scenario.id} 没有密度预设 {density!r}（可选 {sorted(scenario.density_presets)}）")
    preset = scenario.density_presets[density]
    rng = _new_rng(seed)

    vehicles = [place_ego(scenario, config)]
    count = int(rng.integers(preset.min_count, preset.max_count + 1))
    if count > 0 and not scenario.spawn_zones:
        raise SpawnError(f"场景 {scenario.id} 没有出生区，无法放置 {count} 辆背景车")

    next_id = EGO_ID + 1
    for _ in range(count):
        placed = None
        for _attempt in range(config.spawn_attempts):
            zone = scenario.spawn_zones[int(rng.integers(len(scenario.spawn_zones)))]
            progress = float(rng.uniform(zone.start, zone.end))
            candidate = make_background_vehicle(scenario, rng, next_id, zone, progress)
            if footprint_clear(candidate, vehicles, config.spawn_clearance):
                placed = candidate
                break
        if placed is None:
            raise SpawnError(f"{scenario.id}/{density}: 第 {next_id} 辆背景车 "
                             f"{config.spawn_attempts} 次尝试均无法放置")
        vehicles.append(placed)
        next_id += 1

    return WorldState(
        scenario=scenario, density=density, vehicles=tuple(vehicles),
        rng_seed=int(seed), rng=rng, config=config, next_id=next_id,
    )


def _advance_along_route(vehicle, accel, steering, dt, scenario):
    moved = vehicle.advanced(accel, steering, dt)
    path = scenario.route_polyline(vehicle.route)
    window = 5.0 + 3.0 * vehicle.speed * dt
    progress, _ = path.project((moved.x, moved.y), hint=vehicle.progress, window=window)
    return replace(moved, progress=progress)


def _step_background(vehicle, world, control_cfg):
    """推进一辆背景车；到达路线终点返回 None"""
    path = world.scenario.route_polyline(vehicle.route)
    accel = background_policy(vehicle, world)
    try:
        steering = pure_pursuit_steer(vehicle.pose, path, lookahead_distance(vehicle.speed, control_cfg),
                                      vehicle.wheelbase, control_cfg.steer_limit,
                                      hint=vehicle.progress, window=5.0 + vehicle.speed)
    except PathExhausted:
        return None
    moved = _advance_along_route(vehicle, accel, steering, world.config.dt, world.scenario)
    if moved.progress >= path.length:
        return None
    return moved


def _maybe_spawn(world, vehicles, rng):
    """回合进行中按 spawn_rate·dt 概率在出生区起点补充车辆"""
    scenario = world.scenario
    preset = scenario.density_presets[world.density]
    n_background = sum(1 for v in vehicles if not v.is_ego)
    if not scenario.spawn_zones or preset.spawn_rate <= 0 or n_background >= preset.max_count:
        return vehicles, world.next_id
    if rng.random() >= preset.spawn_rate * world.config.dt:
        return vehicles, world.next_id
    zone = scenario.spawn_zones[int(rng.integers(len(scenario.spawn_zones)))]
    candidate = make_background_vehicle(scenario, rng, world.next_id, zone, zone.start)
    if not footprint_clear(candidate, vehicles, world.config.spawn_clearance):
        return vehicles, world.next_id
    return vehicles + [candidate], world.next_id + 1


def step(world, ego_controls, control_cfg=None):
    """
    世界推进一步 (dt = 0.1 s)

    参数:
        world: 处于 Running 状态的 WorldState
        ego_controls: (油门/刹车 ∈ [-1,1], 转向角 rad)

    返回:
        新的 WorldState；输入状态不被修改

    异常:
        InvalidState: world 已终止
    """
    if world.status.is_terminal:
        raise InvalidState(f"回合已结束 ({world.status.value})，不能继续 step")
    control_cfg = control_cfg or ControlConfig()
    cfg = world.config
    rng = copy.deepcopy(world.rng)
    throttle, steering = ego_controls
    steering = min(max(float(steering), -control_cfg.steer_limit), control_cfg.steer_limit)

    advanced = []
    removed = []
    # 所有背景车基于上一时刻的世界同步决策
    for vehicle in world.vehicles:
        if vehicle.is_ego:
            accel = throttle_to_accel(float(throttle), cfg.throttle_accel, cfg.brake_decel)
            advanced.append(_advance_along_route(vehicle, accel, steering, cfg.dt, world.scenario))
            continue
        moved = _step_background(vehicle, world, control_cfg)
        if moved is None:
            removed.append(vehicle.id)
        else:
            advanced.append(moved)

    candidate = replace(world, vehicles=tuple(advanced), rng=rng, step_index=world.step_index + 1)
    pairs = check_collision(candidate)
    status = episode_status(candidate, pairs)
    vehicles = list(advanced)
    if status is not Status.COLLISION:
        # 背景车互撞：双方移出场景，回合继续
        crashed = {i for pair in pairs for i in pair}
        if crashed:
            logger.debug("[场景] 第 %d 步背景车碰撞移除: %s", candidate.step_index, sorted(crashed))
            removed.extend(sorted(crashed))
            vehicles = [v for v in vehicles if v.id not in crashed]
    next_id = world.next_id
    if status is Status.RUNNING:
        vehicles, next_id = _maybe_spawn(candidate, vehicles, rng)
    return replace(candidate, vehicles=tuple(vehicles), status=status,
                   next_id=next_id, removed=tuple(removed))


def check_collision(world):
    """
    返回所有足迹重叠的车辆 id 对 (a, b)，a < b

    先用外接圆粗筛，再对候选对做分离轴测试
    """
    vehicles = world.vehicles
    n = len(vehicles)
    if n < 2:
        return []
    xy = np.array([[v.x, v.y] for v in vehicles])
    radius = np.array([0.5 * math.hypot(v.length, v.width) for v in vehicles])
    dist = np.linalg.norm(xy[:, None, :] - xy[None, :, :], axis=-1)
    ii, jj = np.nonzero(np.triu(dist < radius[:, None] + radius[None, :], k=1))
    if len(ii) == 0:
        return []
    corners = np.stack([v.corners() for v in vehicles])
    hits = rects_overlap_batch(corners[ii], corners[jj])
    pairs = []
    for i, j in zip(ii[hits], jj[hits]):
        a, b = vehicles[i].id, vehicles[j].id
        pairs.append((min(a, b), max(a, b)))
    return sorted(pairs)


def ego_collided(world, pairs=None):
    pairs = check_collision(world) if pairs is None else pairs
    return any(EGO_ID in pair for pair in pairs)


def compute_reward(world):
    """
    自车奖励：碰撞为 -50，否则为 clamp(v_kmh / 30, 0, 1)
    """
    if ego_collided(world):
        return RewardSignal(value=COLLISION_PENALTY, collision_flag=True)
    speed_kmh = world.ego.speed * 3.6
    return RewardSignal(value=float(min(max(speed_kmh / REWARD_SPEED_KMH, 0.0), 1.0)),
                        collision_flag=False)


def at_goal(world):
    ego = world.ego
    gx, gy = world.scenario.goal_point
    return math.hypot(ego.x - gx, ego.y - gy) <= world.scenario.goal_region.radius


def episode_status(world, pairs=None):
    """
    回合状态判定，优先级 Collision > Success > Timeout

    已终止的世界保持原状态
    """
    if world.status.is_terminal:
        return world.status
    if ego_collided(world, pairs):
        return Status.COLLISION
    if at_goal(world):
        return Status.SUCCESS
    if world.step_index >= world.config.timeout_steps:
        return Status.TIMEOUT
    return Status.RUNNING


def world_corners(world, exclude_ego=True):
    """所有（背景）车辆足迹角点，(N, 4, 2)，以及对应 id"""
    selected = [v for v in world.vehicles if not (exclude_ego and v.is_ego)]
    if not selected:
        return np.empty((0, 4, 2)), []
    return np.stack([v.corners() for v in selected]), [v.id for v in selected]
