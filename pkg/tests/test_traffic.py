# -*- coding: utf-8 -*-
from dataclasses import replace

import numpy as np
import pytest

from app.models.vehicle import BehaviorParams, Status, VehicleState
from app.services import world as sim
from app.services.traffic import (
    background_policy, decides_to_yield, idm_acceleration, sample_behavior, sample_route, yield_stop_gap,
)

BEHAVIOR = BehaviorParams(desired_speed=10.0, min_gap=2.0, time_headway=1.5, max_accel=2.0,
                          comfort_decel=4.0, yield_aggressiveness=0.3)


def test_idm_free_road():
    assert idm_acceleration(0.0, BEHAVIOR) == pytest.approx(2.0)
    assert idm_acceleration(10.0, BEHAVIOR) == pytest.approx(0.0)
    assert idm_acceleration(12.0, BEHAVIOR) < 0


def test_idm_closes_on_slow_leader():
    far = idm_acceleration(8.0, BEHAVIOR, gap=100.0, leader_speed=8.0)
    near = idm_acceleration(8.0, BEHAVIOR, gap=5.0, leader_speed=0.0)
    assert near < 0 < far + 1e-9
    assert near < far


def test_idm_brakes_hard_behind_stopped_leader_at_min_gap():
    # 前车静止在 2 m（= min_gap）处
    for speed in (2.0, 5.0, 10.0):
        accel = idm_acceleration(speed, BEHAVIOR, gap=BEHAVIOR.min_gap, leader_speed=0.0)
        assert accel <= -BEHAVIOR.comfort_decel / 2
    assert idm_acceleration(0.0, BEHAVIOR, gap=BEHAVIOR.min_gap, leader_speed=0.0) == pytest.approx(0.0)


def test_idm_equilibrium_gap():
    v = 5.0
    s_star = BEHAVIOR.min_gap + v * BEHAVIOR.time_headway
    s_eq = s_star / np.sqrt(1.0 - (v / BEHAVIOR.desired_speed) ** 4)
    assert idm_acceleration(v, BEHAVIOR, gap=s_eq, leader_speed=v) == pytest.approx(0.0, abs=1e-9)


def test_behavior_params_validate():
    with pytest.raises(ValueError):
        BehaviorParams(desired_speed=0.0, min_gap=2.0, time_headway=1.0, max_accel=1.0,
                       comfort_decel=1.0, yield_aggressiveness=0.5)
    with pytest.raises(ValueError):
        BehaviorParams(desired_speed=5.0, min_gap=2.0, time_headway=1.0, max_accel=1.0,
                       comfort_decel=1.0, yield_aggressiveness=1.5)


def test_sampled_behavior_is_heterogeneous():
    rng = np.random.default_rng(0)
    samples = [sample_behavior(rng) for _ in range(20)]
    assert len({b.desired_speed for b in samples}) == 20
    assert all(0.0 <= b.yield_aggressiveness <= 1.0 for b in samples)


def test_sample_route_ends_on_exit_lane(t_merge):
    rng = np.random.default_rng(3)
    for _ in range(10):
        route = sample_route(t_merge, "eb_in", rng)
        assert route[0] == "eb_in"
        assert t_merge.lanes[route[-1]].successors == ()
        for a, b in zip(route, route[1:]):
            assert b in t_merge.lanes[a].successors


def test_yield_decision_is_deterministic(t_merge):
    world = sim.reset(t_merge, 11, "regular")
    vehicle = world.background[0]
    conflict = t_merge.conflicts[0]
    assert decides_to_yield(vehicle, conflict) == decides_to_yield(vehicle, conflict)
    always = replace(vehicle, behavior=replace(vehicle.behavior, yield_aggressiveness=0.0))
    never = replace(vehicle, behavior=replace(vehicle.behavior, yield_aggressiveness=1.0))
    assert decides_to_yield(always, conflict)
    assert not decides_to_yield(never, conflict)


def test_background_policy_bounds(t_merge):
    world = sim.reset(t_merge, 5, "regular")
    for v in world.background:
        a = background_policy(v, world)
        assert -v.behavior.comfort_decel <= a <= v.behavior.max_accel
        gap = yield_stop_gap(v, world)
        assert gap is None or gap > 0
    with pytest.raises(ValueError):
        background_policy(world.ego, world)


# ==================== 路口脚本化场景 ====================

def _crossing_vehicle(progress, speed, behavior):
    return VehicleState(id=1, x=progress - 80.0, y=0.0, heading=0.0, speed=speed, length=4.5, width=1.9,
                        route=("we",), progress=progress, behavior=behavior)


def test_timid_driver_stops_before_occupied_junction(crossing):
    world = sim.reset(crossing, 0, "empty")
    # 自车停在冲突点上
    ego = replace(world.ego, y=0.0, progress=60.0)
    timid = _crossing_vehicle(40.0, 6.0, replace(BEHAVIOR, yield_aggressiveness=0.0))
    world = world.with_vehicles((ego, timid))
    stop_line = 80.0 - world.config.conflict_radius
    for _ in range(150):
        world = sim.step(world, (0.0, 0.0))
        assert world.status is Status.RUNNING
        (vehicle,) = world.background
        assert vehicle.progress + 0.5 * vehicle.length <= stop_line
    assert vehicle.speed < 0.1
    assert vehicle.progress > 60.0


def test_nobody_yields_ends_in_collision(crossing):
    world = sim.reset(crossing, 0, "empty")
    # 自车全油门约 6.4 s 到达冲突点，他车以期望速度同时到达
    reckless = _crossing_vehicle(29.0, 8.0, replace(BEHAVIOR, desired_speed=8.0, yield_aggressiveness=1.0))
    world = world.with_vehicles((world.ego, reckless))
    for _ in range(120):
        world = sim.step(world, (1.0, 0.0))
        if world.status.is_terminal:
            break
    assert world.status is Status.COLLISION
    assert 55 <= world.step_index <= 70
