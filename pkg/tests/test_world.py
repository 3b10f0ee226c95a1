# -*- coding: utf-8 -*-
import math
from dataclasses import replace

import pytest

from app.config import SimulationConfig
from app.errors import ConfigError, InvalidState
from app.models.vehicle import BehaviorParams, Status, VehicleState
from app.services import world as sim

CALM = BehaviorParams(desired_speed=8.0, min_gap=2.0, time_headway=1.0, max_accel=2.0,
                      comfort_decel=4.0, yield_aggressiveness=0.5)


def _background(vid, x, route=("main",)):
    return VehicleState(id=vid, x=x, y=0.0, heading=0.0, speed=0.0, length=4.5, width=1.9,
                        route=route, progress=x, behavior=CALM)


def test_reset_is_deterministic(t_merge):
    a = sim.reset(t_merge, 123, "regular")
    b = sim.reset(t_merge, 123, "regular")
    assert a.vehicles == b.vehicles
    preset = t_merge.density_presets["regular"]
    assert preset.min_count <= len(a.background) <= preset.max_count
    assert sim.check_collision(a) == []


def test_dense_never_spawns_fewer_than_regular(t_merge):
    for seed in range(100):
        regular = sim.reset(t_merge, seed, "regular")
        dense = sim.reset(t_merge, seed, "dense")
        assert len(dense.background) >= len(regular.background)
        assert sim.check_collision(dense) == []


def test_reset_places_ego_at_route_start(t_merge):
    world = sim.reset(t_merge, 1, "empty")
    ego = world.ego
    assert ego.speed == 0.0 and ego.progress == 0.0
    assert (ego.x, ego.y) == pytest.approx(tuple(t_merge.ego_path.points[0]))
    assert world.background == ()


def test_unknown_density(t_merge):
    with pytest.raises(ConfigError, match="rush_hour"):
        sim.reset(t_merge, 1, "rush_hour")


def test_step_does_not_mutate_input(t_merge):
    world = sim.reset(t_merge, 7, "regular")
    before = world.vehicles
    first = sim.step(world, (1.0, 0.0))
    second = sim.step(world, (1.0, 0.0))
    assert world.vehicles == before and world.step_index == 0
    assert first.vehicles == second.vehicles
    assert first.step_index == 1
    assert first.time == pytest.approx(0.1)


def test_ego_accelerates_under_full_throttle(single_lane):
    world = sim.reset(single_lane, 0, "empty")
    for _ in range(10):
        world = sim.step(world, (1.0, 0.0))
    assert world.ego.speed == pytest.approx(3.0, rel=1e-6)
    assert world.ego.progress > 0
    assert sim.compute_reward(world).value == pytest.approx(min(3.0 * 3.6 / 30.0, 1.0))


def test_braking_never_reverses(single_lane):
    world = sim.reset(single_lane, 0, "empty")
    world = sim.step(world, (-1.0, 0.0))
    assert world.ego.speed == 0.0
    assert sim.compute_reward(world).value == 0.0


def test_collision_with_ego_terminates(single_lane):
    world = sim.reset(single_lane, 0, "empty")
    world = world.with_vehicles(world.vehicles + (_background(5, 3.0),))
    nxt = sim.step(world, (0.0, 0.0))
    assert nxt.status is Status.COLLISION
    reward = sim.compute_reward(nxt)
    assert reward.collision_flag and reward.value == sim.COLLISION_PENALTY
    with pytest.raises(InvalidState):
        sim.step(nxt, (0.0, 0.0))


def test_background_crash_removes_both(single_lane):
    world = sim.reset(single_lane, 0, "empty")
    world = world.with_vehicles(world.vehicles + (_background(5, 60.0), _background(6, 62.0)))
    nxt = sim.step(world, (0.0, 0.0))
    assert nxt.status is Status.RUNNING
    assert set(nxt.removed) == {5, 6}
    assert nxt.background == ()


def test_goal_reached_is_success(single_lane):
    world = sim.reset(single_lane, 0, "empty")
    gx, _ = single_lane.goal_point
    ego = replace(world.ego, x=gx - 0.5, progress=gx - 0.5, speed=2.0)
    nxt = sim.step(world.with_vehicles((ego,)), (0.0, 0.0))
    assert nxt.status is Status.SUCCESS


def test_timeout(single_lane):
    world = sim.reset(single_lane, 0, "empty", SimulationConfig(timeout_steps=3))
    for _ in range(3):
        world = sim.step(world, (-1.0, 0.0))
    assert world.status is Status.TIMEOUT
    assert world.status.is_terminal


def test_collision_takes_priority_over_success(single_lane):
    world = sim.reset(single_lane, 0, "empty")
    gx, _ = single_lane.goal_point
    ego = replace(world.ego, x=gx, progress=gx)
    crowded = world.with_vehicles((ego, _background(9, gx + 1.0)))
    assert sim.episode_status(crowded) is Status.COLLISION


def test_with_vehicles_rejects_two_egos(single_lane):
    world = sim.reset(single_lane, 0, "empty")
    with pytest.raises(ValueError):
        world.with_vehicles((world.ego, replace(world.ego, id=3)))


def test_vehicle_kinematics_straight_line():
    v = VehicleState(id=0, x=0.0, y=0.0, heading=0.0, speed=10.0, length=4.5, width=1.9, route=("main",))
    moved = v.advanced(2.0, 0.0, 0.1)
    assert moved.x == pytest.approx(1.0)
    assert moved.speed == pytest.approx(10.2)
    assert math.isclose(moved.heading, 0.0)
