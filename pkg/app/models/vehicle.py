# -*- coding: utf-8 -*-
"""
车辆与世界状态数据模型
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from app.config import SimulationConfig
from app.utils.geometry import rect_corners


class Status(str, Enum):
    """回合状态；终止状态不可再变化"""
    RUNNING = "Running"
    SUCCESS = "Success"
    COLLISION = "Collision"
    TIMEOUT = "Timeout"

    @property
    def is_terminal(self):
        return self is not Status.RUNNING


@dataclass(frozen=True)
class BehaviorParams:
    """背景车驾驶风格参数"""
    desired_speed: float
    min_gap: float
    time_headway: float
    max_accel: float
    comfort_decel: float
    yield_aggressiveness: float  # 0 = 路口总是让行, 1 = 从不让行

    def __post_init__(self):
        for name in ("desired_speed", "min_gap", "time_headway", "max_accel", "comfort_decel"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} 必须为正数")
        if not 0.0 <= self.yield_aggressiveness <= 1.0:
            raise ValueError("yield_aggressiveness 必须在 [0, 1] 内")


@dataclass(frozen=True)
class VehicleState:
    """
    单辆车的动态状态

    route 为车道 id 序列，progress 为沿路线折线的弧长（米）
    """
    id: int
    x: float
    y: float
    heading: float
    speed: float
    length: float
    width: float
    route: tuple
    progress: float = 0.0
    behavior: BehaviorParams = None
    is_ego: bool = False
    wheelbase: float = 2.7
    yield_seed: int = 0

    def __post_init__(self):
        if self.speed < 0:
            raise ValueError("车速不能为负")
        if self.length <= 0 or self.width <= 0:
            raise ValueError("车辆尺寸必须为正")

    @property
    def position(self):
        return (self.x, self.y)

    @property
    def pose(self):
        return (self.x, self.y, self.heading)

    def corners(self):
        return rect_corners(self.x, self.y, self.heading, self.length, self.width)

    def advanced(self, accel, steering, dt):
        """
        运动学自行车模型前向欧拉积分一步

        位移使用积分前的速度，速度截断为非负
        """
        v = self.speed
        x = self.x + v * math.cos(self.heading) * dt
        y = self.y + v * math.sin(self.heading) * dt
        heading = self.heading + v / self.wheelbase * math.tan(steering) * dt
        heading = math.atan2(math.sin(heading), math.cos(heading))
        return replace(self, x=x, y=y, heading=heading, speed=max(0.0, v + accel * dt))


@dataclass(frozen=True)
class RewardSignal:
    value: float
    collision_flag: bool


@dataclass
class WorldState:
    """
    仿真世界快照

    step() 总是返回新的 WorldState，旧状态（包括随机数发生器）不被修改
    """
    scenario: object
    density: str
    vehicles: tuple
    rng_seed: int
    rng: np.random.Generator
    config: SimulationConfig = field(default_factory=SimulationConfig)
    step_index: int = 0
    status: Status = Status.RUNNING
    next_id: int = 1
    # 上一步因背景车互撞或驶出路线而移除的车辆 id
    removed: tuple = ()

    @property
    def time(self):
        return self.step_index * self.config.dt

    @property
    def ego(self):
        for v in self.vehicles:
            if v.is_ego:
                return v
        return None

    @property
    def background(self):
        return tuple(v for v in self.vehicles if not v.is_ego)

    def vehicle(self, vehicle_id):
        for v in self.vehicles:
            if v.id == vehicle_id:
                return v
        raise KeyError(vehicle_id)

    def with_vehicles(self, vehicles):
        """替换车辆列表（测试和脚本化场景使用）"""
        vehicles = tuple(vehicles)
        egos = [v for v in vehicles if v.is_ego]
        if len(egos) > 1:
            raise ValueError("世界中最多只能有一辆自车")
        next_id = max([self.next_id] + [v.id + 1 for v in vehicles])
        return replace(self, vehicles=vehicles, next_id=next_id)
