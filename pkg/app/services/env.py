# -*- coding: utf-8 -*-
"""
gymnasium 环境封装
把仿真世界、感知与控制组合为 Discrete(4) 动作、H×W×9 观测的强化学习环境
"""

import logging

import gymnasium as gym
import numpy as np
from gymnasium import spaces

from app.config import Settings
from app.errors import PathExhausted
from app.models.vehicle import Status
from app.services import world as sim
from app.services.control import (
    N_ACTIONS, PidState, action_to_target_speed, lookahead_distance, pid_speed, pure_pursuit_steer,
)
from app.services.ogm import ObservationBuilder

logger = logging.getLogger(__name__)


class DrivingEnv(gym.Env):
    """
    单自车驾驶环境

    terminated 表示 Success / Collision，truncated 表示 Timeout；
    render_observation=False 时不生成栅格观测（规则策略评测用）
    """

    metadata = {"render_modes": []}

    def __init__(self, scenario, settings=None, density="regular", render_observation=True):
        super().__init__()
        self.scenario = scenario
        self.settings = settings or Settings()
        self.density = density
        self.render_observation = render_observation
        sensing = self.settings.sensing
        self.action_space = spaces.Discrete(N_ACTIONS)
        self.observation_space = spaces.Box(
            low=0.0, high=1.0,
            shape=(sensing.rows, sensing.cols, 3 * sensing.stack_frames),
            dtype=np.float32,
        )
        self.builder = ObservationBuilder(scenario, sensing, dt=self.settings.simulation.dt)
        self.world = None
        self.pid = PidState.from_config(self.settings.control)
        self.episode_return = 0.0

    def _observe(self):
        if not self.render_observation:
            return None
        return self.builder.observe(self.world)

    def _info(self):
        ego = self.world.ego
        return {
            "status": self.world.status.value,
            "time": self.world.time,
            "step_index": self.world.step_index,
            "ego_speed": ego.speed,
            "progress": ego.progress,
            "n_vehicles": len(self.world.background),
        }

    def reset(self, *, seed=None, options=None):
        super().reset(seed=seed)
        options = options or {}
        density = options.get("density", self.density)
        if seed is None:
            seed = int(self.np_random.integers(0, 2 ** 63 - 1))
        self.world = sim.reset(self.scenario, seed, density, self.settings.simulation)
        self.pid = PidState.from_config(self.settings.control)
        self.builder.reset()
        self.episode_return = 0.0
        return self._observe(), self._info()

    def controls_for(self, action):
        """离散动作 → (油门/刹车, 转向角)，同时推进 PID 状态"""
        ctrl = self.settings.control
        ego = self.world.ego
        target = action_to_target_speed(action)
        throttle, self.pid = pid_speed(target, ego.speed, self.pid, self.settings.simulation.dt)
        try:
            steering = pure_pursuit_steer(
                ego.pose, self.scenario.ego_path, lookahead_distance(ego.speed, ctrl),
                ego.wheelbase, ctrl.steer_limit, hint=ego.progress, window=5.0 + ego.speed,
            )
        except PathExhausted:
            steering = 0.0
        return throttle, steering

    def step(self, action):
        if self.world is None:
            raise RuntimeError("必须先调用 reset()")
        controls = self.controls_for(int(action))
        self.world = sim.step(self.world, controls, self.settings.control)
        reward = sim.compute_reward(self.world)
        self.episode_return += reward.value
        status = self.world.status
        terminated = status in (Status.SUCCESS, Status.COLLISION)
        truncated = status is Status.TIMEOUT
        info = self._info()
        info["collision"] = reward.collision_flag
        return self._observe(), reward.value, terminated, truncated, info
