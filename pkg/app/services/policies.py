# -*- coding: utf-8 -*-
"""
评测策略
learned（检查点）、fsm_ttc（规则基线）、random、constant；每个回合由工厂新建一个策略实例
"""

import logging

import numpy as np
import torch

from app.config import Settings
from app.errors import ConfigError, CarlLeadError
from app.models.network import select_action
from app.services.baseline import FsmState, JunctionContext, fsm_policy, visible_vehicles
from app.services.control import N_ACTIONS
from app.services.learner import center_crop

logger = logging.getLogger(__name__)

POLICY_NAMES = ("learned", "fsm_ttc", "random", "constant")


class Policy:
    """策略基类：reset 在每个回合开始时调用，act 返回动作序号"""
    name = "policy"
    needs_observation = False

    def reset(self, env, seed):
        pass

    def act(self, env, obs):
        raise NotImplementedError


class ConstantPolicy(Policy):
    def __init__(self, action=N_ACTIONS - 1):
        if not 0 <= action < N_ACTIONS:
            raise ConfigError(f"constant 策略的动作必须在 0..{N_ACTIONS - 1} 内: {action}")
        self.action = action
        self.name = "constant" if action == N_ACTIONS - 1 else f"constant:{action}"

    def act(self, env, obs):
        return self.action


class RandomPolicy(Policy):
    name = "random"

    def __init__(self):
        self.rng = None

    def reset(self, env, seed):
        self.rng = np.random.default_rng([int(seed) & 0xFFFFFFFF, 7])

    def act(self, env, obs):
        return int(self.rng.integers(0, N_ACTIONS))


class LearnedPolicy(Policy):
    """评估模式（无噪声）贪心策略，输入为居中裁剪的观测"""
    name = "learned"
    needs_observation = True

    def __init__(self, network, crop_rows, crop_cols):
        self.network = network
        self.crop_rows = crop_rows
        self.crop_cols = crop_cols

    def act(self, env, obs):
        crop = center_crop(obs, self.crop_rows, self.crop_cols)
        with torch.no_grad():
            q_values = self.network(crop)
        return select_action(q_values[0])


class FsmTtcPolicy(Policy):
    name = "fsm_ttc"

    def __init__(self, settings):
        self.settings = settings
        self.state = None

    def reset(self, env, seed):
        junction = JunctionContext.from_scenario(env.scenario, self.settings.baseline.junction_margin)
        self.state = FsmState(junction=junction)

    def act(self, env, obs):
        world = env.world
        visible = visible_vehicles(world.ego, world, sensing=self.settings.sensing)
        action, self.state = fsm_policy(
            self.state, world.ego, visible, env.scenario.ego_path,
            self.settings.baseline, radius=self.settings.simulation.conflict_radius,
        )
        return action


class PolicyFactory:
    """
    按名称构造策略

    learned 策略共享同一个评估模式网络；noise_draws 记录构造时的噪声抽样计数，用于断言评测期间无噪声
    """

    def __init__(self, name, settings=None, checkpoint=None):
        self.settings = settings or Settings()
        self.spec = name
        self.network = None
        kind, _, arg = name.partition(":")
        if kind not in POLICY_NAMES:
            raise ConfigError(f"未知策略 {name}（可选 {', '.join(POLICY_NAMES)}，constant 可写作 constant:<动作>）")
        self.kind = kind
        if kind == "constant":
            try:
                self.constant_action = int(arg) if arg else N_ACTIONS - 1
            except ValueError as e:
                raise ConfigError(f"constant 策略参数无效: {arg}") from e
            ConstantPolicy(self.constant_action)
        if kind == "learned":
            if checkpoint is None:
                raise ConfigError("learned 策略需要 --checkpoint")
            from app.services.checkpoint import load_checkpoint
            self.network = load_checkpoint(checkpoint).online
        self._attach(self.network)

    def _attach(self, network):
        self.network = network
        if network is not None:
            network.eval()
        self.noise_draws = network.noise_draws if network is not None else 0

    @classmethod
    def from_network(cls, network, settings=None):
        """直接使用内存中的网络构造 learned 策略"""
        factory = cls.__new__(cls)
        factory.settings = settings or Settings()
        factory.spec = "learned"
        factory.kind = "learned"
        factory._attach(network)
        return factory

    @property
    def name(self):
        return self.spec

    def __call__(self):
        if self.kind == "constant":
            return ConstantPolicy(self.constant_action)
        if self.kind == "random":
            return RandomPolicy()
        if self.kind == "fsm_ttc":
            return FsmTtcPolicy(self.settings)
        cfg = self.network.cfg
        return LearnedPolicy(self.network, cfg.crop_rows, cfg.crop_cols)

    def assert_noise_free(self):
        """评测期间网络不得抽取任何噪声"""
        if self.network is not None and self.network.noise_draws != self.noise_draws:
            raise CarlLeadError(f"评测期间发生了 {self.network.noise_draws - self.noise_draws} 次噪声抽样")
