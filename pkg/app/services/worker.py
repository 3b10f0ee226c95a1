# -*- coding: utf-8 -*-
"""
探索工作进程模块
每个工作进程持有独立的仿真环境与网络副本，用最新参数快照的训练模式（带噪声）前向选动作，
把转移与回合摘要发送给学习器
"""

import logging
import threading

import torch

from app.errors import ChannelClosed, SpawnError
from app.models.network import build_network, select_action
from app.services.env import DrivingEnv
from app.services.learner import center_crop, load_snapshot
from app.services.replay import Transition, EpisodeSummary, quantize
from app.utils.seeding import derive_seed, TRAIN_DOMAIN

logger = logging.getLogger(__name__)

MAX_RESET_ATTEMPTS = 20


class StepBudget:
    """全体工作进程共享的环境步预算"""

    def __init__(self, total, used=0):
        self.total = int(total)
        self.used = int(used)
        self._lock = threading.Lock()

    def acquire(self):
        """占用一步；预算用尽时返回 False"""
        with self._lock:
            if self.used >= self.total:
                return False
            self.used += 1
            return True

    @property
    def remaining(self):
        with self._lock:
            return max(0, self.total - self.used)


class WorkerSession:
    """
    单个工作进程的完整状态（环境、网络、噪声随机源、回合计数）

    step() 推进一个环境步并返回待发送的消息；可被 pickle 以便精确续训
    """

    def __init__(self, worker_id, scenario, settings, seed_base, snapshots=None):
        self.worker_id = worker_id
        self.scenario = scenario
        self.settings = settings
        self.seed_base = int(seed_base)
        self.snapshots = snapshots
        self.densities = tuple(settings.pipeline.densities)
        self.env = DrivingEnv(scenario, settings, density=self.densities[0])
        self.network = build_network(settings.network, seed=self.seed_base)
        self.network.train()
        self.noise_generator = torch.Generator().manual_seed(
            derive_seed(self.seed_base, TRAIN_DOMAIN, "noise", worker_id))
        self.network.set_noise_generator(self.noise_generator)
        self.version = -1
        self.episode = 0
        self.episode_steps = 0
        self.steps = 0
        self.obs = None

    def episode_seed(self, episode):
        return derive_seed(self.seed_base, TRAIN_DOMAIN, self.worker_id, episode)

    def refresh(self):
        """有更新的快照时载入参数"""
        if self.snapshots is None:
            return False
        snapshot = self.snapshots.latest()
        if snapshot is None or snapshot.version == self.version:
            return False
        load_snapshot(self.network, snapshot)
        self.version = snapshot.version
        return True

    def _begin_episode(self):
        for _ in range(MAX_RESET_ATTEMPTS):
            density = self.densities[self.episode % len(self.densities)]
            seed = self.episode_seed(self.episode)
            try:
                self.obs, _ = self.env.reset(seed=seed, options={"density": density})
                self.episode_steps = 0
                return
            except SpawnError as e:
                logger.warning(f"[工作进程] #{self.worker_id} 第 {self.episode} 回合布置失败，跳过: {e}")
                self.episode += 1
        raise SpawnError(f"工作进程 #{self.worker_id} 连续 {MAX_RESET_ATTEMPTS} 个回合无法布置")

    def act(self, obs):
        crop = center_crop(obs, self.settings.network.crop_rows, self.settings.network.crop_cols)
        with torch.no_grad():
            q_values = self.network(crop)
        return select_action(q_values[0])

    def step(self):
        """推进一个环境步，返回 [Transition] 或 [Transition, EpisodeSummary]"""
        if self.obs is None:
            self._begin_episode()
        self.refresh()
        action = self.act(self.obs)
        next_obs, reward, terminated, truncated, info = self.env.step(action)
        messages = [Transition(
            obs=quantize(self.obs), action=action, reward=float(reward), next_obs=quantize(next_obs),
            terminal=bool(terminated), worker=self.worker_id, step=self.steps,
        )]
        self.steps += 1
        self.episode_steps += 1
        if terminated or truncated:
            messages.append(EpisodeSummary(
                worker=self.worker_id, episode=self.episode, scenario=self.scenario.id,
                density=self.env.world.density, status=info["status"], steps=self.episode_steps,
                episode_return=float(self.env.episode_return),
            ))
            self.episode += 1
            self.obs = None
        else:
            self.obs = next_obs
        return messages

    # ---------- pickle ----------

    def __getstate__(self):
        state = self.__dict__.copy()
        state["snapshots"] = None
        state["noise_generator"] = self.noise_generator.get_state()
        state["network"] = {k: v.clone() for k, v in self.network.state_dict().items()}
        return state

    def __setstate__(self, state):
        network_state = state.pop("network")
        generator_state = state.pop("noise_generator")
        self.__dict__.update(state)
        self.network = build_network(self.settings.network)
        self.network.load_state_dict(network_state)
        self.network.train()
        self.noise_generator = torch.Generator()
        self.noise_generator.set_state(generator_state)
        self.network.set_noise_generator(self.noise_generator)


def run_worker(session, channel, budget=None, stop_event=None):
    """
    工作进程主循环：逐步推进会话并发送消息，直到预算用尽、收到停止信号或通道关闭

    返回:
        int: 本次调用产生的转移数
    """
    produced = 0
    logger.info(f"[工作进程] #{session.worker_id} 启动，场景 {session.scenario.id}")
    try:
        while stop_event is None or not stop_event.is_set():
            if budget is not None and not budget.acquire():
                break
            for message in session.step():
                channel.send(message)
                if isinstance(message, Transition):
                    produced += 1
    except ChannelClosed:
        logger.info(f"[工作进程] #{session.worker_id} 通道关闭，退出")
    logger.info(f"[工作进程] #{session.worker_id} 结束，共产生 {produced} 条转移")
    return produced
