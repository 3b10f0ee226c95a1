# -*- coding: utf-8 -*-
"""
训练流水线
N 个探索工作进程 + 1 个学习器：转移经通道汇入经验池，学习器每收到 K 个环境步执行一次更新，
按刷新周期广播参数快照，按检查点周期与结束时保存检查点
"""

import os
import math
import queue
import logging
import threading
from collections import deque

import torch

from app.config import Settings
from app.errors import CarlLeadError, ConfigError
from app.models import state
from app.models.vehicle import Status
from app.services.channels import SnapshotBroadcast, open_transport
from app.services.checkpoint import save_checkpoint, load_checkpoint, load_runtime, read_checkpoint
from app.services.learner import Learner
from app.services.persistence import append_jsonl
from app.services.replay import ReplayBuffer, Transition, EpisodeSummary
from app.services.scenario_loader import load_scenarios
from app.services.worker import StepBudget, WorkerSession, run_worker

logger = logging.getLogger(__name__)

METRICS_FILE = "metrics.jsonl"
RECV_TIMEOUT = 0.2


def validate_pipeline(settings):
    p = settings.pipeline
    if p.workers < 1:
        raise ConfigError("工作进程数必须 ≥ 1")
    if not p.scenarios:
        raise ConfigError("训练场景列表为空")
    if not p.densities:
        raise ConfigError("密度列表为空")
    if p.warmup_steps > p.total_env_steps:
        raise ConfigError(f"预热步数 {p.warmup_steps} 超过总预算 {p.total_env_steps}")
    if p.env_steps_per_update < 1 or p.refresh_period < 1 or p.checkpoint_period < 1:
        raise ConfigError("K、刷新周期与检查点周期必须 ≥ 1")


class TrainingRun:
    """
    一次训练运行

    参数:
        settings: 完整配置
        out_dir: 输出目录（metrics.jsonl 与 ckpt_<step>/）
        seed: 基础种子
        resume: 可选，检查点目录；存在 runtime.pkl 时精确恢复工作进程会话、经验池与随机源
    """

    def __init__(self, settings=None, out_dir=".", seed=0, resume=None):
        self.settings = settings or Settings()
        validate_pipeline(self.settings)
        self.pcfg = self.settings.pipeline
        self.out_dir = out_dir
        self.seed = int(seed)
        self.metrics_path = os.path.join(out_dir, METRICS_FILE)
        self.scenarios = list(load_scenarios(self.pcfg.scenarios).values())
        self.snapshots = SnapshotBroadcast()
        self.success_window = deque(maxlen=self.pcfg.success_window)
        self.env_steps = 0
        self.episodes = 0
        self.last_checkpoint = None
        self.sessions = None
        self._snapshot = None

        runtime = None
        if resume is not None:
            self.learner = load_checkpoint(resume, self.settings)
            runtime = load_runtime(resume)
        else:
            self.learner = Learner(self.settings, seed=self.seed)
        self.buffer = ReplayBuffer(self.settings.learner.buffer_capacity)
        if resume is not None:
            self._restore(resume, runtime)
        if self.sessions is None:
            self.sessions = [
                WorkerSession(i, self.scenarios[i % len(self.scenarios)], self.settings, self.seed, self.snapshots)
                for i in range(self.pcfg.workers)
            ]
        self.budget = StepBudget(self.pcfg.total_env_steps, used=self.env_steps)

    # ---------- 续训 ----------

    def _restore(self, resume, runtime):
        meta, _ = read_checkpoint(resume)
        counters = meta.get("counters", {})
        self.env_steps = int(counters.get("env_steps", 0))
        self.episodes = int(counters.get("episodes", 0))
        if runtime is None:
            logger.info(f"[训练] 从 {resume} 恢复参数（无运行时状态，经验池重新填充）")
            return
        if runtime.get("buffer") is not None:
            self.buffer = ReplayBuffer.from_state(runtime["buffer"])
        self.learner.restore_runtime(runtime["learner"])
        self.success_window.extend(runtime.get("success_window", ()))
        self._snapshot = runtime.get("snapshot")
        sessions = runtime.get("sessions")
        if sessions is not None:
            for session in sessions:
                session.snapshots = self.snapshots
            self.sessions = sessions
        logger.info(f"[训练] 从 {resume} 精确恢复：环境步 {self.env_steps}，学习步 {self.learner.step_count}，"
                    f"经验池 {len(self.buffer)}")

    def _runtime_state(self):
        exact = self.pcfg.deterministic
        if not (exact or self.pcfg.save_buffer):
            return None
        return {
            "buffer": self.buffer.state(),
            "learner": self.learner.runtime_state(),
            "success_window": list(self.success_window),
            "snapshot": self._snapshot,
            "sessions": self.sessions if exact else None,
        }

    # ---------- 学习器侧 ----------

    @property
    def success_rate(self):
        if not self.success_window:
            return None
        return sum(self.success_window) / len(self.success_window)

    def updates_due(self):
        """到当前环境步为止应完成的学习步数"""
        return max(0, self.env_steps - self.pcfg.warmup_steps) // self.pcfg.env_steps_per_update

    def publish_snapshot(self):
        self._snapshot = self.learner.snapshot_params()
        self.snapshots.publish(self._snapshot)

    def checkpoint(self, with_runtime=True):
        self.last_checkpoint = save_checkpoint(
            self.learner, self.out_dir,
            runtime=self._runtime_state() if with_runtime else None,
            extra_meta={"counters": {"env_steps": self.env_steps, "episodes": self.episodes,
                                     "buffer_size": len(self.buffer)}},
        )
        state.update_training_status(last_checkpoint=self.last_checkpoint)
        return self.last_checkpoint

    def handle(self, message):
        if isinstance(message, Transition):
            self.buffer.add(message)
            self.env_steps += 1
            self._learn()
        elif isinstance(message, EpisodeSummary):
            self.episodes += 1
            self.success_window.append(message.status == Status.SUCCESS.value)
            logger.debug(f"[训练] 工作进程 #{message.worker} 回合 {message.episode} {message.status} "
                         f"({message.steps} 步, 回报 {message.episode_return:.2f})")

    def _learn(self):
        cfg = self.settings.learner
        while self.learner.step_count < self.updates_due() and len(self.buffer) >= cfg.batch_size:
            metrics = self.learner.train_step(self.buffer)
            step = metrics["step"]
            if step % self.pcfg.refresh_period == 0:
                self.publish_snapshot()
            if step % self.pcfg.log_every == 0:
                self._record(metrics)
            if self.pcfg.eval_period and step % self.pcfg.eval_period == 0:
                self._evaluate()
            if step % self.pcfg.checkpoint_period == 0:
                self.checkpoint()

    def _record(self, metrics):
        record = {
            "step": metrics["step"],
            "env_steps": self.env_steps,
            "td_loss": metrics["td_loss"],
            "contrastive_loss": metrics["contrastive_loss"],
            "mean_q": metrics["mean_q"],
            "buffer_size": len(self.buffer),
            "episodes": self.episodes,
            "success_rate_moving_avg": self.success_rate,
        }
        for key in ("td_loss", "contrastive_loss", "mean_q"):
            if not math.isfinite(record[key]):
                logger.error(f"[训练] 第 {record['step']} 步 {key} 非有限值: {record[key]}")
        append_jsonl(self.metrics_path, record)
        state.record_metrics(record)
        state.update_training_status(
            phase="training", env_steps=self.env_steps, learner_steps=record["step"],
            buffer_size=record["buffer_size"], episodes=self.episodes, success_rate=self.success_rate,
        )

    def _evaluate(self):
        """用当前在线网络在评测种子上跑少量回合"""
        from app.models.network import build_network
        from app.services.benchmark import BenchmarkConfig, run_benchmark
        from app.services.policies import PolicyFactory

        network = build_network(self.settings.network)
        network.load_state_dict(self.learner.online.state_dict())
        config = BenchmarkConfig(policy="learned", scenarios=tuple(s.id for s in self.scenarios),
                                 densities=self.pcfg.densities[:1], episodes=self.pcfg.eval_episodes,
                                 workers=1)
        result = run_benchmark(config, self.settings, factory=PolicyFactory.from_network(network, self.settings),
                               progress=False)
        rate = sum(c.success_rate for c in result.cells) / len(result.cells)
        record = {"step": self.learner.step_count, "env_steps": self.env_steps, "eval_success_rate": rate}
        append_jsonl(self.metrics_path, record)
        state.record_metrics(record)
        logger.info(f"[评测] 学习步 {self.learner.step_count}：评测成功率 {rate:.1f}%")

    # ---------- 运行 ----------

    def run(self):
        """
        执行训练直到环境步预算用尽

        返回:
            dict: 运行摘要
        异常:
            CarlLeadError: 任一工作进程崩溃（中止前写入检查点）
        """
        state.update_training_status(phase="warmup", out_dir=self.out_dir, env_steps=self.env_steps,
                                     learner_steps=self.learner.step_count)
        if self._snapshot is None:
            self.publish_snapshot()
        else:
            self.snapshots.publish(self._snapshot)
        logger.info(f"[训练] 开始：{self.pcfg.workers} 个工作进程，场景 "
                    f"{[s.id for s in self.scenarios]}，预算 {self.budget.total} 环境步")
        if self.pcfg.deterministic:
            self._run_synchronous()
        else:
            self._run_threaded()
        self.checkpoint()
        self.snapshots.close()
        state.update_training_status(phase="finished", env_steps=self.env_steps,
                                     learner_steps=self.learner.step_count, buffer_size=len(self.buffer),
                                     episodes=self.episodes, success_rate=self.success_rate)
        logger.info(f"[训练] 结束：环境步 {self.env_steps}，学习步 {self.learner.step_count}，回合 {self.episodes}")
        return self.summary()

    def _run_synchronous(self):
        """单线程确定性模式：工作进程按固定轮转逐步推进"""
        torch.set_num_threads(1)
        while self.budget.acquire():
            # 轮转序号等于本步的全局环境步序号，续训后保持一致
            session = self.sessions[(self.budget.used - 1) % len(self.sessions)]
            for message in session.step():
                self.handle(message)

    def _run_threaded(self):
        receiver, sender_factory = open_transport(self.pcfg.transport)
        stop = threading.Event()
        errors = queue.Queue()
        senders = [sender_factory() for _ in self.sessions]

        def _worker_main(session, sender):
            try:
                run_worker(session, sender, self.budget, stop)
            except Exception as e:
                logger.exception(f"[工作进程] #{session.worker_id} 崩溃")
                errors.put((session.worker_id, e))
            finally:
                if sender is not receiver:
                    sender.close()

        threads = [threading.Thread(target=_worker_main, args=(s, sender), daemon=True, name=f"worker-{s.worker_id}")
                   for s, sender in zip(self.sessions, senders)]
        for t in threads:
            t.start()
        unique_senders = list({id(s): s for s in senders}.values())
        received = 0
        try:
            while True:
                if not errors.empty():
                    worker_id, error = errors.get()
                    stop.set()
                    self.checkpoint(with_runtime=False)
                    state.update_training_status(phase="aborted")
                    raise CarlLeadError(f"工作进程 #{worker_id} 崩溃，训练中止: {error}") from error
                message = receiver.recv(timeout=RECV_TIMEOUT)
                if message is not None:
                    received += 1
                    self.handle(message)
                    continue
                if not any(t.is_alive() for t in threads) and received >= sum(s.sent for s in unique_senders):
                    break
        finally:
            stop.set()
            receiver.close()
            for t in threads:
                t.join(timeout=5.0)

    def summary(self):
        return {
            "env_steps": self.env_steps,
            "learner_steps": self.learner.step_count,
            "episodes": self.episodes,
            "buffer_size": len(self.buffer),
            "transitions_added": self.buffer.total_added,
            "transitions_evicted": self.buffer.evicted,
            "success_rate_moving_avg": self.success_rate,
            "last_checkpoint": self.last_checkpoint,
            "metrics": self.metrics_path,
        }


def run_training(settings=None, out_dir=".", seed=0, resume=None):
    """构造并执行一次训练运行，返回摘要"""
    return TrainingRun(settings, out_dir, seed=seed, resume=resume).run()
