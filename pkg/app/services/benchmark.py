# -*- coding: utf-8 -*-
"""
评测模块
按 (场景, 密度) 网格运行回合，统计成功率/完成时间/碰撞率/超时率并导出 CSV 与逐回合 JSONL
"""

import io
import csv
import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, asdict, field

from tqdm import tqdm

from app.config import Settings, BENCHMARK_EPISODES, BENCHMARK_SEED_BASE, BENCHMARK_WORKERS
from app.errors import ConfigError, SpawnError
from app.models import state
from app.models.vehicle import Status
from app.services.env import DrivingEnv
from app.services.persistence import write_text
from app.services.policies import PolicyFactory
from app.services.scenario_loader import load_scenarios
from app.utils.seeding import derive_seed, EVAL_DOMAIN

logger = logging.getLogger(__name__)

CSV_COLUMNS = ("scenario", "density", "policy", "success_rate", "compl_time",
               "collision_rate", "timeout_rate", "episodes")
RESULTS_CSV = "benchmark.csv"
EPISODES_JSONL = "episodes.jsonl"
SPAWN_RETRIES = 10


@dataclass(frozen=True)
class BenchmarkConfig:
    policy: str
    scenarios: tuple
    densities: tuple = ("regular", "dense")
    episodes: int = BENCHMARK_EPISODES
    seed_base: int = BENCHMARK_SEED_BASE
    checkpoint: str = None
    workers: int = BENCHMARK_WORKERS

    def __post_init__(self):
        if self.episodes < 1:
            raise ConfigError("每个评测单元至少 1 个回合")
        if not self.scenarios:
            raise ConfigError("评测场景列表为空")


@dataclass(frozen=True)
class EpisodeRecord:
    scenario: str
    density: str
    policy: str
    episode: int
    seed: int
    status: str
    steps: int
    completion_time: float = None
    episode_return: float = 0.0


@dataclass(frozen=True)
class CellResult:
    scenario: str
    density: str
    policy: str
    episodes: int
    success_rate: float
    compl_time: float
    collision_rate: float
    timeout_rate: float

    def to_row(self):
        row = asdict(self)
        row["compl_time"] = "" if self.compl_time is None else repr(self.compl_time)
        for key in ("success_rate", "collision_rate", "timeout_rate"):
            row[key] = repr(row[key])
        return row


@dataclass
class BenchmarkResult:
    policy: str
    cells: list = field(default_factory=list)
    episodes: list = field(default_factory=list)

    def cell(self, scenario, density):
        for c in self.cells:
            if c.scenario == scenario and c.density == density:
                return c
        raise KeyError((scenario, density))


def benchmark_seed(seed_base, scenario_id, density, episode, attempt=0):
    """评测种子只依赖 (基础种子, 场景, 密度, 回合)，与策略无关，且位于评测域"""
    return derive_seed(seed_base, EVAL_DOMAIN, scenario_id, density, episode, attempt)


def run_episode(scenario, density, seed, policy, settings=None, on_step=None):
    """
    用给定策略跑一个回合

    参数:
        on_step: 可选回调 on_step(env, obs, action)，每步在动作执行前调用（渲染用）
    返回:
        EpisodeRecord（seed 为实际使用的种子，episode 由调用方填写）
    """
    settings = settings or Settings()
    env = DrivingEnv(scenario, settings, density=density, render_observation=policy.needs_observation)
    obs, info = env.reset(seed=seed, options={"density": density})
    policy.reset(env, seed)
    terminated = truncated = False
    while not (terminated or truncated):
        action = policy.act(env, obs)
        if on_step is not None:
            on_step(env, obs, action)
        obs, _, terminated, truncated, info = env.step(action)
    success = info["status"] == Status.SUCCESS.value
    return EpisodeRecord(
        scenario=scenario.id, density=density, policy=policy.name, episode=0, seed=int(seed),
        status=info["status"], steps=info["step_index"],
        completion_time=float(info["time"]) if success else None,
        episode_return=float(env.episode_return),
    )


def aggregate(records, scenario, density, policy):
    """单元统计；完成时间只对成功回合取均值，没有成功回合时为 None"""
    n = len(records)
    counts = {s.value: 0 for s in (Status.SUCCESS, Status.COLLISION, Status.TIMEOUT)}
    for r in records:
        counts[r.status] += 1
    times = [r.completion_time for r in records if r.status == Status.SUCCESS.value]
    return CellResult(
        scenario=scenario, density=density, policy=policy, episodes=n,
        success_rate=100.0 * counts[Status.SUCCESS.value] / n,
        compl_time=sum(times) / len(times) if times else None,
        collision_rate=100.0 * counts[Status.COLLISION.value] / n,
        timeout_rate=100.0 * counts[Status.TIMEOUT.value] / n,
    )


def _run_task(task):
    scenario, density, episode, factory, settings, seed_base = task
    last_error = None
    for attempt in range(SPAWN_RETRIES):
        seed = benchmark_seed(seed_base, scenario.id, density, episode, attempt)
        try:
            record = run_episode(scenario, density, seed, factory(), settings)
        except SpawnError as e:
            last_error = e
            continue
        return EpisodeRecord(**{**asdict(record), "episode": episode, "policy": factory.name})
    raise SpawnError(f"{scenario.id}/{density} 第 {episode} 回合无法布置: {last_error}")


def run_benchmark(config: BenchmarkConfig, settings=None, factory=None, progress=True):
    """
    运行完整评测网格

    参数:
        factory: 可选，预先构造好的 PolicyFactory（测试或训练中评测时使用）
    返回:
        BenchmarkResult；同一配置重复运行结果完全相同
    """
    settings = settings or Settings()
    scenarios = list(load_scenarios(config.scenarios).values())
    factory = factory or PolicyFactory(config.policy, settings, checkpoint=config.checkpoint)

    tasks = [(scenario, density, episode, factory, settings, config.seed_base)
             for scenario in scenarios
             for density in config.densities
             for episode in range(config.episodes)]
    logger.info(f"[评测] 策略 {factory.name}，{len(scenarios)} 个场景 × {len(config.densities)} 种密度 × "
                f"{config.episodes} 回合")

    with ThreadPoolExecutor(max_workers=max(1, config.workers)) as executor:
        records = list(tqdm(executor.map(_run_task, tasks), total=len(tasks),
                            desc=f"评测 {factory.name}", disable=not progress))
    factory.assert_noise_free()

    result = BenchmarkResult(policy=factory.name, episodes=records)
    for scenario in scenarios:
        for density in config.densities:
            cell_records = [r for r in records if r.scenario == scenario.id and r.density == density]
            cell = aggregate(cell_records, scenario.id, density, factory.name)
            result.cells.append(cell)
            logger.info(f"[评测] {scenario.id}/{density}: 成功 {cell.success_rate:.1f}% "
                        f"碰撞 {cell.collision_rate:.1f}% 超时 {cell.timeout_rate:.1f}%")
    state.set_benchmark_summary(factory.name, [asdict(c) for c in result.cells])
    return result


def export_results(result, out_dir):
    """
    写出 benchmark.csv 与 episodes.jsonl

    返回:
        (csv 路径, jsonl 路径)
    """
    buffer = io.StringIO()
    writer = csv.DictWriter(buffer, fieldnames=CSV_COLUMNS, lineterminator="\n")
    writer.writeheader()
    for cell in result.cells:
        writer.writerow(cell.to_row())
    csv_path = os.path.join(out_dir, RESULTS_CSV)
    write_text(csv_path, buffer.getvalue())

    lines = [json.dumps(asdict(r), ensure_ascii=False, sort_keys=True) for r in result.episodes]
    jsonl_path = os.path.join(out_dir, EPISODES_JSONL)
    write_text(jsonl_path, "\n".join(lines) + ("\n" if lines else ""))
    logger.info(f"[评测] 结果已写入 {csv_path}")
    return csv_path, jsonl_path


def load_results_csv(path):
    """读回 export_results 写出的 CSV"""
    cells = []
    with open(path, 'r', encoding='utf-8', newline='') as f:
        for row in csv.DictReader(f):
            cells.append(CellResult(
                scenario=row["scenario"], density=row["density"], policy=row["policy"],
                episodes=int(row["episodes"]),
                success_rate=float(row["success_rate"]),
                compl_time=float(row["compl_time"]) if row["compl_time"] else None,
                collision_rate=float(row["collision_rate"]),
                timeout_rate=float(row["timeout_rate"]),
            ))
    return cells
