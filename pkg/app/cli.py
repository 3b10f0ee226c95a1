# -*- coding: utf-8 -*-
"""
命令行入口
子命令：train / eval / render / saliency / inspect-ckpt；所有产物写到 --out 目录并附 manifest.json
"""

import os
import sys
import json
import logging
import functools

import click
import numpy as np

from app.config import DEFAULT_OUTPUT_DIR, DEFAULT_CONFIG_FILE, SCENARIO_SETS, load_settings, settings_from_dict
from app.errors import CarlLeadError

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


def _fail_on_errors(func):
    """可预期的错误记录诊断后以状态码 1 退出"""
    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except CarlLeadError as e:
            logger.error(f"{type(e).__name__}: {e}")
            sys.exit(1)
        except OSError as e:
            logger.error(f"IoError: {e}")
            sys.exit(1)
    return wrapper


def _split(value):
    return tuple(item.strip() for item in value.split(',') if item.strip()) if value else ()


def _scenario_names(value):
    from app.services.scenario_loader import resolve_scenario_set
    return tuple(resolve_scenario_set(value))


@click.group()
@click.option('--config', 'config_path', type=click.Path(dir_okay=False), default=None,
              help=f"INI 配置文件（默认 {os.path.relpath(DEFAULT_CONFIG_FILE)}，不存在时使用内置默认值）")
@click.option('--seed', type=int, default=0, show_default=True, help="基础随机种子")
@click.option('--out', 'out_dir', type=click.Path(file_okay=False), default=DEFAULT_OUTPUT_DIR, show_default=True,
              help="输出目录")
@click.option('--log-level', type=click.Choice(['DEBUG', 'INFO', 'WARNING', 'ERROR']), default='INFO',
              show_default=True)
@click.pass_context
def cli(ctx, config_path, seed, out_dir, log_level):
    """路口驾驶强化学习：训练、评测与可视化"""
    logging.basicConfig(level=getattr(logging, log_level), format=LOG_FORMAT, force=True)
    ctx.ensure_object(dict)
    ctx.obj.update(config_path=config_path, seed=seed, out_dir=out_dir)


def _settings(ctx):
    path = ctx.obj["config_path"]
    if path is None and os.path.exists(DEFAULT_CONFIG_FILE):
        path = DEFAULT_CONFIG_FILE
    try:
        return load_settings(path)
    except CarlLeadError as e:
        logger.error(f"{type(e).__name__}: {e}")
        sys.exit(1)


def _finish(ctx, command, settings, files, extra=None):
    from app.services.persistence import write_manifest
    write_manifest(ctx.obj["out_dir"], command, settings, ctx.obj["seed"], files, extra)


# ==================== train ====================

@cli.command()
@click.option('--scenario-set', default=None, help="场景集合名（training/unseen/all）或逗号分隔的场景名")
@click.option('--steps', type=int, default=None, help="环境步总预算")
@click.option('--workers', type=int, default=None, help="工作进程数")
@click.option('--contrastive-weight', type=float, default=None, help="对比损失权重（0 即去掉对比分支）")
@click.option('--transport', type=click.Choice(['inprocess', 'socket']), default=None)
@click.option('--deterministic/--no-deterministic', default=None, help="单线程确定性模式（可精确续训）")
@click.option('--resume', type=click.Path(exists=True, file_okay=False), default=None, help="从检查点目录继续")
@click.option('--monitor-port', type=int, default=None, help="启动只读监控接口的端口")
@click.pass_context
@_fail_on_errors
def train(ctx, scenario_set, steps, workers, contrastive_weight, transport, deterministic, resume, monitor_port):
    """训练（工作进程 + 学习器）"""
    from app.models import state
    from app.services.pipeline import run_training

    settings = _settings(ctx)
    pipeline, learner = {}, {}
    if scenario_set is not None:
        pipeline["scenarios"] = _scenario_names(scenario_set)
    if steps is not None:
        pipeline["total_env_steps"] = steps
    if workers is not None:
        pipeline["workers"] = workers
    if transport is not None:
        pipeline["transport"] = transport
    if deterministic is not None:
        pipeline["deterministic"] = deterministic
    if contrastive_weight is not None:
        learner["contrastive_weight"] = contrastive_weight
    settings = settings_from_dict({"pipeline": pipeline, "learner": learner}, base=settings)

    out_dir = ctx.obj["out_dir"]
    os.makedirs(out_dir, exist_ok=True)
    state.reset_state(settings.monitor.max_metrics_history)
    if monitor_port is not None:
        from app import start_monitor
        start_monitor(settings.monitor.host, monitor_port)

    summary = run_training(settings, out_dir, seed=ctx.obj["seed"], resume=resume)
    files = [summary["metrics"]] if os.path.exists(summary["metrics"]) else []
    if summary["last_checkpoint"]:
        files += [os.path.join(summary["last_checkpoint"], name) for name in os.listdir(summary["last_checkpoint"])]
    _finish(ctx, "train", settings, files, extra={"summary": summary})
    click.echo(json.dumps(summary, ensure_ascii=False, indent=2))


# ==================== eval ====================

@cli.command(name="eval")
@click.option('--policy', required=True, help="learned / fsm_ttc / random / constant[:动作]")
@click.option('--checkpoint', type=click.Path(), default=None, help="learned 策略的检查点目录")
@click.option('--scenarios', 'scenario_set', default="training", show_default=True,
              help=f"场景集合名（{'/'.join(SCENARIO_SETS)}）或逗号分隔的场景名")
@click.option('--densities', default=None, help="逗号分隔的密度预设")
@click.option('--episodes', type=int, default=None, help="每个单元的回合数")
@click.option('--workers', type=int, default=None, help="并行回合数")
@click.pass_context
@_fail_on_errors
def evaluate(ctx, policy, checkpoint, scenario_set, densities, episodes, workers):
    """评测一个策略并导出 CSV / JSONL"""
    from app.services.benchmark import BenchmarkConfig, run_benchmark, export_results

    settings = _settings(ctx)
    bench = settings.benchmark
    config = BenchmarkConfig(
        policy=policy,
        scenarios=_scenario_names(scenario_set),
        densities=_split(densities) or tuple(bench.densities),
        episodes=episodes if episodes is not None else bench.episodes,
        seed_base=bench.seed_base + ctx.obj["seed"],
        checkpoint=checkpoint,
        workers=workers if workers is not None else bench.workers,
    )
    result = run_benchmark(config, settings)
    files = export_results(result, ctx.obj["out_dir"])
    _finish(ctx, "eval", settings, files, extra={"policy": policy, "checkpoint": checkpoint})
    for cell in result.cells:
        compl = "-" if cell.compl_time is None else f"{cell.compl_time:.2f}s"
        click.echo(f"{cell.scenario:<12} {cell.density:<8} success {cell.success_rate:5.1f}%  "
                   f"collision {cell.collision_rate:5.1f}%  timeout {cell.timeout_rate:5.1f}%  time {compl}")


# ==================== render / saliency ====================

def _load_network(checkpoint):
    from app.services.checkpoint import load_checkpoint
    network = load_checkpoint(checkpoint).online
    network.eval()
    return network


@cli.command()
@click.option('--scenario', required=True, help="场景名或场景文件路径")
@click.option('--policy', default="fsm_ttc", show_default=True)
@click.option('--checkpoint', type=click.Path(), default=None)
@click.option('--density', default="regular", show_default=True)
@click.option('--steps', type=int, default=None, help="最多渲染的步数")
@click.option('--saliency/--no-saliency', 'with_saliency', default=False, help="同时输出显著图叠加（需要检查点）")
@click.pass_context
@_fail_on_errors
def render(ctx, scenario, policy, checkpoint, density, steps, with_saliency):
    """逐步渲染一个回合为 PNG"""
    from app.services.policies import PolicyFactory
    from app.services.rendering import render_episode
    from app.services.scenario_loader import load_scenario, resolve_scenario_path
    from app.utils.seeding import derive_seed, EVAL_DOMAIN

    settings = _settings(ctx)
    scn = load_scenario(resolve_scenario_path(scenario))
    factory = PolicyFactory(policy, settings, checkpoint=checkpoint)
    saliency_net = None
    if with_saliency:
        if checkpoint is None:
            raise click.UsageError("--saliency 需要 --checkpoint")
        saliency_net = factory.network if factory.network is not None else _load_network(checkpoint)
    seed = derive_seed(ctx.obj["seed"], EVAL_DOMAIN, scn.id, density, "render")
    files = render_episode(scn, seed, factory(), ctx.obj["out_dir"], settings, density=density,
                           max_steps=steps, saliency_network=saliency_net)
    _finish(ctx, "render", settings, files, extra={"scenario": scn.id, "episode_seed": seed})
    click.echo(f"{len(files)} files written to {ctx.obj['out_dir']}")


@cli.command(name="saliency")
@click.option('--checkpoint', type=click.Path(), required=True)
@click.option('--scenario', required=True)
@click.option('--density', default="regular", show_default=True)
@click.option('--at-step', type=int, default=10, show_default=True, help="在第几步提取显著图")
@click.pass_context
@_fail_on_errors
def saliency_command(ctx, checkpoint, scenario, density, at_step):
    """用 learned 策略推进到指定步，保存显著图数组与叠加图"""
    from app.services.env import DrivingEnv
    from app.services.policies import PolicyFactory
    from app.services.persistence import atomic_path
    from app.services.rendering import render_saliency
    from app.services.saliency import saliency
    from app.services.scenario_loader import load_scenario, resolve_scenario_path
    from app.utils.seeding import derive_seed, EVAL_DOMAIN

    settings = _settings(ctx)
    scn = load_scenario(resolve_scenario_path(scenario))
    factory = PolicyFactory("learned", settings, checkpoint=checkpoint)
    policy = factory()
    env = DrivingEnv(scn, settings, density=density)
    seed = derive_seed(ctx.obj["seed"], EVAL_DOMAIN, scn.id, density, "saliency")
    obs, _ = env.reset(seed=seed, options={"density": density})
    policy.reset(env, seed)
    for _ in range(at_step):
        obs, _, terminated, truncated, _ = env.step(policy.act(env, obs))
        if terminated or truncated:
            break
    smap = saliency(factory.network, obs)
    out_dir = ctx.obj["out_dir"]
    npz_path = os.path.join(out_dir, "saliency.npz")
    with atomic_path(npz_path) as tmp_file:
        with open(tmp_file, 'wb') as f:
            np.savez(f, maps=smap.maps, obs=obs, crop_offset=np.array(smap.crop_offset))
    png_path = render_saliency(obs, smap, os.path.join(out_dir, f"saliency_{env.world.step_index:04d}.png"))
    _finish(ctx, "saliency", settings, [npz_path, png_path], extra={"scenario": scn.id, "episode_seed": seed})
    click.echo(f"saliency written to {npz_path}")


# ==================== inspect-ckpt ====================

@cli.command(name="inspect-ckpt")
@click.argument('checkpoint', type=click.Path())
@click.pass_context
@_fail_on_errors
def inspect_ckpt(ctx, checkpoint):
    """打印检查点元数据与数组清单"""
    from app.services.checkpoint import inspect_checkpoint

    meta, inventory = inspect_checkpoint(checkpoint)
    click.echo(json.dumps(meta, ensure_ascii=False, indent=2, sort_keys=True))
    total = 0
    for name, shape, dtype in inventory:
        size = int(np.prod(shape)) if shape else 1
        total += size
        click.echo(f"{name:<60} {str(shape):<20} {dtype}")
    click.echo(f"{len(inventory)} arrays, {total} values")


def main():
    cli(obj={})


if __name__ == '__main__':
    main()
