# -*- coding: utf-8 -*-
"""
桌面规模学习实验
在 t_merge 上分别训练带对比分支与不带对比分支（权重 0）的学习器，
再与 FSM-TTC 基线在同一组评测种子上对比

用法: python -m experiments.desk_learning --out runs/desk [--steps 30000] [--seed 0]
"""

import os
import logging

import click

from app.config import CONFIG_DIR, load_settings, settings_from_dict
from app.services.benchmark import BenchmarkConfig, run_benchmark, export_results
from app.services.persistence import write_text, write_manifest
from app.services.pipeline import run_training

logger = logging.getLogger(__name__)

DESK_CONFIG = os.path.join(CONFIG_DIR, 'desk_t_merge.ini')
VARIANTS = (("contrastive", 1.0), ("rl_only", 0.0))


def _evaluate(policy, settings, out_dir, seed, checkpoint=None):
    bench = settings.benchmark
    config = BenchmarkConfig(policy=policy, scenarios=tuple(settings.pipeline.scenarios),
                             densities=tuple(bench.densities), episodes=bench.episodes,
                             seed_base=bench.seed_base + seed, checkpoint=checkpoint, workers=bench.workers)
    result = run_benchmark(config, settings)
    export_results(result, out_dir)
    return result


def _rows(variant, result):
    return [f"{variant},{c.scenario},{c.density},{c.success_rate!r},"
            f"{'' if c.compl_time is None else repr(c.compl_time)},{c.collision_rate!r},{c.timeout_rate!r}"
            for c in result.cells]


@click.command()
@click.option('--out', 'out_dir', default=os.path.join('runs', 'desk'), show_default=True)
@click.option('--steps', type=int, default=None, help="覆盖每个变体的环境步预算")
@click.option('--seed', type=int, default=0, show_default=True)
def main(out_dir, steps, seed):
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    base = load_settings(DESK_CONFIG)
    if steps is not None:
        base = settings_from_dict({"pipeline": {"total_env_steps": steps}}, base=base)

    rows = ["variant,scenario,density,success_rate,compl_time,collision_rate,timeout_rate"]
    for name, weight in VARIANTS:
        settings = settings_from_dict({"learner": {"contrastive_weight": weight}}, base=base)
        run_dir = os.path.join(out_dir, name)
        summary = run_training(settings, run_dir, seed=seed)
        result = _evaluate("learned", settings, os.path.join(run_dir, "eval"), seed,
                           checkpoint=summary["last_checkpoint"])
        rows += _rows(name, result)

    result = _evaluate("fsm_ttc", base, os.path.join(out_dir, "fsm_ttc"), seed)
    rows += _rows("fsm_ttc", result)

    table = os.path.join(out_dir, "comparison.csv")
    write_text(table, "\n".join(rows) + "\n")
    write_manifest(out_dir, "desk_learning", base, seed, [table], extra={"variants": dict(VARIANTS)})
    click.echo("\n".join(rows))


if __name__ == '__main__':
    main()
