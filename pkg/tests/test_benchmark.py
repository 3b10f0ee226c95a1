# -*- coding: utf-8 -*-
import json
import os

import pytest

from app.errors import CarlLeadError, ConfigError
from app.models import state
from app.models.network import build_network
from app.services.benchmark import (
    CSV_COLUMNS, BenchmarkConfig, EpisodeRecord, aggregate, benchmark_seed, export_results, load_results_csv,
    run_benchmark, run_episode,
)
from app.services.policies import ConstantPolicy, PolicyFactory, RandomPolicy


def _config(policy, episodes=2, **kwargs):
    return BenchmarkConfig(policy=policy, scenarios=("t_merge",), densities=("sparse",), episodes=episodes, **kwargs)


def test_config_validation():
    with pytest.raises(ConfigError):
        _config("fsm_ttc", episodes=0)
    with pytest.raises(ConfigError):
        BenchmarkConfig(policy="fsm_ttc", scenarios=())


def test_policy_factory_names(tiny_settings):
    assert isinstance(PolicyFactory("constant:0", tiny_settings)(), ConstantPolicy)
    assert PolicyFactory("constant", tiny_settings)().action == 3
    assert isinstance(PolicyFactory("random", tiny_settings)(), RandomPolicy)
    with pytest.raises(ConfigError):
        PolicyFactory("autopilot", tiny_settings)
    with pytest.raises(ConfigError):
        PolicyFactory("constant:9", tiny_settings)
    with pytest.raises(ConfigError):
        PolicyFactory("constant:fast", tiny_settings)
    with pytest.raises(ConfigError):
        PolicyFactory("learned", tiny_settings)


def test_standing_still_always_times_out(t_merge, tiny_settings):
    record = run_episode(t_merge, "sparse", 11, ConstantPolicy(0), tiny_settings)
    assert record.status == "Timeout"
    assert record.steps == tiny_settings.simulation.timeout_steps
    assert record.completion_time is None

    result = run_benchmark(_config("constant:0"), tiny_settings, progress=False)
    cell = result.cell("t_merge", "sparse")
    assert (cell.success_rate, cell.collision_rate, cell.timeout_rate) == (0.0, 0.0, 100.0)
    assert cell.compl_time is None


def test_aggregate_rates_and_completion_time():
    records = [
        EpisodeRecord("s", "d", "p", 0, 1, "Success", 50, completion_time=5.0),
        EpisodeRecord("s", "d", "p", 1, 2, "Success", 70, completion_time=7.0),
        EpisodeRecord("s", "d", "p", 2, 3, "Collision", 20),
        EpisodeRecord("s", "d", "p", 3, 4, "Timeout", 100),
    ]
    cell = aggregate(records, "s", "d", "p")
    assert cell.success_rate == 50.0 and cell.collision_rate == 25.0 and cell.timeout_rate == 25.0
    assert cell.compl_time == pytest.approx(6.0)
    assert cell.success_rate + cell.collision_rate + cell.timeout_rate == 100.0


def test_benchmark_is_repeatable_and_parallel_safe(tiny_settings):
    a = run_benchmark(_config("fsm_ttc"), tiny_settings, progress=False)
    b = run_benchmark(_config("fsm_ttc", workers=2), tiny_settings, progress=False)
    assert a.cells == b.cells
    assert [(r.seed, r.status, r.steps) for r in a.episodes] == [(r.seed, r.status, r.steps) for r in b.episodes]


def test_exported_csv_is_byte_identical_across_runs(tmp_path, tiny_settings):
    exported = []
    for name, workers in (("a", 1), ("b", 2)):
        result = run_benchmark(_config("fsm_ttc", workers=workers), tiny_settings, progress=False)
        csv_path, jsonl_path = export_results(result, str(tmp_path / name))
        with open(csv_path, "rb") as f_csv, open(jsonl_path, "rb") as f_jsonl:
            exported.append((f_csv.read(), f_jsonl.read()))
    assert exported[0] == exported[1]


def test_episode_seeds_do_not_depend_on_policy(tiny_settings):
    a = run_benchmark(_config("constant:0"), tiny_settings, progress=False)
    b = run_benchmark(_config("random"), tiny_settings, progress=False)
    assert [r.seed for r in a.episodes] == [r.seed for r in b.episodes]
    assert a.episodes[0].seed == benchmark_seed(tiny_settings.benchmark.seed_base, "t_merge", "sparse", 0)
    assert a.episodes[0].seed != a.episodes[1].seed


def test_learned_policy_draws_no_noise(tiny_settings):
    network = build_network(tiny_settings.network, seed=0)
    network.train()
    factory = PolicyFactory.from_network(network, tiny_settings)
    assert not network.training
    result = run_benchmark(_config("learned", episodes=1), tiny_settings, factory=factory, progress=False)
    assert result.policy == "learned"
    factory.assert_noise_free()

    network.sample_noise()
    with pytest.raises(CarlLeadError):
        factory.assert_noise_free()


def test_export_and_reload(tmp_path, tiny_settings):
    result = run_benchmark(_config("constant:0"), tiny_settings, progress=False)
    csv_path, jsonl_path = export_results(result, str(tmp_path))
    with open(csv_path, encoding="utf-8") as f:
        assert f.readline().strip() == ",".join(CSV_COLUMNS)
    assert load_results_csv(csv_path) == result.cells
    with open(jsonl_path, encoding="utf-8") as f:
        rows = [json.loads(line) for line in f]
    assert len(rows) == 2 and rows[0]["policy"] == "constant:0"
    assert not os.path.exists(csv_path + ".tmp")


def test_benchmark_publishes_summary(tiny_settings):
    run_benchmark(_config("constant:0"), tiny_settings, progress=False)
    snapshot = state.benchmark_snapshot()
    assert snapshot["policy"] == "constant:0"
    assert snapshot["cells"][0]["timeout_rate"] == 100.0
