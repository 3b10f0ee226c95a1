# -*- coding: utf-8 -*-
"""测试公共夹具：小尺寸栅格与网络，保证单测在 CPU 上几秒内完成"""

import os

import numpy as np
import pytest

from app.config import MAX_METRICS_HISTORY, settings_from_dict
from app.models import state
from app.services.scenario_loader import load_scenario

DATA_DIR = os.path.join(os.path.dirname(os.path.abspath(__file__)), "data")


def data_path(name):
    return os.path.join(DATA_DIR, name)


TINY_OVERRIDES = {
    "simulation": {"timeout_steps": 80},
    "sensing": {"n_beams": 90, "rows": 24, "cols": 32, "resolution": 2.0, "front": 30.0, "left": 32.0},
    "network": {"channels": (4, 8, 8, 8), "latent_dim": 16, "head_hidden": 8, "crop_rows": 20, "crop_cols": 28},
    "learner": {"batch_size": 8, "buffer_capacity": 256, "target_sync_period": 10, "lr": 1e-3},
    "pipeline": {"workers": 2, "scenarios": ("t_merge",), "densities": ("sparse",), "total_env_steps": 120,
                 "warmup_steps": 40, "env_steps_per_update": 4, "refresh_period": 5,
                 "checkpoint_period": 1000, "deterministic": True},
    "benchmark": {"episodes": 2, "densities": ("sparse",), "workers": 1},
}


@pytest.fixture
def tiny_settings():
    return settings_from_dict(TINY_OVERRIDES)


@pytest.fixture(scope="session")
def t_merge():
    return load_scenario("t_merge")


@pytest.fixture(scope="session")
def single_lane():
    return load_scenario(data_path("single_lane.json"))


@pytest.fixture(scope="session")
def crossing():
    """两条直行车道在原点正交，只有一个冲突点"""
    return load_scenario(data_path("crossing.json"))


@pytest.fixture(autouse=True)
def clean_monitor_state():
    state.reset_state(MAX_METRICS_HISTORY)
    yield
    state.reset_state(MAX_METRICS_HISTORY)


def make_transitions(n, shape, seed=0, terminal_every=7):
    """随机 uint8 观测构成的转移序列"""
    from app.services.replay import Transition
    rng = np.random.default_rng(seed)
    return [
        Transition(
            obs=rng.integers(0, 256, size=shape, dtype=np.uint8),
            action=int(rng.integers(4)),
            reward=float(rng.uniform()),
            next_obs=rng.integers(0, 256, size=shape, dtype=np.uint8),
            terminal=(i % terminal_every == terminal_every - 1),
            step=i,
        )
        for i in range(n)
    ]


@pytest.fixture
def filled_buffer(tiny_settings):
    from app.services.replay import ReplayBuffer
    s = tiny_settings.sensing
    buffer = ReplayBuffer(tiny_settings.learner.buffer_capacity)
    for t in make_transitions(64, (s.rows, s.cols, 9)):
        buffer.add(t)
    return buffer


def write_ini(path, overrides):
    """把覆盖字典写成 INI 文件"""
    from app.config import _to_text
    lines = []
    for section, values in overrides.items():
        lines.append(f"[{section}]")
        lines += [f"{key} = {_to_text(value)}" for key, value in values.items()]
        lines.append("")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines))
    return str(path)


@pytest.fixture
def tiny_config_file(tmp_path):
    return write_ini(tmp_path / "tiny.ini", TINY_OVERRIDES)
