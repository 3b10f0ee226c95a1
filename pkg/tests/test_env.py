# -*- coding: utf-8 -*-
import numpy as np
import pytest

from app.services.env import DrivingEnv


def test_spaces_and_reset(t_merge, tiny_settings):
    env = DrivingEnv(t_merge, tiny_settings, density="sparse")
    s = tiny_settings.sensing
    assert env.action_space.n == 4
    assert env.observation_space.shape == (s.rows, s.cols, 9)
    obs, info = env.reset(seed=4)
    assert obs.shape == (s.rows, s.cols, 9)
    assert env.observation_space.contains(obs.astype(np.float32))
    assert info["status"] == "Running" and info["step_index"] == 0


def test_step_requires_reset(t_merge, tiny_settings):
    with pytest.raises(RuntimeError):
        DrivingEnv(t_merge, tiny_settings).step(0)


def test_reset_is_reproducible(t_merge, tiny_settings):
    env = DrivingEnv(t_merge, tiny_settings, density="sparse")
    first, _ = env.reset(seed=8)
    trajectory = [env.step(3)[0] for _ in range(5)]
    again, _ = env.reset(seed=8)
    assert np.array_equal(first, again)
    for expected in trajectory:
        assert np.array_equal(env.step(3)[0], expected)


def test_stopping_truncates_at_timeout(t_merge, tiny_settings):
    env = DrivingEnv(t_merge, tiny_settings, density="sparse", render_observation=False)
    obs, _ = env.reset(seed=2)
    assert obs is None
    terminated = truncated = False
    steps = 0
    while not (terminated or truncated):
        _, reward, terminated, truncated, info = env.step(0)
        steps += 1
    assert truncated and not terminated
    assert steps == tiny_settings.simulation.timeout_steps
    assert info["status"] == "Timeout" and not info["collision"]
