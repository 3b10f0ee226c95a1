# -*- coding: utf-8 -*-
import os

import numpy as np
import pytest
import torch

from app.config import NetworkConfig
from app.models.network import build_network
from app.services.policies import ConstantPolicy
from app.services.rendering import render_episode, render_observation, render_saliency
from app.services.saliency import input_gradient, saliency

TINY64 = NetworkConfig(channels=(4, 8), latent_dim=8, head_hidden=8, crop_rows=8, crop_cols=8, dtype="float64")


@pytest.fixture
def net64():
    return build_network(TINY64, seed=3)


@pytest.fixture
def obs():
    return np.random.default_rng(0).uniform(size=(10, 12, 9))


def _q_max(network, crop):
    with torch.no_grad():
        return float(network(torch.as_tensor(crop)[None]).max())


def test_saliency_shape_offset_and_support(net64, obs):
    smap = saliency(net64, obs)
    assert smap.maps.shape == (3, 10, 12)
    assert smap.crop_offset == (1, 2)
    assert np.all(smap.maps >= 0)
    inside = np.zeros((10, 12), dtype=bool)
    inside[1:9, 2:10] = True
    assert np.all(smap.maps[:, ~inside] == 0)
    assert smap.maps[:, inside].sum() > 0


def test_saliency_matches_finite_differences(net64, obs):
    crop = obs[1:9, 2:10].copy()
    grad = input_gradient(net64, crop)
    eps = 1e-6
    net64.eval()
    for (r, c, ch) in ((0, 0, 0), (3, 4, 5), (7, 7, 8)):
        plus, minus = crop.copy(), crop.copy()
        plus[r, c, ch] += eps
        minus[r, c, ch] -= eps
        numeric = (_q_max(net64, plus) - _q_max(net64, minus)) / (2 * eps)
        assert grad[r, c, ch] == pytest.approx(numeric, rel=1e-4, abs=1e-7)

    smap = saliency(net64, obs)
    assert smap.maps[1, 1 + 3, 2 + 4] == pytest.approx(np.abs(grad[3, 4, 3:6]).sum())


def test_saliency_keeps_training_mode_and_noise(net64, obs):
    net64.train()
    draws = net64.noise_draws
    saliency(net64, obs)
    assert net64.training
    assert net64.noise_draws == draws


def test_render_files(tmp_path, net64, obs):
    obs01 = np.clip(obs, 0.0, 1.0)
    assert os.path.exists(render_observation(obs01, str(tmp_path / "obs.png")))
    assert os.path.exists(render_saliency(obs01, saliency(net64, obs), str(tmp_path / "sal.png")))


def test_render_episode_writes_two_frames_per_step(tmp_path, t_merge, tiny_settings):
    files = render_episode(t_merge, 5, ConstantPolicy(3), str(tmp_path), tiny_settings, density="sparse", max_steps=3)
    names = sorted(os.path.basename(f) for f in files)
    assert names == ["obs_0000.png", "obs_0001.png", "obs_0002.png",
                     "world_0000.png", "world_0001.png", "world_0002.png"]
    assert all(os.path.getsize(f) > 0 for f in files)
