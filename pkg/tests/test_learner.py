# -*- coding: utf-8 -*-
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from types import SimpleNamespace

import numpy as np
import pytest
import torch

from app.config import settings_from_dict
from app.errors import BufferUnderfull
from app.services.learner import (
    Learner, center_crop, center_offset, crop_at, crop_offsets, info_nce_loss, load_snapshot, momentum_update,
    random_crop, similarity, squared_td_error, td_loss, td_target,
)
from app.services.replay import ReplayBuffer


def _fixed(values):
    table = torch.tensor(values, dtype=torch.float64)
    return lambda _obs: table


# ==================== TD 目标与损失 ====================

def test_td_target_double_dqn_arithmetic():
    online = _fixed([[0.0, 5.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
    target = _fixed([[9.0, 2.0, 9.0, 9.0], [4.0, 7.0, 7.0, 7.0]])
    y = td_target(torch.tensor([1.0, -50.0]), None, torch.tensor([False, True]), online, target, 0.99)
    assert y.tolist() == pytest.approx([2.98, -50.0])


def test_td_target_same_network_is_standard_max():
    values = [[0.5, 3.0, -1.0, 2.0]]
    y = td_target(torch.tensor([0.2]), None, torch.tensor([False]), _fixed(values), _fixed(values), 0.9)
    assert y.item() == pytest.approx(0.2 + 0.9 * 3.0)


def test_td_loss_single_item():
    obs = torch.zeros(1, 4, dtype=torch.float64, requires_grad=True)
    batch = SimpleNamespace(obs=obs, actions=torch.tensor([2]), rewards=torch.tensor([3.0]),
                            next_obs=None, terminals=torch.tensor([True]))
    loss, y = td_loss(batch, lambda o: o if o is not None else torch.zeros(1, 4, dtype=torch.float64),
                      _fixed([[0.0] * 4]), 0.99)
    assert loss.item() == pytest.approx(9.0)
    assert y.item() == 3.0
    loss.backward()
    assert obs.grad[0, 2].item() == pytest.approx(-6.0)


def test_td_loss_zero_when_q_matches_target():
    q = torch.tensor([3.0, 1.0], dtype=torch.float64, requires_grad=True)
    loss = squared_td_error(q, torch.tensor([3.0, 1.0], dtype=torch.float64))
    loss.backward()
    assert loss.item() == 0.0
    assert torch.count_nonzero(q.grad) == 0


def test_target_is_treated_as_constant():
    q = torch.tensor([1.0], dtype=torch.float64, requires_grad=True)
    y = torch.tensor([2.0], dtype=torch.float64, requires_grad=True)
    squared_td_error(q, y).backward()
    assert y.grad is None
    assert q.grad.item() == pytest.approx(-2.0)


# ==================== 裁剪 ====================

def test_random_crop_keeps_channels_aligned():
    rng = np.random.default_rng(0)
    obs = np.arange(24 * 32 * 9).reshape(24, 32, 9)
    out, offsets = random_crop(obs, rng, 20, 28)
    r, c = offsets[0]
    np.testing.assert_array_equal(out, obs[r:r + 20, c:c + 28, :])
    np.testing.assert_array_equal(crop_at(obs, (0, 0), 20, 28), obs[:20, :28])


def test_two_crops_agree_on_overlap():
    rng = np.random.default_rng(1)
    obs = np.random.default_rng(2).random((24, 32, 9))
    a, (off_a,) = random_crop(obs, rng, 20, 28)
    b, (off_b,) = random_crop(obs, rng, 20, 28)
    r0, c0 = np.maximum(off_a, off_b)
    r1, c1 = np.minimum(off_a, off_b) + (20, 28)
    np.testing.assert_array_equal(a[r0 - off_a[0]:r1 - off_a[0], c0 - off_a[1]:c1 - off_a[1]],
                                  b[r0 - off_b[0]:r1 - off_b[0], c0 - off_b[1]:c1 - off_b[1]])


def test_crop_offsets_are_uniform():
    rng = np.random.default_rng(0)
    n = 10000
    offsets = crop_offsets(rng, (200, 280), 184, 264, n=n)
    assert offsets.min() == 0 and offsets.max() == 16
    counts = np.zeros((17, 17))
    np.add.at(counts, (offsets[:, 0], offsets[:, 1]), 1)
    expected = n / counts.size
    chi2 = ((counts - expected) ** 2 / expected).sum()
    df = counts.size - 1
    assert chi2 < df + 5 * math.sqrt(2 * df)


def test_crop_larger_than_observation():
    with pytest.raises(ValueError):
        crop_offsets(np.random.default_rng(0), (10, 10), 11, 5)


def test_center_crop():
    obs = np.arange(200 * 280).reshape(200, 280, 1)
    assert center_offset((200, 280), 184, 264) == (8, 8)
    np.testing.assert_array_equal(center_crop(obs, 184, 264), obs[8:192, 8:272])


# ==================== 对比损失 ====================

def test_similarity_examples():
    eye = np.eye(3)
    e0, e1 = eye[0], eye[1]
    assert similarity(e0, e0, eye) == pytest.approx(1.0)
    assert similarity(e0, e1, eye) == pytest.approx(0.0)
    rng = np.random.default_rng(0)
    q, k, W = rng.normal(size=4), rng.normal(size=4), rng.normal(size=(4, 4))
    naive = sum(q[i] * W[i, j] * k[j] for i in range(4) for j in range(4))
    assert similarity(q, k, W) == pytest.approx(naive, abs=1e-10)


def test_info_nce_single_pair_is_zero():
    q = torch.randn(1, 5, dtype=torch.float64)
    k = torch.randn(1, 5, dtype=torch.float64)
    assert info_nce_loss(q, k, torch.randn(5, 5, dtype=torch.float64)).item() == pytest.approx(0.0, abs=1e-12)


def test_info_nce_orthonormal_pair():
    eye = torch.eye(2, dtype=torch.float64)
    loss = info_nce_loss(eye, eye, eye)
    assert loss.item() == pytest.approx(-math.log(math.e / (math.e + 1)), abs=1e-5)
    assert loss.item() == pytest.approx(0.31326, abs=1e-5)


def test_info_nce_uniform_similarities():
    q = torch.ones(4, 3, dtype=torch.float64)
    loss = info_nce_loss(q, q.clone(), torch.eye(3, dtype=torch.float64))
    assert loss.item() == pytest.approx(math.log(4))


def test_info_nce_permutation_invariant():
    gen = torch.Generator().manual_seed(0)
    q = torch.randn(6, 4, dtype=torch.float64, generator=gen)
    k = torch.randn(6, 4, dtype=torch.float64, generator=gen)
    W = torch.randn(4, 4, dtype=torch.float64, generator=gen)
    perm = torch.randperm(6, generator=gen)
    assert info_nce_loss(q[perm], k[perm], W).item() == pytest.approx(info_nce_loss(q, k, W).item())


def test_info_nce_stable_for_large_logits():
    q = torch.eye(3, dtype=torch.float64) * 1e3
    assert torch.isfinite(info_nce_loss(q, q, torch.eye(3, dtype=torch.float64)))


def test_info_nce_gradients_flow_to_queries_and_W_only():
    q = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
    k = torch.randn(3, 4, dtype=torch.float64, requires_grad=True)
    W = torch.randn(4, 4, dtype=torch.float64, requires_grad=True)
    info_nce_loss(q, k, W).backward()
    assert q.grad is not None and W.grad is not None
    assert k.grad is None
    assert torch.autograd.gradcheck(lambda a, b: info_nce_loss(a, k.detach(), b), (q, W))


# ==================== 动量更新 ====================

def test_momentum_update_examples():
    k = [torch.zeros(3)]
    momentum_update(k, [torch.ones(3)], 0.999)
    assert torch.allclose(k[0], torch.full((3,), 0.001))
    same = [torch.tensor([1.5, -2.0])]
    momentum_update(same, [torch.tensor([1.5, -2.0])], 0.999)
    assert torch.allclose(same[0], torch.tensor([1.5, -2.0]))


def test_momentum_update_closed_form():
    k0 = torch.tensor([2.0, -1.0], dtype=torch.float64)
    q = torch.tensor([0.5, 0.5], dtype=torch.float64)
    k = [k0.clone()]
    m, n = 0.9, 25
    for _ in range(n):
        momentum_update(k, [q], m)
    assert torch.allclose(k[0] - q, (k0 - q) * m ** n, atol=1e-12)


def test_momentum_update_shape_mismatch():
    with pytest.raises(ValueError):
        momentum_update([torch.zeros(2)], [torch.zeros(3)], 0.5)


# ==================== 学习器 ====================

def _params(module):
    return {n: p.detach().clone() for n, p in module.named_parameters()}


def test_train_step_updates_online_only(tiny_settings, filled_buffer):
    learner = Learner(tiny_settings, seed=0)
    target_before = _params(learner.target)
    key_before = _params(learner.key_encoder)
    online_before = _params(learner.online)
    metrics = learner.train_step(filled_buffer)
    assert metrics["step"] == 1
    assert all(math.isfinite(metrics[k]) for k in ("td_loss", "contrastive_loss", "mean_q"))
    assert any(not torch.equal(online_before[n], p) for n, p in learner.online.named_parameters())
    for n, p in learner.target.named_parameters():
        assert p.grad is None and torch.equal(target_before[n], p)
    m = tiny_settings.learner.momentum
    for n, p in learner.key_encoder.named_parameters():
        assert p.grad is None
        expected = m * key_before[n] + (1 - m) * dict(learner.online.encoder.named_parameters())[n]
        assert torch.allclose(p, expected, atol=1e-6)


def test_target_synced_every_period(tiny_settings, filled_buffer):
    settings = settings_from_dict({"learner": {"target_sync_period": 2}}, base=tiny_settings)
    learner = Learner(settings, seed=0)
    learner.train_step(filled_buffer)
    assert any(not torch.equal(a, b) for a, b in zip(learner.target.parameters(), learner.online.parameters()))
    learner.train_step(filled_buffer)
    for a, b in zip(learner.target.parameters(), learner.online.parameters()):
        assert torch.equal(a, b)


def test_zero_contrastive_weight_is_plain_d3qn(tiny_settings, filled_buffer):
    settings = settings_from_dict({"learner": {"contrastive_weight": 0.0}}, base=tiny_settings)
    learner = Learner(settings, seed=5)
    manual = Learner(settings, seed=5)
    W_before = learner.similarity.W.detach().clone()
    metrics = learner.train_step(filled_buffer)
    assert metrics["contrastive_loss"] == 0.0
    assert torch.equal(learner.similarity.W, W_before)

    batch, _ = manual.sample_views(filled_buffer)
    manual.online.train()
    manual.target.train()
    # 与 train_step 相同的前向顺序，噪声抽样序列才一致
    q_taken = manual.online(batch.obs).gather(1, batch.actions.view(-1, 1)).squeeze(1)
    y = td_target(batch.rewards, batch.next_obs, batch.terminals, manual.online, manual.target,
                  settings.learner.gamma)
    loss = squared_td_error(q_taken, y)
    manual.optimizer.zero_grad(set_to_none=True)
    loss.backward()
    manual.optimizer.step()
    for (name, a), (_, b) in zip(learner.online.named_parameters(), manual.online.named_parameters()):
        assert torch.allclose(a, b, atol=1e-7), name


def test_buffer_underfull(tiny_settings):
    learner = Learner(tiny_settings, seed=0)
    with pytest.raises(BufferUnderfull):
        learner.train_step(ReplayBuffer(100))


def test_snapshot_is_immutable_copy(tiny_settings, filled_buffer):
    learner = Learner(tiny_settings, seed=0)
    snap = learner.snapshot_params()
    assert snap.version == 0
    name, arr = next(iter(snap.arrays.items()))
    before = arr.copy()
    with pytest.raises(ValueError):
        arr[...] = 0
    learner.train_step(filled_buffer)
    np.testing.assert_array_equal(snap.arrays[name], before)
    from app.models.network import build_network
    net = build_network(tiny_settings.network, seed=99)
    load_snapshot(net, snap)
    for n, p in net.named_parameters():
        np.testing.assert_array_equal(p.detach().numpy(), snap.arrays[n])


def test_same_seed_same_updates(tiny_settings, filled_buffer):
    a, b = Learner(tiny_settings, seed=3), Learner(tiny_settings, seed=3)
    ma, mb = a.train_step(filled_buffer), b.train_step(filled_buffer)
    assert ma == mb
    for pa, pb in zip(a.online.parameters(), b.online.parameters()):
        assert torch.equal(pa, pb)


def test_snapshots_consistent_under_concurrent_training(tiny_settings, filled_buffer):
    learner = Learner(tiny_settings, seed=1)
    reference = {0: learner.snapshot_params()}
    done = threading.Event()

    def train():
        try:
            for _ in range(15):
                learner.train_step(filled_buffer)
                snap = learner.snapshot_params()
                reference[snap.version] = snap
        finally:
            done.set()

    def read():
        taken = []
        while not done.is_set():
            taken.append(learner.snapshot_params())
        return taken

    with ThreadPoolExecutor(max_workers=4) as executor:
        readers = [executor.submit(read) for _ in range(3)]
        executor.submit(train).result()
        taken = [snap for future in readers for snap in future.result()]

    assert len({snap.version for snap in taken}) > 1
    for snap in taken:
        # 每个快照的全部参数都来自同一个学习步
        expected = reference[snap.version]
        for name, arr in snap.arrays.items():
            np.testing.assert_array_equal(arr, expected.arrays[name])
