# -*- coding: utf-8 -*-
"""
学习器模块
双 DQN 目标、TD 损失、随机裁剪、双线性相似度、InfoNCE 对比损失、动量键编码器与优化步
"""

import copy
import logging
import threading
from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from app.config import Settings
from app.errors import BufferUnderfull
from app.models.network import BilinearSimilarity, build_network
from app.services.replay import dequantize

logger = logging.getLogger(__name__)


# ==================== 数据增强 ====================

def crop_offsets(rng, shape, crop_rows, crop_cols, n=1):
    """每个样本一组均匀的 (row, col) 偏移，取值 {0..H-h}×{0..W-w}"""
    rows, cols = shape[0], shape[1]
    if crop_rows > rows or crop_cols > cols:
        raise ValueError(f"裁剪尺寸 {crop_rows}x{crop_cols} 超过观测 {rows}x{cols}")
    r = rng.integers(0, rows - crop_rows + 1, size=n)
    c = rng.integers(0, cols - crop_cols + 1, size=n)
    return np.stack([r, c], axis=1)


def crop_at(obs, offset, crop_rows, crop_cols):
    r, c = int(offset[0]), int(offset[1])
    return obs[r:r + crop_rows, c:c + crop_cols]


def random_crop(obs, rng, crop_rows, crop_cols):
    """
    随机裁剪；所有通道使用同一偏移

    参数:
        obs: (H, W, C) 单个观测或 (N, H, W, C) 批量
    返回:
        (裁剪结果, 偏移数组 (N, 2))
    """
    obs = np.asarray(obs)
    single = obs.ndim == 3
    batch = obs[None] if single else obs
    offsets = crop_offsets(rng, batch.shape[1:3], crop_rows, crop_cols, n=len(batch))
    out = np.stack([crop_at(item, off, crop_rows, crop_cols) for item, off in zip(batch, offsets)])
    return (out[0], offsets) if single else (out, offsets)


def center_crop(obs, crop_rows, crop_cols):
    """居中裁剪（行动与评测时使用）"""
    obs = np.asarray(obs)
    rows, cols = obs.shape[-3], obs.shape[-2]
    r0, c0 = center_offset((rows, cols), crop_rows, crop_cols)
    return obs[..., r0:r0 + crop_rows, c0:c0 + crop_cols, :]


def center_offset(shape, crop_rows, crop_cols):
    if crop_rows > shape[0] or crop_cols > shape[1]:
        raise ValueError(f"裁剪尺寸 {crop_rows}x{crop_cols} 超过观测 {shape[0]}x{shape[1]}")
    return (shape[0] - crop_rows) // 2, (shape[1] - crop_cols) // 2


# ==================== 损失函数 ====================

def similarity(q, k, W):
    """sim(q, k) = qᵀ W k"""
    return q @ W @ k


@torch.no_grad()
def td_target(rewards, next_obs, terminals, online, target, gamma):
    """
    双 DQN 目标：在线网络选动作、目标网络评估

    参数:
        rewards: (B,) 张量
        next_obs: 传给网络的下一观测
        terminals: (B,) 布尔张量；终止项的目标恰为 r
        online, target: 返回 (B, n_actions) Q 值的可调用对象
    """
    next_actions = torch.argmax(online(next_obs), dim=1, keepdim=True)
    next_values = target(next_obs).gather(1, next_actions).squeeze(1)
    rewards = rewards.to(next_values.dtype)
    return torch.where(terminals, rewards, rewards + gamma * next_values)


def squared_td_error(q_taken, targets):
    return torch.mean((targets.detach() - q_taken) ** 2)


def td_loss(batch, online, target, gamma):
    """
    TD 损失 mean((y − Q(s, a; θ))²)，y 不回传梯度

    参数:
        batch: 含 obs / actions / rewards / next_obs / terminals 张量的对象
    返回:
        (loss, y)
    """
    y = td_target(batch.rewards, batch.next_obs, batch.terminals, online, target, gamma)
    q_taken = online(batch.obs).gather(1, batch.actions.view(-1, 1)).squeeze(1)
    return squared_td_error(q_taken, y), y


def info_nce_loss(queries, keys, W):
    """
    InfoNCE：每行以对角元素为正样本、同批其余键为负样本的交叉熵

    logits 先减去行最大值；键视为常量
    """
    logits = queries @ W @ keys.detach().T
    logits = logits - logits.max(dim=1, keepdim=True).values
    labels = torch.arange(logits.shape[0], device=logits.device)
    return F.cross_entropy(logits, labels)


@torch.no_grad()
def momentum_update(key_params, query_params, m):
    """θ_k ← m·θ_k + (1 − m)·θ_q，原地更新"""
    for pk, pq in zip(key_params, query_params):
        if pk.shape != pq.shape:
            raise ValueError(f"参数形状不一致: {tuple(pk.shape)} vs {tuple(pq.shape)}")
        pk.mul_(m).add_(pq, alpha=1.0 - m)


# ==================== 学习器 ====================

@dataclass
class TensorBatch:
    obs: torch.Tensor
    actions: torch.Tensor
    rewards: torch.Tensor
    next_obs: torch.Tensor
    terminals: torch.Tensor


@dataclass(frozen=True)
class ParamSnapshot:
    """只读参数快照：version 为产生它时的学习步数"""
    version: int
    arrays: dict

    def state_dict(self):
        return {name: torch.from_numpy(arr.copy()) for name, arr in self.arrays.items()}


def _freeze(module):
    for p in module.parameters():
        p.requires_grad_(False)
    return module


class Learner:
    """
    学习器：持有在线网络 θ、目标网络 θ⁻、动量键编码器 θ_k、相似度矩阵 W 与 Adam 状态

    train_step 在单一线程中调用；snapshot_params 可在其他线程调用
    """

    def __init__(self, settings: Settings = None, seed=0):
        self.settings = settings or Settings()
        self.net_cfg = self.settings.network
        self.cfg = self.settings.learner
        self.seed = int(seed)

        self.online = build_network(self.net_cfg, seed=self.seed)
        self.target = _freeze(copy.deepcopy(self.online))
        self.key_encoder = _freeze(copy.deepcopy(self.online.encoder))
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(self.seed + 1)
            self.similarity = BilinearSimilarity(self.net_cfg.latent_dim, self.net_cfg.dtype)

        self.noise_generator = torch.Generator().manual_seed(self.seed)
        self.online.set_noise_generator(self.noise_generator)
        self.target.set_noise_generator(self.noise_generator)
        self.rng = np.random.default_rng(self.seed)

        self.optimizer = torch.optim.Adam(
            self.trainable_parameters(), lr=self.cfg.lr, betas=tuple(self.cfg.betas), eps=self.cfg.adam_eps,
        )
        self.step_count = 0
        self._param_lock = threading.Lock()

    def trainable_parameters(self):
        return list(self.online.parameters()) + list(self.similarity.parameters())

    @property
    def dtype(self):
        return self.online.dtype

    # ---------- 采样 ----------

    def _tensor(self, arr):
        return torch.as_tensor(arr).to(self.dtype)

    def sample_views(self, buffer):
        """
        采样一批并生成 查询视角 / 键视角 / 下一观测 的随机裁剪

        返回:
            (TensorBatch（obs 为查询视角）, 键视角张量)
        """
        batch_size = self.cfg.batch_size
        if len(buffer) < batch_size:
            raise BufferUnderfull(f"经验池 {len(buffer)} 条，不足批大小 {batch_size}")
        batch = buffer.sample(batch_size, self.rng)
        rows, cols = self.net_cfg.crop_rows, self.net_cfg.crop_cols
        query_view, _ = random_crop(batch.obs, self.rng, rows, cols)
        key_view, _ = random_crop(batch.obs, self.rng, rows, cols)
        next_view, _ = random_crop(batch.next_obs, self.rng, rows, cols)
        tensors = TensorBatch(
            obs=self._tensor(dequantize(query_view)),
            actions=torch.as_tensor(batch.actions, dtype=torch.int64),
            rewards=self._tensor(batch.rewards),
            next_obs=self._tensor(dequantize(next_view)),
            terminals=torch.as_tensor(batch.terminals, dtype=torch.bool),
        )
        return tensors, self._tensor(dequantize(key_view))

    # ---------- 训练 ----------

    def train_step(self, buffer):
        """
        执行一次联合优化

        返回:
            dict: td_loss / contrastive_loss / mean_q / step
        """
        batch, key_view = self.sample_views(buffer)
        self.online.train()
        self.target.train()

        latents = self.online.encode(batch.obs)
        q_values = self.online.q_from_latent(latents)
        q_taken = q_values.gather(1, batch.actions.view(-1, 1)).squeeze(1)
        y = td_target(batch.rewards, batch.next_obs, batch.terminals, self.online, self.target, self.cfg.gamma)
        rl_loss = squared_td_error(q_taken, y)
        loss = self.cfg.rl_weight * rl_loss

        contrastive = None
        if self.cfg.contrastive_weight != 0:
            with torch.no_grad():
                keys = self.key_encoder(self.online.prepare(key_view))
            contrastive = info_nce_loss(latents, keys, self.similarity.W)
            loss = loss + self.cfg.contrastive_weight * contrastive

        with self._param_lock:
            self.optimizer.zero_grad(set_to_none=True)
            loss.backward()
            self.optimizer.step()
            momentum_update(self.key_encoder.parameters(), self.online.encoder.parameters(), self.cfg.momentum)
            self.step_count += 1
            if self.step_count % self.cfg.target_sync_period == 0:
                self.sync_target()

        return {
            "step": self.step_count,
            "td_loss": float(rl_loss.detach()),
            "contrastive_loss": float(contrastive.detach()) if contrastive is not None else 0.0,
            "mean_q": float(q_values.detach().mean()),
        }

    def sync_target(self):
        self.target.load_state_dict(self.online.state_dict())
        logger.debug(f"[训练] 第 {self.step_count} 步同步目标网络")

    # ---------- 快照 ----------

    def snapshot_params(self):
        """在线网络参数的深拷贝，数组只读，与后续更新解耦"""
        with self._param_lock:
            arrays = {}
            for name, p in self.online.named_parameters():
                arr = p.detach().cpu().numpy().copy()
                arr.flags.writeable = False
                arrays[name] = arr
            return ParamSnapshot(version=self.step_count, arrays=arrays)

    # ---------- 续训状态 ----------

    def runtime_state(self):
        return {
            "rng": self.rng.bit_generator.state,
            "noise_generator": self.noise_generator.get_state(),
        }

    def restore_runtime(self, state):
        self.rng.bit_generator.state = state["rng"]
        self.noise_generator.set_state(state["noise_generator"])


def load_snapshot(network, snapshot):
    """把快照写入网络（仅参数，噪声缓冲区保持不变）"""
    missing = set(dict(network.named_parameters())) - set(snapshot.arrays)
    if missing:
        raise ValueError(f"快照缺少参数: {sorted(missing)[:3]}")
    network.load_state_dict(snapshot.state_dict(), strict=False)
