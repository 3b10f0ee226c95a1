# -*- coding: utf-8 -*-
"""
显著图
|∂ max_a Q(s, a) / ∂s|，按每帧 3 个通道求和，并嵌回完整栅格（裁剪区域之外为 0）
"""

from dataclasses import dataclass

import numpy as np
import torch

from app.models.observation import FRAME_CHANNELS
from app.services.learner import center_offset


@dataclass(frozen=True)
class SaliencyMap:
    """maps: (帧数, H, W) 非负数组；crop_offset 为网络输入窗口在完整栅格中的左上角"""
    maps: np.ndarray
    crop_offset: tuple

    @property
    def n_frames(self):
        return self.maps.shape[0]


def input_gradient(network, crop):
    """
    评估模式下 max_a Q 对输入的梯度（带符号）

    参数:
        crop: (h, w, C) 网络尺寸的观测
    返回:
        (h, w, C) ndarray
    """
    was_training = network.training
    network.eval()
    try:
        x = torch.as_tensor(np.asarray(crop)).to(network.dtype).unsqueeze(0).requires_grad_(True)
        q_max = network(x).max(dim=1).values.sum()
        (grad,) = torch.autograd.grad(q_max, x)
    finally:
        network.train(was_training)
    return grad[0].detach().cpu().numpy()


def saliency(network, obs):
    """
    参数:
        network: QNetwork
        obs: (H, W, 3·帧数) 完整观测
    返回:
        SaliencyMap
    """
    obs = np.asarray(obs)
    rows, cols, channels = obs.shape
    cfg = network.cfg
    r0, c0 = center_offset((rows, cols), cfg.crop_rows, cfg.crop_cols)
    crop = obs[r0:r0 + cfg.crop_rows, c0:c0 + cfg.crop_cols]
    grad = np.abs(input_gradient(network, crop))
    n_frames = channels // FRAME_CHANNELS
    per_frame = grad.reshape(cfg.crop_rows, cfg.crop_cols, n_frames, FRAME_CHANNELS).sum(axis=-1)
    full = np.zeros((n_frames, rows, cols), dtype=np.float64)
    full[:, r0:r0 + cfg.crop_rows, c0:c0 + cfg.crop_cols] = per_frame.transpose(2, 0, 1)
    return SaliencyMap(maps=full, crop_offset=(r0, c0))
