# -*- coding: utf-8 -*-
"""
Q 网络模块
残差卷积编码器 → 512 维隐状态 → 噪声线性层的价值/优势双流 → 对决组合
"""

import math

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from app.config import NetworkConfig
from app.errors import ShapeError

TORCH_DTYPES = {"float32": torch.float32, "float64": torch.float64}


def _groups(channels):
    return math.gcd(8, channels)


# ==================== 编码器 ====================

class ResidualBlock(nn.Module):
    def __init__(self, c_in, c_out, stride):
        super().__init__()
        self.conv1 = nn.Conv2d(c_in, c_out, 3, stride=stride, padding=1, bias=False)
        self.norm1 = nn.GroupNorm(_groups(c_out), c_out)
        self.conv2 = nn.Conv2d(c_out, c_out, 3, stride=1, padding=1, bias=False)
        self.norm2 = nn.GroupNorm(_groups(c_out), c_out)
        if stride != 1 or c_in != c_out:
            self.shortcut = nn.Sequential(
                nn.Conv2d(c_in, c_out, 1, stride=stride, bias=False),
                nn.GroupNorm(_groups(c_out), c_out),
            )
        else:
            self.shortcut = nn.Identity()

    def forward(self, x):
        out = F.relu(self.norm1(self.conv1(x)))
        out = self.norm2(self.conv2(out))
        return F.relu(out + self.shortcut(x))


class ConvEncoder(nn.Module):
    """
    4 级残差卷积编码器（默认 16/32/64/128 通道，级间步长 2），全局平均池化后线性映射到隐状态

    resnet18=True 时使用 64–512 通道、每级 2 个残差块的完整深度
    """

    def __init__(self, cfg: NetworkConfig):
        super().__init__()
        if cfg.resnet18:
            channels, blocks = (64, 128, 256, 512), 2
            self.stem = nn.Sequential(
                nn.Conv2d(cfg.in_channels, channels[0], 7, stride=2, padding=3, bias=False),
                nn.GroupNorm(_groups(channels[0]), channels[0]),
                nn.ReLU(),
                nn.MaxPool2d(3, stride=2, padding=1),
            )
        else:
            channels, blocks = tuple(cfg.channels), cfg.blocks_per_stage
            self.stem = nn.Sequential(
                nn.Conv2d(cfg.in_channels, channels[0], 3, stride=2, padding=1, bias=False),
                nn.GroupNorm(_groups(channels[0]), channels[0]),
                nn.ReLU(),
            )
        layers = []
        c_in = channels[0]
        for i, c_out in enumerate(channels):
            for b in range(blocks):
                stride = 2 if (b == 0 and i > 0) else 1
                layers.append(ResidualBlock(c_in, c_out, stride))
                c_in = c_out
        self.stages = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.fc = nn.Linear(c_in, cfg.latent_dim)
        nn.init.kaiming_uniform_(self.fc.weight, nonlinearity='relu')
        nn.init.zeros_(self.fc.bias)

    def forward(self, x):
        """x: (B, C, H, W)"""
        h = self.stages(self.stem(x))
        return self.fc(torch.flatten(self.pool(h), 1))


# ==================== 噪声线性层 ====================

def _scale_noise(x):
    return x.sign() * x.abs().sqrt()


class NoisyLinear(nn.Module):
    """
    因子化高斯噪声线性层

    y = (b + W x) + (b_noisy ⊙ ε^b + (W_noisy ⊙ ε^w) x)
    训练模式每次前向重新抽取 ε（hold_noise 为 True 时保持上一次的 ε）；评估模式只计算 b + W x
    """

    def __init__(self, in_features, out_features, sigma0=0.5):
        super().__init__()
        self.in_features = in_features
        self.out_features = out_features
        self.sigma0 = sigma0
        self.weight_mu = nn.Parameter(torch.empty(out_features, in_features))
        self.weight_sigma = nn.Parameter(torch.empty(out_features, in_features))
        self.bias_mu = nn.Parameter(torch.empty(out_features))
        self.bias_sigma = nn.Parameter(torch.empty(out_features))
        self.register_buffer("weight_epsilon", torch.zeros(out_features, in_features))
        self.register_buffer("bias_epsilon", torch.zeros(out_features))
        self.hold_noise = False
        self.generator = None
        self.draw_count = 0
        self.reset_parameters()

    def reset_parameters(self):
        nn.init.kaiming_uniform_(self.weight_mu, nonlinearity='relu')
        nn.init.zeros_(self.bias_mu)
        scale = self.sigma0 / math.sqrt(self.in_features)
        nn.init.constant_(self.weight_sigma, scale)
        nn.init.constant_(self.bias_sigma, scale)

    @torch.no_grad()
    def sample_noise(self):
        opts = dict(dtype=self.weight_mu.dtype, device=self.weight_mu.device, generator=self.generator)
        eps_in = _scale_noise(torch.randn(self.in_features, **opts))
        eps_out = _scale_noise(torch.randn(self.out_features, **opts))
        # 重新绑定而非原地写入：之前前向图里保存的 ε 必须保持不变
        self.weight_epsilon = torch.outer(eps_out, eps_in)
        self.bias_epsilon = eps_out
        self.draw_count += 1

    def forward(self, x):
        if not self.training:
            return F.linear(x, self.weight_mu, self.bias_mu)
        if not self.hold_noise:
            self.sample_noise()
        weight = self.weight_mu + self.weight_sigma * self.weight_epsilon
        bias = self.bias_mu + self.bias_sigma * self.bias_epsilon
        return F.linear(x, weight, bias)

    def extra_repr(self):
        return f"in_features={self.in_features}, out_features={self.out_features}, sigma0={self.sigma0}"


# ==================== 对决 Q 网络 ====================

def dueling_combine(value, advantage):
    """Q(a) = V + (A(a) − mean(A))"""
    return value + advantage - advantage.mean(dim=-1, keepdim=True)


def select_action(q_values):
    """最大 Q 值对应的动作，并列时取最小序号"""
    q = q_values.detach().cpu().numpy() if isinstance(q_values, torch.Tensor) else np.asarray(q_values)
    return int(np.argmax(q))


class QNetwork(nn.Module):
    """
    对决 Q 网络

    输入为 (B, H, W, 9) 的裁剪观测（H、W 必须等于配置的裁剪尺寸）
    """

    def __init__(self, cfg: NetworkConfig = None):
        super().__init__()
        self.cfg = cfg or NetworkConfig()
        c = self.cfg
        self.encoder = ConvEncoder(c)
        self.value = nn.Sequential(
            NoisyLinear(c.latent_dim, c.head_hidden, c.sigma0), nn.ReLU(),
            NoisyLinear(c.head_hidden, 1, c.sigma0),
        )
        self.advantage = nn.Sequential(
            NoisyLinear(c.latent_dim, c.head_hidden, c.sigma0), nn.ReLU(),
            NoisyLinear(c.head_hidden, c.n_actions, c.sigma0),
        )
        self.to(TORCH_DTYPES[c.dtype])

    @property
    def dtype(self):
        return self.encoder.fc.weight.dtype

    def prepare(self, obs):
        """校验形状并转换为 (B, C, H, W) 张量"""
        x = obs if isinstance(obs, torch.Tensor) else torch.as_tensor(np.asarray(obs))
        if x.dim() == 3:
            x = x.unsqueeze(0)
        expected = (self.cfg.crop_rows, self.cfg.crop_cols, self.cfg.in_channels)
        if x.dim() != 4 or tuple(x.shape[1:]) != expected:
            raise ShapeError(f"输入形状 {tuple(x.shape)} 与配置 (B, {expected[0]}, {expected[1]}, "
                             f"{expected[2]}) 不符")
        return x.to(self.dtype).permute(0, 3, 1, 2)

    def encode(self, obs):
        return self.encoder(self.prepare(obs))

    def heads(self, latent):
        """返回 (V: (B, 1), A: (B, n_actions))"""
        return self.value(latent), self.advantage(latent)

    def q_from_latent(self, latent):
        value, advantage = self.heads(latent)
        return dueling_combine(value, advantage)

    def forward(self, obs):
        return self.q_from_latent(self.encode(obs))

    # ---------- 噪声控制 ----------

    def noisy_layers(self):
        return [m for m in self.modules() if isinstance(m, NoisyLinear)]

    def sample_noise(self):
        for layer in self.noisy_layers():
            layer.sample_noise()

    def hold_noise(self, flag=True):
        for layer in self.noisy_layers():
            layer.hold_noise = flag

    def set_noise_generator(self, generator):
        for layer in self.noisy_layers():
            layer.generator = generator

    @property
    def noise_draws(self):
        return sum(layer.draw_count for layer in self.noisy_layers())


class BilinearSimilarity(nn.Module):
    """对比学习相似度 sim(q, k) = qᵀ W k"""

    def __init__(self, latent_dim, dtype="float32"):
        super().__init__()
        self.W = nn.Parameter(torch.rand(latent_dim, latent_dim, dtype=TORCH_DTYPES[dtype]))

    def forward(self, queries, keys):
        """返回 (N, N) logits，logits[i, j] = sim(q_i, k_j)"""
        return queries @ self.W @ keys.T


def build_network(cfg: NetworkConfig = None, seed=None):
    """按配置构造 Q 网络；给定 seed 时参数初始化可复现"""
    if seed is None:
        return QNetwork(cfg)
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        return QNetwork(cfg)
