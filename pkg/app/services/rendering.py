# -*- coding: utf-8 -*-
"""
渲染模块
俯视世界图、观测通道图与显著图叠加，逐步输出 PNG
"""

import os
import logging

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Circle, Polygon  # noqa: E402
import numpy as np  # noqa: E402

from app.config import Settings  # noqa: E402
from app.models.observation import FRAME_CHANNELS  # noqa: E402
from app.services.env import DrivingEnv  # noqa: E402
from app.services.saliency import saliency  # noqa: E402

logger = logging.getLogger(__name__)

CHANNEL_TITLES = ("occupancy", "drivable", "route")
FRAME_DPI = 100


def _save(fig, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    fig.savefig(path, dpi=FRAME_DPI, format="png")
    plt.close(fig)
    return path


def render_world(world, path, visible_ids=None):
    """俯视图：车道、目标区域、车辆足迹（自车红色，雷达可见车辆深蓝，其余浅蓝）"""
    scenario = world.scenario
    fig, ax = plt.subplots(figsize=(6, 6))
    for lane in scenario.lanes.values():
        pts = lane.centerline.points
        ax.plot(pts[:, 0], pts[:, 1], color="0.8", linewidth=lane.width * 2.0, solid_capstyle="butt", zorder=0)
        ax.plot(pts[:, 0], pts[:, 1], color="0.6", linewidth=0.5, linestyle="--", zorder=1)
    ego_path = scenario.ego_path.points
    ax.plot(ego_path[:, 0], ego_path[:, 1], color="tab:red", linewidth=0.8, alpha=0.5, zorder=1)
    ax.add_patch(Circle(scenario.goal_point, scenario.goal_region.radius, color="tab:green", alpha=0.4, zorder=2))
    for v in world.vehicles:
        if v.is_ego:
            color = "tab:red"
        elif visible_ids is not None and v.id in visible_ids:
            color = "navy"
        else:
            color = "lightsteelblue"
        ax.add_patch(Polygon(v.corners(), closed=True, facecolor=color, edgecolor="k", linewidth=0.5, zorder=3))
    ego = world.ego
    ax.set_xlim(ego.x - 40, ego.x + 40)
    ax.set_ylim(ego.y - 40, ego.y + 40)
    ax.set_aspect("equal")
    ax.set_title(f"{scenario.id}  t={world.time:.1f}s  v={ego.speed * 3.6:.1f}km/h  {world.status.value}")
    return _save(fig, path)


def render_observation(obs, path):
    """堆叠观测的 帧数 × 3 通道网格图（最上一行为最早的帧）"""
    obs = np.asarray(obs)
    n_frames = obs.shape[-1] // FRAME_CHANNELS
    fig, axes = plt.subplots(n_frames, FRAME_CHANNELS, figsize=(3 * FRAME_CHANNELS, 2.2 * n_frames), squeeze=False)
    for k in range(n_frames):
        for c in range(FRAME_CHANNELS):
            ax = axes[k, c]
            ax.imshow(obs[..., k * FRAME_CHANNELS + c], cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
            ax.set_xticks([])
            ax.set_yticks([])
            if k == 0:
                ax.set_title(CHANNEL_TITLES[c])
    return _save(fig, path)


def render_saliency(obs, saliency_map, path):
    """每帧：占据 + 可行驶区域为底图，显著图半透明叠加"""
    obs = np.asarray(obs)
    n_frames = saliency_map.n_frames
    fig, axes = plt.subplots(1, n_frames, figsize=(3.2 * n_frames, 2.6), squeeze=False)
    peak = float(saliency_map.maps.max()) or 1.0
    for k in range(n_frames):
        ax = axes[0, k]
        base = 0.6 * obs[..., k * FRAME_CHANNELS] + 0.3 * obs[..., k * FRAME_CHANNELS + 1]
        ax.imshow(base, cmap="gray", vmin=0.0, vmax=1.0, interpolation="nearest")
        ax.imshow(saliency_map.maps[k], cmap="inferno", alpha=0.6, vmin=0.0, vmax=peak, interpolation="nearest")
        ax.set_xticks([])
        ax.set_yticks([])
        ax.set_title(f"frame {k}")
    return _save(fig, path)


def render_episode(scenario, seed, policy, out_dir, settings=None, density="regular",
                   max_steps=None, saliency_network=None):
    """
    跑一个回合并逐步写出 world_XXXX.png / obs_XXXX.png（以及可选的 saliency_XXXX.png）

    参数:
        policy: Policy 实例
        saliency_network: 给定时额外输出显著图叠加
    返回:
        写出的文件路径列表
    """
    settings = settings or Settings()
    env = DrivingEnv(scenario, settings, density=density, render_observation=True)
    obs, _ = env.reset(seed=seed, options={"density": density})
    policy.reset(env, seed)
    files = []
    step = 0
    done = False
    while not done and (max_steps is None or step < max_steps):
        scan = env.builder.last_scan
        visible_ids = set(int(i) for i in scan.hit_ids[scan.hit_ids >= 0]) if scan is not None else None
        files.append(render_world(env.world, os.path.join(out_dir, f"world_{step:04d}.png"), visible_ids))
        files.append(render_observation(obs, os.path.join(out_dir, f"obs_{step:04d}.png")))
        if saliency_network is not None:
            files.append(render_saliency(obs, saliency(saliency_network, obs),
                                         os.path.join(out_dir, f"saliency_{step:04d}.png")))
        action = policy.act(env, obs)
        obs, _, terminated, truncated, _ = env.step(action)
        done = terminated or truncated
        step += 1
    logger.info(f"[渲染] {scenario.id} 种子 {seed}：{step} 步，{len(files)} 个文件 → {out_dir}")
    return files
