# -*- coding: utf-8 -*-
"""
车辆控制模块
离散动作 → 目标速度，PID 纵向速度跟踪，纯追踪横向路径跟踪
"""

import math
from dataclasses import dataclass, replace

from app.config import ACTION_SPEEDS_KMH, ControlConfig
from app.errors import PathExhausted
from app.utils.geometry import to_local

# 动作空间（km/h），升序且非负
ACTION_SPACE = ACTION_SPEEDS_KMH
N_ACTIONS = len(ACTION_SPACE)


def action_to_target_speed(index):
    """
    动作序号转换为目标速度

    参数:
        index: 0..3

    返回:
        目标速度 (m/s)
    """
    if isinstance(index, bool) or int(index) != index or not 0 <= index < N_ACTIONS:
        raise IndexError(f"动作序号越界: {index}")
    return ACTION_SPACE[int(index)] / 3.6


@dataclass(frozen=True)
class PidState:
    kp: float = 0.5
    ki: float = 0.05
    kd: float = 0.0
    integral: float = 0.0
    prev_error: float = None
    integral_clamp: float = 2.0
    output_limit: float = 1.0

    @classmethod
    def from_config(cls, cfg: ControlConfig):
        return cls(kp=cfg.kp, ki=cfg.ki, kd=cfg.kd, integral_clamp=cfg.integral_clamp)

    def reset(self):
        return replace(self, integral=0.0, prev_error=None)


def pid_speed(target, current, state, dt):
    """
    PID 速度跟踪

    输出饱和且误差同向时暂停积分（条件积分抗饱和），积分另有 ±integral_clamp 硬限幅

    返回:
        (油门/刹车 ∈ [-1, 1], 新的 PidState)
    """
    if dt <= 0:
        raise ValueError("dt 必须为正")
    error = target - current
    derivative = 0.0 if state.prev_error is None else (error - state.prev_error) / dt
    clamp = state.integral_clamp
    integral = min(max(state.integral + error * dt, -clamp), clamp)
    raw = state.kp * error + state.ki * integral + state.kd * derivative
    limit = state.output_limit
    if abs(raw) > limit and raw * error > 0:
        integral = state.integral
        raw = state.kp * error + state.ki * integral + state.kd * derivative
    output = min(max(raw, -limit), limit)
    return output, replace(state, integral=integral, prev_error=error)


def throttle_to_accel(command, throttle_accel, brake_decel):
    """油门/刹车指令换算为加速度"""
    command = min(max(command, -1.0), 1.0)
    return command * (throttle_accel if command >= 0 else brake_decel)


def lookahead_distance(speed, cfg: ControlConfig = None):
    cfg = cfg or ControlConfig()
    return max(cfg.lookahead_min, cfg.lookahead_gain * speed)


def pure_pursuit_steer(pose, path, lookahead, wheelbase, steer_limit=0.6, hint=None, window=None):
    """
    纯追踪转向角

    参数:
        pose: (x, y, heading)
        path: Polyline
        lookahead: 前视弧长（米）
        wheelbase: 轴距（米）
        hint, window: 投影搜索窗口，见 Polyline.project

    返回:
        转向角 (rad)，限幅 ±steer_limit

    异常:
        PathExhausted: 投影点已越过路径终点
    """
    if lookahead <= 0:
        raise ValueError("前视距离必须为正")
    x, y, heading = pose
    s, _ = path.project((x, y), hint=hint, window=window)
    if s > path.length:
        raise PathExhausted(f"投影弧长 {s:.2f} 超过路径长度 {path.length:.2f}")
    target = path.point_at(s + lookahead)
    local = to_local(target, x, y, heading)
    alpha = math.atan2(local[1], local[0])
    delta = math.atan(2.0 * wheelbase * math.sin(alpha) / lookahead)
    return min(max(delta, -steer_limit), steer_limit)
