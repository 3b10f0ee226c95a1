# -*- coding: utf-8 -*-
"""
消息帧编解码
转移帧：固定头 + 按通道平面排列的 uint8 观测；回合摘要帧：固定头 + JSON
"""

import json
import struct

import numpy as np

from app.errors import CodecError
from app.services.replay import Transition, EpisodeSummary, quantize, QUANT_LEVELS

TRANSITION_MAGIC = b'CLTR'
SUMMARY_MAGIC = b'CLEP'
CODEC_VERSION = 1

# magic, version, worker, step, action, reward, terminal, 量化步长, rows, cols, channels
_HEADER = struct.Struct('<4sBHQBd?fHHH')


def encode_transition(transition):
    obs = quantize(transition.obs)
    next_obs = quantize(transition.next_obs)
    if obs.shape != next_obs.shape or obs.ndim != 3:
        raise CodecError(f"观测形状不一致: {obs.shape} vs {next_obs.shape}")
    rows, cols, channels = obs.shape
    header = _HEADER.pack(TRANSITION_MAGIC, CODEC_VERSION, transition.worker, transition.step,
                          transition.action, float(transition.reward), bool(transition.terminal),
                          1.0 / QUANT_LEVELS, rows, cols, channels)
    planes = np.ascontiguousarray(obs.transpose(2, 0, 1)).tobytes()
    next_planes = np.ascontiguousarray(next_obs.transpose(2, 0, 1)).tobytes()
    return header + planes + next_planes


def _decode_transition(frame):
    if len(frame) < _HEADER.size:
        raise CodecError("帧长度不足")
    (magic, version, worker, step, action, reward, terminal,
     quant_step, rows, cols, channels) = _HEADER.unpack_from(frame)
    if version != CODEC_VERSION:
        raise CodecError(f"不支持的帧版本 {version}")
    if abs(quant_step - 1.0 / QUANT_LEVELS) > 1e-9:
        raise CodecError(f"量化步长不符: {quant_step}")
    plane = rows * cols * channels
    if len(frame) != _HEADER.size + 2 * plane:
        raise CodecError(f"帧长度 {len(frame)} 与头部声明的尺寸不符")
    body = np.frombuffer(frame, dtype=np.uint8, offset=_HEADER.size)
    obs = body[:plane].reshape(channels, rows, cols).transpose(1, 2, 0).copy()
    next_obs = body[plane:].reshape(channels, rows, cols).transpose(1, 2, 0).copy()
    return Transition(obs=obs, action=int(action), reward=float(reward), next_obs=next_obs,
                      terminal=bool(terminal), worker=int(worker), step=int(step))


def encode_summary(summary):
    payload = json.dumps(summary.__dict__, ensure_ascii=False).encode('utf-8')
    return SUMMARY_MAGIC + struct.pack('<B', CODEC_VERSION) + payload


def decode_message(frame):
    """按 magic 分派解码，返回 Transition 或 EpisodeSummary"""
    frame = bytes(frame)
    magic = frame[:4]
    if magic == TRANSITION_MAGIC:
        return _decode_transition(frame)
    if magic == SUMMARY_MAGIC:
        try:
            return EpisodeSummary(**json.loads(frame[5:].decode('utf-8')))
        except (ValueError, TypeError) as e:
            raise CodecError(f"回合摘要解码失败: {e}") from e
    raise CodecError(f"未知帧类型 {magic!r}")


def encode_message(message):
    if isinstance(message, Transition):
        return encode_transition(message)
    if isinstance(message, EpisodeSummary):
        return encode_summary(message)
    raise CodecError(f"无法编码 {type(message).__name__}")
