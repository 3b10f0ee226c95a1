# -*- coding: utf-8 -*-
"""
经验回放模块
定容环形缓冲区，多生产者追加、学习器均匀采样
"""

import threading
from dataclasses import dataclass

import numpy as np

from app.errors import BufferUnderfull

QUANT_LEVELS = 255


def quantize(obs):
    """[0, 1] 浮点观测 → uint8（量化步长 1/255）"""
    arr = np.asarray(obs)
    if arr.dtype == np.uint8:
        return arr
    return np.clip(np.rint(arr * QUANT_LEVELS), 0, QUANT_LEVELS).astype(np.uint8)


def dequantize(obs, dtype=np.float32):
    return np.asarray(obs, dtype=dtype) / QUANT_LEVELS


@dataclass(frozen=True)
class Transition:
    """一次交互；obs/next_obs 为 uint8 量化的 (H, W, 9) 数组"""
    obs: np.ndarray
    action: int
    reward: float
    next_obs: np.ndarray
    terminal: bool
    worker: int = 0
    step: int = 0


@dataclass(frozen=True)
class EpisodeSummary:
    worker: int
    episode: int
    scenario: str
    density: str
    status: str
    steps: int
    episode_return: float


@dataclass
class Batch:
    obs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_obs: np.ndarray
    terminals: np.ndarray
    indices: np.ndarray


class ReplayBuffer:
    """
    环形经验池

    单条追加与采样在锁内完成，采样不会读到写了一半的条目
    """

    def __init__(self, capacity):
        if capacity < 1:
            raise ValueError("容量必须 ≥ 1")
        self.capacity = int(capacity)
        self._items = [None] * self.capacity
        self._cursor = 0
        self._size = 0
        self._lock = threading.Lock()
        self.total_added = 0
        self.evicted = 0

    def __len__(self):
        return self._size

    def add(self, transition):
        with self._lock:
            if self._size == self.capacity:
                self.evicted += 1
            else:
                self._size += 1
            self._items[self._cursor] = transition
            self._cursor = (self._cursor + 1) % self.capacity
            self.total_added += 1

    def items(self):
        """按插入先后返回当前内容"""
        with self._lock:
            if self._size < self.capacity:
                return list(self._items[:self._size])
            return list(self._items[self._cursor:] + self._items[:self._cursor])

    def sample(self, batch_size, rng):
        """
        有放回均匀采样

        异常:
            BufferUnderfull: 样本数小于 batch_size
        """
        with self._lock:
            if self._size < batch_size:
                raise BufferUnderfull(f"经验池只有 {self._size} 条，不足批大小 {batch_size}")
            indices = rng.integers(0, self._size, size=batch_size)
            picked = [self._items[i] for i in indices]
        return Batch(
            obs=np.stack([t.obs for t in picked]),
            actions=np.array([t.action for t in picked], dtype=np.int64),
            rewards=np.array([t.reward for t in picked], dtype=np.float64),
            next_obs=np.stack([t.next_obs for t in picked]),
            terminals=np.array([t.terminal for t in picked], dtype=bool),
            indices=indices,
        )

    def state(self):
        """可序列化的完整状态（用于精确续训）"""
        with self._lock:
            return {
                "capacity": self.capacity,
                "items": list(self._items[:self._size]) if self._size < self.capacity else list(self._items),
                "cursor": self._cursor,
                "size": self._size,
                "total_added": self.total_added,
                "evicted": self.evicted,
            }

    @classmethod
    def from_state(cls, state):
        buf = cls(state["capacity"])
        items = state["items"]
        buf._items[:len(items)] = items
        buf._cursor = state["cursor"]
        buf._size = state["size"]
        buf.total_added = state["total_added"]
        buf.evicted = state["evicted"]
        return buf
