# -*- coding: utf-8 -*-
"""
全局状态管理模块
训练进度、最近指标与最新评测摘要，由训练/评测线程写入、监控接口只读
"""

import threading
import time
from collections import deque

from app.config import MAX_METRICS_HISTORY
from app.errors import ConfigError


# ==================== 线程锁 ====================
# 使用 RLock 以支持在持有锁的情况下调用其他需要锁的函数
lock = threading.RLock()

# ==================== 训练进度 ====================
training_status = {
    "phase": "idle",            # idle / warmup / training / finished / aborted
    "env_steps": 0,
    "learner_steps": 0,
    "buffer_size": 0,
    "episodes": 0,
    "success_rate": None,
    "last_checkpoint": None,
    "out_dir": None,
    "updated_at": None,
}

# ==================== 训练指标 ====================
# 最近的指标记录 (最多保存 MAX_METRICS_HISTORY 条)
metrics_history = deque(maxlen=MAX_METRICS_HISTORY)

# ==================== 评测摘要 ====================
benchmark_summary = {
    "policy": None,
    "cells": [],
    "updated_at": None,
}


def update_training_status(**fields):
    with lock:
        training_status.update(fields)
        training_status["updated_at"] = time.time()


def record_metrics(record):
    with lock:
        metrics_history.append(dict(record))


def recent_metrics(limit=None):
    with lock:
        items = list(metrics_history)
    return items if limit is None else items[-limit:] if limit > 0 else []


def set_benchmark_summary(policy, cells):
    with lock:
        benchmark_summary["policy"] = policy
        benchmark_summary["cells"] = [dict(c) for c in cells]
        benchmark_summary["updated_at"] = time.time()


def status_snapshot():
    with lock:
        return dict(training_status)


def benchmark_snapshot():
    with lock:
        return {**benchmark_summary, "cells": list(benchmark_summary["cells"])}


def reset_state(max_history=None):
    """
    恢复初始状态（新的一次运行开始时调用）

    参数:
        max_history: 指标历史的最大条数，为 None 时保持当前上限
    """
    global metrics_history
    with lock:
        if max_history is not None:
            if max_history < 1:
                raise ConfigError(f"指标历史上限必须 ≥ 1: {max_history}")
            metrics_history = deque(maxlen=max_history)
        training_status.update({
            "phase": "idle", "env_steps": 0, "learner_steps": 0, "buffer_size": 0,
            "episodes": 0, "success_rate": None, "last_checkpoint": None,
            "out_dir": None, "updated_at": None,
        })
        metrics_history.clear()
        benchmark_summary.update({"policy": None, "cells": [], "updated_at": None})
