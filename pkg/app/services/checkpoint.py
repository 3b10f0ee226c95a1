# -*- coding: utf-8 -*-
"""
检查点模块
目录 ckpt_<step>/ 下保存 params.npz（__meta__ 元数据头 + 具名小端数组）与可选的 runtime.pkl
"""

import os
import json
import pickle
import logging
import zipfile
from dataclasses import asdict

import numpy as np
import torch

from app.config import settings_from_dict, Settings
from app.errors import CheckpointError
from app.services.persistence import atomic_path

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT_VERSION = 1
PARAMS_FILE = "params.npz"
RUNTIME_FILE = "runtime.pkl"
META_KEY = "__meta__"


def checkpoint_dir(out_dir, step):
    return os.path.join(out_dir, f"ckpt_{step}")


def _little_endian(tensor):
    arr = np.ascontiguousarray(tensor.detach().cpu().numpy())
    return arr.astype(arr.dtype.newbyteorder('<'), copy=False)


def _collect_arrays(learner):
    arrays = {}
    for prefix, module in (("online", learner.online), ("target", learner.target), ("key", learner.key_encoder)):
        for name, p in module.named_parameters():
            arrays[f"{prefix}/{name}"] = _little_endian(p)
    arrays["similarity/W"] = _little_endian(learner.similarity.W)
    for index, state in learner.optimizer.state_dict()["state"].items():
        for key, value in state.items():
            value = value if isinstance(value, torch.Tensor) else torch.tensor(value)
            arrays[f"adam/{index}/{key}"] = _little_endian(value)
    return arrays


def save_checkpoint(learner, out_dir, runtime=None, extra_meta=None):
    """
    写入检查点

    参数:
        learner: Learner 实例
        out_dir: 运行输出目录（检查点写到其下的 ckpt_<step>/）
        runtime: 可选，精确续训所需的运行时状态（pickle 保存）
    返回:
        str: 检查点目录
    """
    directory = checkpoint_dir(out_dir, learner.step_count)
    meta = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "step": learner.step_count,
        "seed": learner.seed,
        "network": asdict(learner.net_cfg),
        "learner": asdict(learner.cfg),
    }
    if extra_meta:
        meta.update(extra_meta)
    arrays = _collect_arrays(learner)
    arrays[META_KEY] = np.array(json.dumps(meta, sort_keys=True))

    try:
        with atomic_path(os.path.join(directory, PARAMS_FILE)) as tmp_file:
            with open(tmp_file, 'wb') as f:
                np.savez(f, **arrays)
        if runtime is not None:
            with atomic_path(os.path.join(directory, RUNTIME_FILE)) as tmp_file:
                with open(tmp_file, 'wb') as f:
                    pickle.dump(runtime, f, protocol=pickle.HIGHEST_PROTOCOL)
    except OSError as e:
        raise CheckpointError(f"写入检查点失败 {directory}: {e}") from e

    logger.info(f"[检查点] 已保存 {directory}（{len(arrays) - 1} 个数组）")
    return directory


def _params_path(path):
    if os.path.isdir(path):
        path = os.path.join(path, PARAMS_FILE)
    if not os.path.exists(path):
        raise CheckpointError(f"检查点不存在: {path}")
    return path


def read_checkpoint(path):
    """
    读取检查点文件

    返回:
        (meta: dict, arrays: {名称: ndarray})
    """
    params_path = _params_path(path)
    try:
        with np.load(params_path, allow_pickle=False) as data:
            arrays = {name: data[name] for name in data.files}
    except (OSError, ValueError, zipfile.BadZipFile) as e:
        raise CheckpointError(f"检查点损坏 {params_path}: {e}") from e
    if META_KEY not in arrays:
        raise CheckpointError(f"检查点缺少元数据头: {params_path}")
    meta = json.loads(str(arrays.pop(META_KEY)))
    if meta.get("format_version") != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(f"不支持的检查点版本 {meta.get('format_version')}")
    return meta, arrays


def inspect_checkpoint(path):
    """元数据头 + 数组清单 [(名称, 形状, dtype)]"""
    meta, arrays = read_checkpoint(path)
    inventory = [(name, tuple(arr.shape), str(arr.dtype)) for name, arr in sorted(arrays.items())]
    return meta, inventory


def _load_module(module, prefix, arrays):
    state = {}
    for name, p in module.named_parameters():
        key = f"{prefix}/{name}"
        if key not in arrays:
            raise CheckpointError(f"检查点缺少参数 {key}")
        if tuple(arrays[key].shape) != tuple(p.shape):
            raise CheckpointError(f"参数 {key} 形状 {arrays[key].shape} 与网络 {tuple(p.shape)} 不符")
        state[name] = torch.from_numpy(arrays[key].astype(arrays[key].dtype.newbyteorder('='), copy=True))
    module.load_state_dict(state, strict=False)


def settings_for_checkpoint(meta, base=None):
    """用检查点记录的网络/学习器配置覆盖 base"""
    return settings_from_dict({"network": meta["network"], "learner": meta["learner"]}, base=base or Settings())


def load_checkpoint(path, settings=None):
    """
    从检查点恢复 Learner

    参数:
        settings: 当前配置；其网络结构必须与检查点一致，为 None 时采用检查点记录的配置
    异常:
        CheckpointError: 文件缺失、损坏或结构不匹配
    """
    from app.services.learner import Learner

    meta, arrays = read_checkpoint(path)
    recorded = settings_for_checkpoint(meta).network
    if settings is None:
        settings = settings_for_checkpoint(meta)
    elif asdict(settings.network) != asdict(recorded):
        raise CheckpointError("检查点的网络结构与当前配置不一致")

    learner = Learner(settings, seed=meta.get("seed", 0))
    _load_module(learner.online, "online", arrays)
    _load_module(learner.target, "target", arrays)
    _load_module(learner.key_encoder, "key", arrays)
    _load_module(learner.similarity, "similarity", arrays)

    opt_state = learner.optimizer.state_dict()
    restored = {}
    for key, arr in arrays.items():
        if not key.startswith("adam/"):
            continue
        _, index, field = key.split("/", 2)
        restored.setdefault(int(index), {})[field] = torch.from_numpy(arr.astype(arr.dtype.newbyteorder('='), copy=True))
    opt_state["state"] = restored
    learner.optimizer.load_state_dict(opt_state)
    learner.step_count = int(meta["step"])
    logger.info(f"[检查点] 已加载 {path}（学习步 {learner.step_count}）")
    return learner


def load_runtime(path):
    """读取 runtime.pkl；不存在时返回 None"""
    directory = path if os.path.isdir(path) else os.path.dirname(path)
    runtime_path = os.path.join(directory, RUNTIME_FILE)
    if not os.path.exists(runtime_path):
        return None
    try:
        with open(runtime_path, 'rb') as f:
            return pickle.load(f)
    except (OSError, pickle.UnpicklingError, EOFError) as e:
        raise CheckpointError(f"运行时状态损坏 {runtime_path}: {e}") from e


def latest_checkpoint(out_dir):
    """输出目录下学习步最大的检查点目录；没有时返回 None"""
    if not os.path.isdir(out_dir):
        return None
    steps = []
    for name in os.listdir(out_dir):
        if name.startswith("ckpt_") and name[5:].isdigit():
            if os.path.exists(os.path.join(out_dir, name, PARAMS_FILE)):
                steps.append(int(name[5:]))
    return checkpoint_dir(out_dir, max(steps)) if steps else None
