# -*- coding: utf-8 -*-
"""
数据持久化模块
所有产物（清单、指标、评测结果、检查点）都通过 临时文件 + fsync + os.replace 原子写入
"""

import os
import json
import logging
import threading
from contextlib import contextmanager
from datetime import datetime

logger = logging.getLogger(__name__)

MANIFEST_FILE = "manifest.json"

_append_lock = threading.Lock()


@contextmanager
def atomic_path(path):
    """
    产出一个临时路径，代码块正常结束后原子替换到 path

    代码块抛出异常时删除临时文件、保留原文件
    """
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    tmp_file = path + ".tmp"
    try:
        yield tmp_file
        with open(tmp_file, 'rb') as f:
            os.fsync(f.fileno())  # 确保数据写入物理磁盘
        os.replace(tmp_file, path)
    except BaseException:
        if os.path.exists(tmp_file):
            os.remove(tmp_file)
        raise


def write_text(path, text):
    with atomic_path(path) as tmp_file:
        with open(tmp_file, 'w', encoding='utf-8', newline='') as f:
            f.write(text)
            f.flush()


def write_json(path, data):
    """将数据保存到 JSON 文件 (原子写入模式)"""
    with atomic_path(path) as tmp_file:
        with open(tmp_file, 'w', encoding='utf-8') as f:
            json.dump(data, f, ensure_ascii=False, indent=2, sort_keys=True)
            f.flush()


def read_json(path):
    with open(path, 'r', encoding='utf-8') as f:
        return json.load(f)


def append_jsonl(path, record):
    """追加一行 JSON 记录（逐行刷新）"""
    with _append_lock:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'a', encoding='utf-8') as f:
            f.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")
            f.flush()


def read_jsonl(path):
    records = []
    with open(path, 'r', encoding='utf-8') as f:
        for line in f:
            line = line.strip()
            if line:
                records.append(json.loads(line))
    return records


def write_manifest(out_dir, command, settings=None, seed=None, files=(), extra=None):
    """
    在输出目录写入 manifest.json

    参数:
        command: 子命令名
        settings: Settings 实例（写入完整配置）
        files: 本次运行产生的文件（写为相对 out_dir 的路径）
    """
    manifest = {
        "command": command,
        "seed": seed,
        "created_at": datetime.now().isoformat(timespec='seconds'),
        "settings": settings.to_dict() if settings is not None else None,
        "files": sorted(os.path.relpath(p, out_dir) for p in files),
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(out_dir, MANIFEST_FILE)
    write_json(path, manifest)
    logger.info(f"[清单] 已写入 {path}（{len(manifest['files'])} 个文件）")
    return path
