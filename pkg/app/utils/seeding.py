# -*- coding: utf-8 -*-
"""
种子派生工具
训练与评测种子在不相交的域中派生：最低位 0 为训练域，1 为评测域
"""

import zlib

import numpy as np

TRAIN_DOMAIN = 0
EVAL_DOMAIN = 1

_MASK_63 = (1 << 63) - 1


def name_key(name):
    """字符串的稳定整数键（不受 PYTHONHASHSEED 影响）"""
    return zlib.crc32(str(name).encode('utf-8'))


def derive_seed(base, domain, *keys):
    """
    由 (base, keys) 派生 63 位种子，最低位写入域标记

    参数:
        base: 基础种子
        domain: TRAIN_DOMAIN 或 EVAL_DOMAIN
        keys: 非负整数或字符串
    """
    if domain not in (TRAIN_DOMAIN, EVAL_DOMAIN):
        raise ValueError(f"未知种子域: {domain}")
    entropy = [int(base) & 0xFFFFFFFFFFFFFFFF]
    entropy += [name_key(k) if isinstance(k, str) else int(k) for k in keys]
    words = np.random.SeedSequence(entropy).generate_state(2, dtype=np.uint32)
    raw = (int(words[0]) << 32 | int(words[1])) & _MASK_63
    return (raw & ~1) | domain


def seed_domain(seed):
    return int(seed) & 1
