# -*- coding: utf-8 -*-
"""
app.services 包初始化
"""

from app.services.scenario_loader import load_scenario, load_scenarios, resolve_scenario_set
from app.services.world import reset, step, check_collision, compute_reward, episode_status
from app.services.env import DrivingEnv
from app.services.learner import Learner, td_target, td_loss, info_nce_loss, momentum_update
from app.services.pipeline import run_training
from app.services.benchmark import BenchmarkConfig, run_benchmark, export_results
from app.services.persistence import write_json, write_manifest

__all__ = [
    'load_scenario',
    'load_scenarios',
    'resolve_scenario_set',
    'reset',
    'step',
    'check_collision',
    'compute_reward',
    'episode_status',
    'DrivingEnv',
    'Learner',
    'td_target',
    'td_loss',
    'info_nce_loss',
    'momentum_update',
    'run_training',
    'BenchmarkConfig',
    'run_benchmark',
    'export_results',
    'write_json',
    'write_manifest',
]
