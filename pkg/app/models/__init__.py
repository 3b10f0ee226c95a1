# -*- coding: utf-8 -*-
"""
app.models 包初始化
"""

from app.models.vehicle import Status, BehaviorParams, VehicleState, RewardSignal, WorldState
from app.models.scenario import Lane, SpawnZone, GoalRegion, DensityPreset, ConflictPoint, Scenario
from app.models.observation import LidarScan, GridSpec, GridFrame, Observation

__all__ = [
    'Status',
    'BehaviorParams',
    'VehicleState',
    'RewardSignal',
    'WorldState',
    'Lane',
    'SpawnZone',
    'GoalRegion',
    'DensityPreset',
    'ConflictPoint',
    'Scenario',
    'LidarScan',
    'GridSpec',
    'GridFrame',
    'Observation',
]
