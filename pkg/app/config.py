# -*- coding: utf-8 -*-
"""
配置常量模块
包含路径配置、仿真/感知/控制/网络/训练/基线/评测的默认参数，
以及从 INI 配置文件覆盖默认值的加载逻辑
"""

import os
import configparser
from dataclasses import dataclass, field, fields, replace, asdict

from app.errors import ConfigError

# ==================== 路径配置 ====================
# 获取项目根目录（app包的上级目录）
BASE_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
CONFIG_DIR = os.path.join(BASE_DIR, 'config')
SCENARIO_DIR = os.path.join(BASE_DIR, 'scenarios')
DEFAULT_CONFIG_FILE = os.path.join(CONFIG_DIR, 'carl_lead.ini')
DEFAULT_OUTPUT_DIR = os.path.join(BASE_DIR, 'runs')

# 场景集合
TRAINING_SCENARIOS = ("t_merge", "int_cross", "int_left", "t_left")
UNSEEN_SCENARIOS = ("roundabout", "five_way")
SCENARIO_SETS = {
    "training": TRAINING_SCENARIOS,
    "unseen": UNSEEN_SCENARIOS,
    "all": TRAINING_SCENARIOS + UNSEEN_SCENARIOS,
}
SCENARIO_FORMAT_VERSION = 1

# ==================== 仿真配置 ====================
SIM_DT = 0.1                 # 仿真步长（秒），控制频率 10 Hz
TIMEOUT_STEPS = 300          # 单回合步数上限（30 秒）
EGO_LENGTH = 4.5
EGO_WIDTH = 1.9
EGO_WHEELBASE = 2.7
THROTTLE_ACCEL = 3.0         # 油门 1.0 对应的加速度 (m/s²)
BRAKE_DECEL = 6.0            # 刹车 1.0 对应的减速度 (m/s²)
SPAWN_ATTEMPTS = 50          # 每辆背景车的最大布置尝试次数
SPAWN_CLEARANCE = 1.5        # 初始布置时的额外间距（米）
CONFLICT_RADIUS = 4.0        # 冲突点影响半径（米）
YIELD_DISTANCE = 25.0        # 背景车开始考虑让行的距离（米）
YIELD_ARRIVAL_WINDOW = 3.0   # 到达冲突点的时间窗（秒）
LEADER_LOOKAHEAD = 50.0      # 跟车搜索距离（米）

# 车型足迹：(长, 宽, 抽样权重)，依次为微型车、轿车、卡车
VEHICLE_TYPES = (
    (2.5, 1.6, 0.2),
    (4.5, 1.9, 0.6),
    (8.0, 2.5, 0.2),
)

# ==================== 感知配置 ====================
LIDAR_BEAMS = 720            # 360° 内 0.5° 分辨率
LIDAR_MAX_RANGE = 50.0
GRID_ROWS = 200
GRID_COLS = 280
GRID_RESOLUTION = 0.25       # 米/像素
GRID_FRONT = 35.0            # 前方 35 米
GRID_LEFT = 35.0             # 左侧 35 米
STACK_HORIZON = 1.0          # 帧堆叠时间跨度（秒）
STACK_FRAMES = 3

# ==================== 控制配置 ====================
ACTION_SPEEDS_KMH = (0.0, 10.0, 20.0, 30.0)
PID_GAINS = (0.5, 0.05, 0.0)
PID_INTEGRAL_CLAMP = 2.0
STEER_LIMIT = 0.6
LOOKAHEAD_MIN = 3.0
LOOKAHEAD_GAIN = 0.8

# ==================== 网络配置 ====================
ENCODER_CHANNELS = (16, 32, 64, 128)
LATENT_DIM = 512
HEAD_HIDDEN = 256
NOISY_SIGMA0 = 0.5
CROP_ROWS = 184
CROP_COLS = 264

# ==================== 训练配置 ====================
GAMMA = 0.99
KEY_MOMENTUM = 0.999
LEARNING_RATE = 1e-4
ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8
BATCH_SIZE = 128
BUFFER_CAPACITY = 400000
TARGET_SYNC_PERIOD = 2000
CONTRASTIVE_WEIGHT = 1.0

# ==================== 流水线配置 ====================
NUM_WORKERS = 6
TOTAL_ENV_STEPS = 500000
WARMUP_STEPS = 5000
ENV_STEPS_PER_UPDATE = 4     # K：每 K 个环境步执行一次学习
REFRESH_PERIOD = 100         # 参数快照广播间隔（学习步）
CHECKPOINT_PERIOD = 10000    # 检查点间隔（学习步）
SUCCESS_WINDOW = 100         # 成功率滑动窗口（回合）

# ==================== 基线配置 ====================
TTC_YIELD = 3.0
TTC_GO = 4.0
TTC_HYSTERESIS = 5
APPROACH_DISTANCE = 20.0
TTC_HORIZON = 10.0
TTC_DT = 0.01

# ==================== 评测配置 ====================
BENCHMARK_EPISODES = 200
BENCHMARK_SEED_BASE = 2021
BENCHMARK_WORKERS = 4

# ==================== 监控配置 ====================
MONITOR_HOST = '127.0.0.1'
MAX_METRICS_HISTORY = 5000   # 监控接口保留的最近指标条数


@dataclass(frozen=True)
class SimulationConfig:
    dt: float = SIM_DT
    timeout_steps: int = TIMEOUT_STEPS
    ego_length: float = EGO_LENGTH
    ego_width: float = EGO_WIDTH
    ego_wheelbase: float = EGO_WHEELBASE
    throttle_accel: float = THROTTLE_ACCEL
    brake_decel: float = BRAKE_DECEL
    spawn_attempts: int = SPAWN_ATTEMPTS
    spawn_clearance: float = SPAWN_CLEARANCE
    conflict_radius: float = CONFLICT_RADIUS
    yield_distance: float = YIELD_DISTANCE
    yield_arrival_window: float = YIELD_ARRIVAL_WINDOW
    leader_lookahead: float = LEADER_LOOKAHEAD


@dataclass(frozen=True)
class SensingConfig:
    n_beams: int = LIDAR_BEAMS
    max_range: float = LIDAR_MAX_RANGE
    rows: int = GRID_ROWS
    cols: int = GRID_COLS
    resolution: float = GRID_RESOLUTION
    front: float = GRID_FRONT
    left: float = GRID_LEFT
    stack_horizon: float = STACK_HORIZON
    stack_frames: int = STACK_FRAMES


@dataclass(frozen=True)
class ControlConfig:
    kp: float = PID_GAINS[0]
    ki: float = PID_GAINS[1]
    kd: float = PID_GAINS[2]
    integral_clamp: float = PID_INTEGRAL_CLAMP
    steer_limit: float = STEER_LIMIT
    lookahead_min: float = LOOKAHEAD_MIN
    lookahead_gain: float = LOOKAHEAD_GAIN


@dataclass(frozen=True)
class NetworkConfig:
    channels: tuple = ENCODER_CHANNELS
    blocks_per_stage: int = 1
    resnet18: bool = False
    latent_dim: int = LATENT_DIM
    head_hidden: int = HEAD_HIDDEN
    sigma0: float = NOISY_SIGMA0
    crop_rows: int = CROP_ROWS
    crop_cols: int = CROP_COLS
    in_channels: int = 9
    n_actions: int = len(ACTION_SPEEDS_KMH)
    dtype: str = "float32"


@dataclass(frozen=True)
class LearnerConfig:
    gamma: float = GAMMA
    momentum: float = KEY_MOMENTUM
    lr: float = LEARNING_RATE
    betas: tuple = ADAM_BETAS
    adam_eps: float = ADAM_EPS
    batch_size: int = BATCH_SIZE
    buffer_capacity: int = BUFFER_CAPACITY
    target_sync_period: int = TARGET_SYNC_PERIOD
    contrastive_weight: float = CONTRASTIVE_WEIGHT
    rl_weight: float = 1.0


@dataclass(frozen=True)
class PipelineConfig:
    workers: int = NUM_WORKERS
    scenarios: tuple = TRAINING_SCENARIOS
    densities: tuple = ("regular", "dense")
    refresh_period: int = REFRESH_PERIOD
    total_env_steps: int = TOTAL_ENV_STEPS
    warmup_steps: int = WARMUP_STEPS
    env_steps_per_update: int = ENV_STEPS_PER_UPDATE
    checkpoint_period: int = CHECKPOINT_PERIOD
    eval_period: int = 0
    eval_episodes: int = 20
    success_window: int = SUCCESS_WINDOW
    transport: str = "inprocess"
    deterministic: bool = False
    save_buffer: bool = False
    log_every: int = 1


@dataclass(frozen=True)
class BaselineConfig:
    t_yield: float = TTC_YIELD
    t_go: float = TTC_GO
    hysteresis: int = TTC_HYSTERESIS
    approach_distance: float = APPROACH_DISTANCE
    probe_speed_kmh: float = 20.0
    horizon: float = TTC_HORIZON
    ttc_dt: float = TTC_DT
    junction_margin: float = CONFLICT_RADIUS


@dataclass(frozen=True)
class BenchmarkSettings:
    episodes: int = BENCHMARK_EPISODES
    seed_base: int = BENCHMARK_SEED_BASE
    densities: tuple = ("regular", "dense")
    workers: int = BENCHMARK_WORKERS


@dataclass(frozen=True)
class MonitorConfig:
    host: str = MONITOR_HOST
    max_metrics_history: int = MAX_METRICS_HISTORY


@dataclass(frozen=True)
class Settings:
    simulation: SimulationConfig = field(default_factory=SimulationConfig)
    sensing: SensingConfig = field(default_factory=SensingConfig)
    control: ControlConfig = field(default_factory=ControlConfig)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    learner: LearnerConfig = field(default_factory=LearnerConfig)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    baseline: BaselineConfig = field(default_factory=BaselineConfig)
    benchmark: BenchmarkSettings = field(default_factory=BenchmarkSettings)
    monitor: MonitorConfig = field(default_factory=MonitorConfig)

    def to_dict(self):
        return asdict(self)


def _coerce(raw, default, where):
    """按默认值的类型把 INI 字符串转换为对应的 Python 值"""
    text = raw.strip()
    try:
        if isinstance(default, bool):
            lowered = text.lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"不是布尔值: {raw!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            items = [item.strip() for item in text.split(',') if item.strip()]
            element_type = type(default[0]) if default else str
            return tuple(element_type(item) for item in items)
        return text
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from e


def _section_from_dict(section, values, where):
    """用 {键: 字符串} 覆盖某个配置段"""
    known = {f.name: f for f in fields(section)}
    updates = {}
    for key, raw in values.items():
        if key not in known:
            raise ConfigError(f"{where}: 未知配置项 '{key}'")
        updates[key] = _coerce(raw, getattr(section, key), f"{where}.{key}")
    return replace(section, **updates)


def settings_from_dict(overrides, base=None):
    """
    用嵌套字典覆盖配置

    参数:
        overrides: {段名: {键: 值}}，值可以是字符串或已转换的 Python 值
        base: 作为起点的 Settings，默认使用内置默认值
    """
    settings = base or Settings()
    section_names = {f.name for f in fields(Settings)}
    updates = {}
    for name, values in overrides.items():
        if name not in section_names:
            raise ConfigError(f"未知配置段 [{name}]")
        section = getattr(settings, name)
        as_text = {k: (v if isinstance(v, str) else _to_text(v)) for k, v in values.items()}
        updates[name] = _section_from_dict(section, as_text, name)
    return replace(settings, **updates)


def _to_text(value):
    if isinstance(value, (tuple, list)):
        return ','.join(str(v) for v in value)
    return str(value)


def load_settings(path=None):
    """
    加载全局配置

    参数:
        path: INI 文件路径；为 None 时只返回内置默认值

    返回:
        Settings: 覆盖后的完整配置
    """
    if path is None:
        return Settings()
    if not os.path.exists(path):
        raise ConfigError(f"配置文件不存在: {path}")

    parser = configparser.ConfigParser(inline_comment_prefixes=(';', '#'))
    try:
        with open(path, 'r', encoding='utf-8') as f:
            parser.read_file(f)
    except configparser.Error as e:
        raise ConfigError(f"配置文件解析失败 {path}: {e}") from e

    overrides = {name: dict(parser.items(name)) for name in parser.sections()}
    return settings_from_dict(overrides)
