# -*- coding: utf-8 -*-
"""
场景加载模块
负责读取 JSON 场景文件、校验不变量，并计算车道冲突点
"""

import os
import json
import logging

import numpy as np

from app.config import SCENARIO_DIR, SCENARIO_FORMAT_VERSION, SCENARIO_SETS
from app.errors import ParseError, ValidationError, ScenarioError
from app.models.scenario import (
    Lane, SpawnZone, GoalRegion, DensityPreset, ConflictPoint, Scenario
)
from app.utils.geometry import Polyline

logger = logging.getLogger(__name__)

# 车道首尾判定容差（米）
ENDPOINT_TOLERANCE = 0.5
# 相邻车道首尾连接容差（米）
JOIN_TOLERANCE = 0.5
# 同一对车道上冲突点的合并距离（米）
CONFLICT_DEDUP_DISTANCE = 1.0


def resolve_scenario_path(name_or_path):
    """场景名（如 t_left）映射到内置场景文件，已存在的路径原样返回"""
    if os.path.exists(name_or_path):
        return name_or_path
    candidate = os.path.join(SCENARIO_DIR, f"{name_or_path}.json")
    if os.path.exists(candidate):
        return candidate
    raise ScenarioError(f"找不到场景: {name_or_path}")


def resolve_scenario_set(name):
    """场景集合名（training/unseen/all）或逗号分隔的场景名列表"""
    if name in SCENARIO_SETS:
        return tuple(SCENARIO_SETS[name])
    names = tuple(part.strip() for part in name.split(',') if part.strip())
    if not names:
        raise ScenarioError(f"空的场景集合: {name!r}")
    return names


def load_scenario(path):
    """
    加载并校验场景文件

    参数:
        path: 场景文件路径，或内置场景名

    返回:
        Scenario

    异常:
        ParseError: 文件不是合法 JSON
        ValidationError: 内容违反场景不变量
    """
    path = resolve_scenario_path(path)
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ParseError(f"无法读取文件: {e}", path=path) from e
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno, path=path) from e

    scenario = scenario_from_dict(raw)
    logger.debug("[场景] 已加载 %s: %d 条车道, %d 个冲突点",
                 scenario.id, len(scenario.lanes), len(scenario.conflicts))
    return scenario


def _require(mapping, key, where):
    if not isinstance(mapping, dict) or key not in mapping:
        raise ValidationError("缺少必填字段", field=f"{where}{key}")
    return mapping[key]


def _number(value, field):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"应为数值，实际为 {value!r}", field=field)
    if not np.isfinite(value):
        raise ValidationError("数值必须有限", field=field)
    return float(value)


def _parse_lane(raw, index):
    where = f"lanes[{index}]."
    lane_id = _require(raw, "id", where)
    if not isinstance(lane_id, str) or not lane_id:
        raise ValidationError("车道 id 必须是非空字符串", field=f"{where}id")
    points = _require(raw, "centerline", where)
    if not isinstance(points, list) or len(points) < 2:
        raise ValidationError("中心线至少需要两个点", field=f"{where}centerline")
    coords = []
    for j, p in enumerate(points):
        if not isinstance(p, list) or len(p) != 2:
            raise ValidationError("点必须是 [x, y]", field=f"{where}centerline[{j}]")
        coords.append((_number(p[0], f"{where}centerline[{j}]"),
                       _number(p[1], f"{where}centerline[{j}]")))
    try:
        centerline = Polyline(coords)
    except ValueError as e:
        raise ValidationError(str(e), field=f"{where}centerline") from e
    width = _number(_require(raw, "width", where), f"{where}width")
    if width <= 0:
        raise ValidationError("车道宽度必须为正", field=f"{where}width")
    successors = raw.get("successors", [])
    if not isinstance(successors, list) or not all(isinstance(s, str) for s in successors):
        raise ValidationError("successors 必须是车道 id 列表", field=f"{where}successors")
    return Lane(id=lane_id, centerline=centerline, width=width, successors=tuple(successors))


def scenario_from_dict(raw):
    """由已解析的字典构造 Scenario 并校验"""
    if not isinstance(raw, dict):
        raise ParseError("顶层必须是对象")

    version = _require(raw, "format_version", "")
    if version != SCENARIO_FORMAT_VERSION:
        raise ValidationError(f"不支持的格式版本 {version!r}", field="format_version")

    scenario_id = _require(raw, "id", "")
    if not isinstance(scenario_id, str) or not scenario_id:
        raise ValidationError("场景 id 必须是非空字符串", field="id")

    raw_lanes = _require(raw, "lanes", "")
    if not isinstance(raw_lanes, list) or not raw_lanes:
        raise ValidationError("至少需要一条车道", field="lanes")
    lanes = {}
    for i, item in enumerate(raw_lanes):
        lane = _parse_lane(item, i)
        if lane.id in lanes:
            raise ValidationError(f"车道 id 重复: {lane.id}", field=f"lanes[{i}].id")
        lanes[lane.id] = lane

    # 后继引用必须可解析
    for i, lane in enumerate(lanes.values()):
        for succ in lane.successors:
            if succ not in lanes:
                raise ValidationError(f"后继车道不存在: {succ}", field=f"lanes[{i}].successors")
            gap = np.linalg.norm(lane.centerline.points[-1] - lanes[succ].centerline.points[0])
            if gap > JOIN_TOLERANCE:
                raise ValidationError(f"{lane.id} 的终点与后继 {succ} 的起点相距 {gap:.2f} 米",
                                      field=f"lanes[{i}].successors")

    spawn_zones = []
    for i, item in enumerate(raw.get("spawn_zones", [])):
        where = f"spawn_zones[{i}]."
        lane_id = _require(item, "lane", where)
        if lane_id not in lanes:
            raise ValidationError(f"出生区引用了不存在的车道 {lane_id}", field=f"{where}lane")
        interval = _require(item, "interval", where)
        if not isinstance(interval, list) or len(interval) != 2:
            raise ValidationError("区间必须是 [起点, 终点]", field=f"{where}interval")
        start = _number(interval[0], f"{where}interval")
        end = _number(interval[1], f"{where}interval")
        if not 0.0 <= start <= end <= lanes[lane_id].length + 1e-6:
            raise ValidationError("区间超出车道范围", field=f"{where}interval")
        spawn_zones.append(SpawnZone(lane_id=lane_id, start=start, end=end))

    route = _require(raw, "ego_route", "")
    if not isinstance(route, list) or not route:
        raise ValidationError("自车路线不能为空", field="ego_route")
    for j, lane_id in enumerate(route):
        if lane_id not in lanes:
            raise ValidationError(f"路线引用了不存在的车道 {lane_id}", field=f"ego_route[{j}]")
        if j > 0 and lane_id not in lanes[route[j - 1]].successors:
            raise ValidationError(f"{route[j - 1]} → {lane_id} 不连通", field=f"ego_route[{j}]")

    raw_goal = _require(raw, "goal_region", "")
    goal = GoalRegion(
        lane_id=_require(raw_goal, "lane", "goal_region."),
        position=_number(_require(raw_goal, "position", "goal_region."), "goal_region.position"),
        radius=_number(_require(raw_goal, "radius", "goal_region."), "goal_region.radius"),
    )
    if goal.lane_id != route[-1]:
        raise ValidationError("目标区域必须位于路线的最后一条车道上", field="goal_region.lane")
    if not 0.0 <= goal.position <= lanes[goal.lane_id].length:
        raise ValidationError("目标位置超出车道范围", field="goal_region.position")
    if goal.radius <= 0:
        raise ValidationError("目标半径必须为正", field="goal_region.radius")

    presets = {}
    raw_presets = _require(raw, "density_presets", "")
    if not isinstance(raw_presets, dict):
        raise ValidationError("密度预设必须是对象", field="density_presets")
    for name, item in raw_presets.items():
        where = f"density_presets.{name}."
        count = _require(item, "count", where)
        if (not isinstance(count, list) or len(count) != 2
                or not all(isinstance(c, int) and not isinstance(c, bool) for c in count)
                or not 0 <= count[0] <= count[1]):
            raise ValidationError("count 必须是 [最小, 最大] 非负整数", field=f"{where}count")
        rate = _number(item.get("spawn_rate", 0.0), f"{where}spawn_rate")
        if rate < 0:
            raise ValidationError("spawn_rate 不能为负", field=f"{where}spawn_rate")
        presets[name] = DensityPreset(name=name, min_count=count[0], max_count=count[1], spawn_rate=rate)

    scenario = Scenario(
        id=scenario_id,
        lanes=lanes,
        spawn_zones=tuple(spawn_zones),
        ego_route=tuple(route),
        goal_region=goal,
        density_presets=presets,
        format_version=version,
        description=raw.get("description", ""),
    )
    scenario.conflicts = find_conflicts(lanes)
    return scenario


def find_conflicts(lanes):
    """
    计算车道间冲突点

    交叉与汇入（两条车道终点重合）保留；分流（起点重合）与首尾相接不算冲突
    """
    ids = list(lanes)
    conflicts = []
    for i, a_id in enumerate(ids):
        a = lanes[a_id]
        for b_id in ids[i + 1:]:
            b = lanes[b_id]
            kept = []
            for s_a, s_b, point in a.centerline.intersections(b.centerline):
                a_start, a_end = s_a < ENDPOINT_TOLERANCE, s_a > a.length - ENDPOINT_TOLERANCE
                b_start, b_end = s_b < ENDPOINT_TOLERANCE, s_b > b.length - ENDPOINT_TOLERANCE
                if a_start and b_start:
                    continue
                if (a_start and b_end) or (a_end and b_start):
                    continue
                if any(np.hypot(point[0] - k[2][0], point[1] - k[2][1]) < CONFLICT_DEDUP_DISTANCE
                       for k in kept):
                    continue
                kept.append((s_a, s_b, point))
            for s_a, s_b, point in kept:
                conflicts.append(ConflictPoint(index=len(conflicts), lane_a=a_id, s_a=s_a,
                                               lane_b=b_id, s_b=s_b, point=point))
    return tuple(conflicts)


def load_scenarios(names):
    """按名称批量加载场景，返回 {名称: Scenario}"""
    return {name: load_scenario(name) for name in names}
