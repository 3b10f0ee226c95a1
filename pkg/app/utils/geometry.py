# -*- coding: utf-8 -*-
"""
平面几何工具模块
包含有向矩形足迹、分离轴碰撞测试、射线与线段求交、折线插值与投影
"""

import math

import numpy as np

# 数值容差
EPS = 1e-9


def wrap_angle(angle):
    """把角度归一化到 [-π, π)"""
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


def rect_corners(x, y, heading, length, width):
    """
    计算有向矩形的四个角点（逆时针）

    返回:
        ndarray (4, 2)
    """
    c, s = math.cos(heading), math.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    rot = np.array([[c, -s], [s, c]])
    return local @ rot.T + np.array([x, y])


def rect_corners_batch(x, y, heading, length, width):
    """rect_corners 的批量版本，x/y/heading 为 (T,) 数组，返回 (T, 4, 2)"""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    heading = np.asarray(heading, dtype=float)
    c, s = np.cos(heading), np.sin(heading)
    hl, hw = 0.5 * length, 0.5 * width
    local = np.array([[hl, hw], [-hl, hw], [-hl, -hw], [hl, -hw]])
    out = np.empty(x.shape + (4, 2))
    out[..., 0] = x[..., None] + c[..., None] * local[:, 0] - s[..., None] * local[:, 1]
    out[..., 1] = y[..., None] + s[..., None] * local[:, 0] + c[..., None] * local[:, 1]
    return out


def rect_edges(corners):
    """矩形的四条边 (起点, 终点)"""
    return corners, np.roll(corners, -1, axis=-2)


def _sat_axes(corners):
    edges = np.roll(corners, -1, axis=-2) - corners
    # 矩形只需要两条相邻边的法向
    axes = np.stack([-edges[..., 0:2, 1], edges[..., 0:2, 0]], axis=-1)
    norms = np.linalg.norm(axes, axis=-1, keepdims=True)
    return axes / np.maximum(norms, EPS)


def rects_overlap_batch(corners_a, corners_b):
    """
    分离轴测试（批量）

    参数:
        corners_a, corners_b: (..., 4, 2)

    返回:
        (...,) 布尔数组；只有在所有轴上投影区间都有正长度交叠时才视为重叠
    """
    axes = np.concatenate([_sat_axes(corners_a), _sat_axes(corners_b)], axis=-2)  # (..., 4, 2)
    proj_a = np.einsum('...kd,...ad->...ak', corners_a, axes)  # (..., 4 axes, 4 corners)
    proj_b = np.einsum('...kd,...ad->...ak', corners_b, axes)
    separated = (proj_a.max(axis=-1) <= proj_b.min(axis=-1)) | (proj_b.max(axis=-1) <= proj_a.min(axis=-1))
    return ~separated.any(axis=-1)


def rects_overlap(corners_a, corners_b):
    """两个有向矩形是否重叠（分离轴定理）"""
    return bool(rects_overlap_batch(np.asarray(corners_a), np.asarray(corners_b)))


def ray_segment_distances(origin, directions, seg_a, seg_b):
    """
    射线与线段求交

    参数:
        origin: (2,) 射线起点
        directions: (B, 2) 单位方向
        seg_a, seg_b: (S, 2) 线段端点

    返回:
        (B, S) 沿射线的交点距离，无交点为 inf
    """
    directions = np.asarray(directions, dtype=float)
    seg_a = np.asarray(seg_a, dtype=float).reshape(-1, 2)
    seg_b = np.asarray(seg_b, dtype=float).reshape(-1, 2)
    if seg_a.shape[0] == 0:
        return np.full((directions.shape[0], 0), np.inf)

    e = seg_b - seg_a                      # (S, 2)
    w = seg_a - np.asarray(origin, dtype=float)  # (S, 2)
    dx = directions[:, None, 0]
    dy = directions[:, None, 1]
    denom = dx * e[None, :, 1] - dy * e[None, :, 0]          # cross(d, e)
    cross_we = w[None, :, 0] * e[None, :, 1] - w[None, :, 1] * e[None, :, 0]
    cross_wd = w[None, :, 0] * dy - w[None, :, 1] * dx
    with np.errstate(divide='ignore', invalid='ignore'):
        t = cross_we / denom
        u = cross_wd / denom
    valid = (np.abs(denom) > EPS) & (t > EPS) & (u >= -EPS) & (u <= 1.0 + EPS)
    return np.where(valid, t, np.inf)


def segment_blocked(p, q, seg_a, seg_b):
    """线段 p→q 在到达 q 之前是否与任意给定线段相交"""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    span = q - p
    dist = float(np.hypot(span[0], span[1]))
    if dist < EPS or len(seg_a) == 0:
        return False
    hits = ray_segment_distances(p, (span / dist)[None, :], seg_a, seg_b)
    return bool((hits[0] < dist - 1e-6).any())


def to_local(points, x, y, heading):
    """世界坐标 → 以 (x, y, heading) 为原点的局部坐标（x 向前，y 向左）"""
    c, s = math.cos(heading), math.sin(heading)
    pts = np.asarray(points, dtype=float) - np.array([x, y])
    return np.stack([pts[..., 0] * c + pts[..., 1] * s,
                     -pts[..., 0] * s + pts[..., 1] * c], axis=-1)


def to_world(points, x, y, heading):
    """局部坐标 → 世界坐标"""
    c, s = math.cos(heading), math.sin(heading)
    pts = np.asarray(points, dtype=float)
    return np.stack([x + pts[..., 0] * c - pts[..., 1] * s,
                     y + pts[..., 0] * s + pts[..., 1] * c], axis=-1)


def point_segment_distances(points, a, b):
    """点集到单条线段的距离"""
    points = np.asarray(points, dtype=float)
    d = np.asarray(b, dtype=float) - np.asarray(a, dtype=float)
    denom = float(d @ d)
    rel = points - a
    if denom < EPS:
        return np.linalg.norm(rel, axis=-1)
    t = np.clip(rel @ d / denom, 0.0, 1.0)
    return np.linalg.norm(rel - t[..., None] * d, axis=-1)


class Polyline:
    """
    折线（车道中心线、车辆路线）

    弧长参数化，支持插值、投影和两条折线求交；
    首尾两段按直线外延，便于前视点超过终点的情况
    """

    def __init__(self, points):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        # 去掉重复的相邻点（车道拼接处）
        keep = np.ones(len(pts), dtype=bool)
        keep[1:] = np.linalg.norm(np.diff(pts, axis=0), axis=1) > 1e-9
        pts = pts[keep]
        if len(pts) < 2:
            raise ValueError("折线至少需要两个不重合的点")
        self.points = pts
        self.seg_vec = np.diff(pts, axis=0)
        self.seg_len = np.linalg.norm(self.seg_vec, axis=1)
        self.cum = np.concatenate([[0.0], np.cumsum(self.seg_len)])
        self.length = float(self.cum[-1])
        self.seg_heading = np.arctan2(self.seg_vec[:, 1], self.seg_vec[:, 0])

    def _segment_index(self, s):
        idx = np.searchsorted(self.cum, s, side='right') - 1
        return np.clip(idx, 0, len(self.seg_len) - 1)

    def interpolate(self, s):
        """
        弧长 s 处的位姿

        返回:
            (x, y, heading)；s 为数组时各分量为数组
        """
        s_arr = np.asarray(s, dtype=float)
        idx = self._segment_index(s_arr)
        t = (s_arr - self.cum[idx]) / self.seg_len[idx]
        xy = self.points[idx] + t[..., None] * self.seg_vec[idx]
        heading = self.seg_heading[idx]
        if np.ndim(s) == 0:
            return float(xy[0]), float(xy[1]), float(heading)
        return xy[..., 0], xy[..., 1], heading

    def point_at(self, s):
        x, y, _ = self.interpolate(s)
        return np.stack([np.asarray(x), np.asarray(y)], axis=-1)

    def project(self, point, hint=None, window=None):
        """
        把点投影到折线上

        参数:
            point: (2,) 世界坐标
            hint, window: 只在弧长 [hint - window, hint + window] 内搜索，避免环线误投影

        返回:
            (s, lateral)：弧长（首尾段允许外延为负值或超过全长）与有符号横向偏移（左正）
        """
        p = np.asarray(point, dtype=float)
        rel = p - self.points[:-1]
        denom = np.maximum(self.seg_len ** 2, EPS)
        t_raw = np.einsum('ij,ij->i', rel, self.seg_vec) / denom
        t = np.clip(t_raw, 0.0, 1.0)
        foot = self.points[:-1] + t[:, None] * self.seg_vec
        dist = np.linalg.norm(p - foot, axis=1)
        if hint is not None and window is not None:
            lo, hi = hint - window, hint + window
            outside = (self.cum[1:] < lo) | (self.cum[:-1] > hi)
            if not outside.all():
                dist = np.where(outside, np.inf, dist)
        i = int(np.argmin(dist))
        t_i = t[i]
        last = len(self.seg_len) - 1
        if i == last and t_raw[i] > 1.0:
            t_i = t_raw[i]
        elif i == 0 and t_raw[i] < 0.0:
            t_i = t_raw[i]
        s = float(self.cum[i] + t_i * self.seg_len[i])
        d = self.seg_vec[i] / max(self.seg_len[i], EPS)
        offset = p - (self.points[i] + t_i * self.seg_vec[i])
        lateral = float(d[0] * offset[1] - d[1] * offset[0])
        return s, lateral

    def sample(self, s_start, s_end, spacing):
        """在 [s_start, s_end] 内等间距取点"""
        if s_end <= s_start:
            return np.empty((0, 2))
        n = max(2, int(math.ceil((s_end - s_start) / spacing)) + 1)
        return self.point_at(np.linspace(s_start, s_end, n))

    def intersections(self, other, tol=1e-6):
        """
        与另一条折线的所有交点

        返回:
            list of (s_self, s_other, (x, y))
        """
        p = self.points[:-1]
        r = self.seg_vec
        q = other.points[:-1]
        e = other.seg_vec
        qp = q[None, :, :] - p[:, None, :]                            # (A, B, 2)
        denom = r[:, None, 0] * e[None, :, 1] - r[:, None, 1] * e[None, :, 0]
        with np.errstate(divide='ignore', invalid='ignore'):
            t = (qp[..., 0] * e[None, :, 1] - qp[..., 1] * e[None, :, 0]) / denom
            u = (qp[..., 0] * r[:, None, 1] - qp[..., 1] * r[:, None, 0]) / denom
        valid = (np.abs(denom) > EPS) & (t >= -tol) & (t <= 1 + tol) & (u >= -tol) & (u <= 1 + tol)
        results = []
        for i, j in zip(*np.nonzero(valid)):
            ti = float(np.clip(t[i, j], 0.0, 1.0))
            uj = float(np.clip(u[i, j], 0.0, 1.0))
            s_self = float(self.cum[i] + ti * self.seg_len[i])
            s_other = float(other.cum[j] + uj * other.seg_len[j])
            point = p[i] + ti * r[i]
            results.append((s_self, s_other, (float(point[0]), float(point[1]))))
        return results
