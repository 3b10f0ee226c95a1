# -*- coding: utf-8 -*-
"""
训练进度相关路由
包含运行状态与最近指标（只读）
"""

from flask import Blueprint, jsonify, request

from app.models.state import status_snapshot, recent_metrics


training_bp = Blueprint('training', __name__)


@training_bp.route('/api/status')
def get_status():
    """获取当前训练运行状态"""
    return jsonify({"success": True, "data": status_snapshot()})


@training_bp.route('/api/metrics')
def get_metrics():
    """获取最近的训练指标，?limit=N 只返回最后 N 条"""
    limit = request.args.get('limit', default=None, type=int)
    if limit is not None and limit < 0:
        return jsonify({"success": False, "message": "limit 不能为负数"}), 400
    return jsonify({"success": True, "data": recent_metrics(limit)})
