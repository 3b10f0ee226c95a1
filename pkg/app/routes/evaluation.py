# -*- coding: utf-8 -*-
"""
评测结果路由
"""

from flask import Blueprint, jsonify

from app.models.state import benchmark_snapshot


evaluation_bp = Blueprint('evaluation', __name__)


@evaluation_bp.route('/api/benchmark')
def get_benchmark():
    """获取最近一次评测的单元汇总"""
    return jsonify({"success": True, "data": benchmark_snapshot()})
