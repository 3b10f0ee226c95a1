# -*- coding: utf-8 -*-
"""
app.routes 包初始化
包含所有蓝图的注册
"""

from app.routes.training import training_bp
from app.routes.evaluation import evaluation_bp


def register_blueprints(app):
    """注册所有蓝图到 Flask 应用"""
    app.register_blueprint(training_bp)
    app.register_blueprint(evaluation_bp)


__all__ = [
    'training_bp',
    'evaluation_bp',
    'register_blueprints'
]
