# -*- coding: utf-8 -*-
"""
Flask 应用工厂
训练/评测运行的只读监控接口
"""

import logging
import threading

from flask import Flask

from app.routes import register_blueprints

logger = logging.getLogger(__name__)


def create_app():
    """
    应用工厂函数
    创建并配置 Flask 应用实例
    """
    flask_app = Flask(__name__)
    flask_app.json.ensure_ascii = False

    # 注册所有路由蓝图
    register_blueprints(flask_app)

    return flask_app


def start_monitor(host, port):
    """在守护线程中启动监控服务，返回线程对象"""
    flask_app = create_app()
    t = threading.Thread(
        target=flask_app.run,
        kwargs=dict(host=host, port=port, debug=False, threaded=True, use_reloader=False),
        daemon=True,
        name="monitor",
    )
    t.start()
    logger.info(f"[监控] 只读接口已启动: http://{host}:{port}/api/status")
    return t
