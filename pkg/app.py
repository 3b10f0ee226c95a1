# -*- coding: utf-8 -*-
"""
路口驾驶强化学习 - 命令行入口
用法: python app.py --out runs/demo train --steps 20000
"""

from app.cli import main


if __name__ == '__main__':
    main()
