# -*- coding: utf-8 -*-
"""
异常定义模块
所有可预期的错误都从 CarlLeadError 派生，CLI 统一捕获后以非零状态码退出
"""


class CarlLeadError(Exception):
    """项目内所有可预期错误的基类"""


class ConfigError(CarlLeadError):
    """配置文件中的未知段/键或无法转换的取值"""


class ScenarioError(CarlLeadError):
    """场景文件无法使用"""


class ParseError(ScenarioError):
    """场景文件不是合法的结构化文本"""

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        location = ""
        if path is not None:
            location = f"{path}"
        if line is not None:
            location = f"{location}:{line}" if location else f"第 {line} 行"
        super().__init__(f"{location}: {message}" if location else message)


class ValidationError(ScenarioError):
    """场景内容违反不变量（悬空引用、路线不连通等）"""

    def __init__(self, message, field=None):
        self.field = field
        super().__init__(f"[{field}] {message}" if field else message)


class SpawnError(CarlLeadError):
    """在有限次尝试内找不到无碰撞的初始布置"""


class InvalidState(CarlLeadError):
    """对已终止的世界继续调用 step"""


class PathExhausted(CarlLeadError):
    """车辆投影点已经越过路径终点"""


class ShapeError(CarlLeadError):
    """网络输入尺寸与配置不符"""


class BufferUnderfull(CarlLeadError):
    """经验池样本数小于批大小"""


class ChannelClosed(CarlLeadError):
    """消息通道已关闭"""


class CheckpointError(CarlLeadError):
    """检查点缺失、损坏或与当前架构不匹配"""


class CodecError(CarlLeadError):
    """转移帧序列化/反序列化失败"""
