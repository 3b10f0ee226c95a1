# -*- coding: utf-8 -*-
"""
消息通道模块
工作进程 → 学习器 的转移流（多生产者）与 学习器 → 工作进程 的参数快照广播（单生产者）

两种传输共用 codec 的帧格式：
    inprocess  进程内有界队列
    socket     本机 multiprocessing.connection 套接字
"""

import queue
import logging
import secrets
import threading
from multiprocessing.connection import Listener, Client

from app.errors import ChannelClosed, ConfigError
from app.services.codec import encode_message, decode_message

logger = logging.getLogger(__name__)

QUEUE_MAXSIZE = 4096
POLL_INTERVAL = 0.1


class InProcessChannel:
    """进程内通道：发送端与接收端是同一个对象"""

    def __init__(self, maxsize=QUEUE_MAXSIZE):
        self._queue = queue.Queue(maxsize)
        self._closed = threading.Event()
        self.sent = 0

    @property
    def closed(self):
        return self._closed.is_set()

    def send(self, message):
        frame = encode_message(message)
        while True:
            if self.closed:
                raise ChannelClosed("通道已关闭")
            try:
                self._queue.put(frame, timeout=POLL_INTERVAL)
                self.sent += 1
                return
            except queue.Full:
                continue

    def recv(self, timeout=None):
        """取下一条消息；超时返回 None"""
        try:
            frame = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        return decode_message(frame)

    def pending(self):
        return self._queue.qsize()

    def close(self):
        self._closed.set()


class SocketSender:
    """工作进程侧的套接字发送端"""

    def __init__(self, address, authkey):
        self._conn = Client(address, authkey=authkey)
        self._lock = threading.Lock()
        self._closed = False
        self.sent = 0

    @property
    def closed(self):
        return self._closed

    def send(self, message):
        frame = encode_message(message)
        with self._lock:
            if self._closed:
                raise ChannelClosed("通道已关闭")
            try:
                self._conn.send_bytes(frame)
                self.sent += 1
            except (OSError, EOFError) as e:
                self._closed = True
                raise ChannelClosed(f"套接字已断开: {e}") from e

    def close(self):
        with self._lock:
            if not self._closed:
                self._closed = True
                self._conn.close()


class SocketChannel:
    """
    学习器侧的套接字接收端

    每个连接一个读线程，解码后的帧汇入同一个队列；connect() 为工作进程创建发送端
    """

    def __init__(self, host='127.0.0.1', maxsize=QUEUE_MAXSIZE):
        self._authkey = secrets.token_bytes(16)
        self._listener = Listener((host, 0), authkey=self._authkey)
        self.address = self._listener.address
        self._queue = queue.Queue(maxsize)
        self._closed = threading.Event()
        self._readers = []
        self._connections = []
        self._accept_lock = threading.Lock()

    @property
    def closed(self):
        return self._closed.is_set()

    def connect(self):
        """创建一个发送端并在接收侧为其启动读线程"""
        if self.closed:
            raise ChannelClosed("通道已关闭")
        with self._accept_lock:
            accepted = {}

            def _accept():
                accepted["conn"] = self._listener.accept()

            acceptor = threading.Thread(target=_accept, daemon=True)
            acceptor.start()
            sender = SocketSender(self.address, self._authkey)
            acceptor.join()
            conn = accepted["conn"]
            self._connections.append(conn)
            reader = threading.Thread(target=self._read_loop, args=(conn,), daemon=True,
                                      name=f"socket-reader-{len(self._readers)}")
            reader.start()
            self._readers.append(reader)
        return sender

    def _read_loop(self, conn):
        while not self.closed:
            try:
                if not conn.poll(POLL_INTERVAL):
                    continue
                frame = conn.recv_bytes()
            except (OSError, EOFError):
                return
            while not self.closed:
                try:
                    self._queue.put(frame, timeout=POLL_INTERVAL)
                    break
                except queue.Full:
                    continue

    def recv(self, timeout=None):
        try:
            frame = self._queue.get(timeout=timeout)
        except queue.Empty:
            return None
        return decode_message(frame)

    def pending(self):
        return self._queue.qsize()

    def close(self):
        self._closed.set()
        for conn in self._connections:
            conn.close()
        self._listener.close()


def open_transport(kind):
    """
    创建转移流传输

    返回:
        (接收端, sender_factory)：sender_factory() 为每个工作进程返回一个发送端
    """
    if kind == "inprocess":
        channel = InProcessChannel()
        return channel, lambda: channel
    if kind == "socket":
        channel = SocketChannel()
        logger.info(f"[训练] 套接字传输监听于 {channel.address}")
        return channel, channel.connect
    raise ConfigError(f"未知传输方式: {kind}（可选 inprocess / socket）")


class SnapshotBroadcast:
    """参数快照广播：学习器发布，工作进程按版本号拉取最新快照"""

    def __init__(self):
        self._lock = threading.Lock()
        self._snapshot = None
        self._closed = False

    def publish(self, snapshot):
        with self._lock:
            if self._closed:
                raise ChannelClosed("快照广播已关闭")
            self._snapshot = snapshot

    def latest(self):
        with self._lock:
            if self._closed:
                raise ChannelClosed("快照广播已关闭")
            return self._snapshot

    def close(self):
        with self._lock:
            self._closed = True

    @property
    def closed(self):
        return self._closed
