# -*- coding: utf-8 -*-
import struct

import numpy as np
import pytest

from app.errors import BufferUnderfull, CodecError
from app.services.codec import (
    CODEC_VERSION, TRANSITION_MAGIC, decode_message, encode_message, encode_transition,
)
from app.services.replay import EpisodeSummary, ReplayBuffer, Transition, dequantize, quantize
from tests.conftest import make_transitions


def test_quantize_roundtrip_error_bounded():
    x = np.linspace(0.0, 1.0, 1001, dtype=np.float32)
    q = quantize(x)
    assert q.dtype == np.uint8
    assert np.abs(dequantize(q) - x).max() <= 0.5 / 255 + 1e-7
    assert quantize(q) is q
    assert quantize(np.array([-0.2, 1.7])).tolist() == [0, 255]


def test_ring_buffer_evicts_oldest():
    buffer = ReplayBuffer(5)
    items = make_transitions(8, (2, 2, 9))
    for t in items:
        buffer.add(t)
    assert len(buffer) == 5
    assert buffer.total_added == 8 and buffer.evicted == 3
    assert [t.step for t in buffer.items()] == [3, 4, 5, 6, 7]


def test_sample_is_uniform_over_contents():
    buffer = ReplayBuffer(10)
    for t in make_transitions(10, (1, 1, 9)):
        buffer.add(t)
    rng = np.random.default_rng(0)
    counts = np.zeros(10)
    for _ in range(500):
        batch = buffer.sample(20, rng)
        np.add.at(counts, batch.indices, 1)
    expected = counts.sum() / 10
    chi2 = ((counts - expected) ** 2 / expected).sum()
    assert chi2 < 30.0  # 自由度 9
    assert batch.obs.shape == (20, 1, 1, 9)
    assert batch.terminals.dtype == bool


def test_sample_underfull():
    buffer = ReplayBuffer(10)
    buffer.add(make_transitions(1, (1, 1, 9))[0])
    with pytest.raises(BufferUnderfull):
        buffer.sample(2, np.random.default_rng(0))


def test_buffer_state_restores_exactly():
    buffer = ReplayBuffer(4)
    for t in make_transitions(6, (2, 2, 9)):
        buffer.add(t)
    restored = ReplayBuffer.from_state(buffer.state())
    assert [t.step for t in restored.items()] == [t.step for t in buffer.items()]
    a = buffer.sample(3, np.random.default_rng(9))
    b = restored.sample(3, np.random.default_rng(9))
    np.testing.assert_array_equal(a.obs, b.obs)
    restored.add(make_transitions(1, (2, 2, 9), seed=5)[0])
    assert restored.evicted == buffer.evicted + 1


def test_transition_frame_roundtrip():
    original = make_transitions(3, (6, 5, 9), seed=1)[2]
    original = Transition(obs=original.obs, action=3, reward=-50.0, next_obs=original.next_obs,
                          terminal=True, worker=4, step=123456789)
    decoded = decode_message(encode_message(original))
    np.testing.assert_array_equal(decoded.obs, original.obs)
    np.testing.assert_array_equal(decoded.next_obs, original.next_obs)
    assert (decoded.action, decoded.reward, decoded.terminal, decoded.worker, decoded.step) == (3, -50.0, True, 4, 123456789)


def test_float_observations_are_quantized_on_encode():
    obs = np.full((2, 3, 9), 0.5, dtype=np.float32)
    t = Transition(obs=obs, action=0, reward=0.25, next_obs=obs, terminal=False)
    decoded = decode_message(encode_transition(t))
    assert decoded.obs.dtype == np.uint8
    assert np.all(decoded.obs == 128)


def test_frame_layout_is_channel_planes():
    obs = np.zeros((2, 2, 9), dtype=np.uint8)
    obs[..., 4] = 7
    frame = encode_transition(Transition(obs=obs, action=1, reward=0.0, next_obs=obs, terminal=False))
    assert frame[:4] == TRANSITION_MAGIC
    assert frame[4] == CODEC_VERSION
    header = len(frame) - 2 * obs.size
    plane = frame[header + 4 * 4: header + 5 * 4]
    assert plane == bytes([7, 7, 7, 7])


def test_summary_roundtrip():
    summary = EpisodeSummary(worker=1, episode=3, scenario="t_merge", density="regular",
                             status="Success", steps=88, episode_return=41.5)
    assert decode_message(encode_message(summary)) == summary


def test_corrupt_frames_rejected():
    frame = encode_transition(make_transitions(1, (2, 2, 9))[0])
    with pytest.raises(CodecError):
        decode_message(frame[:-1])
    with pytest.raises(CodecError):
        decode_message(b'XXXX' + frame[4:])
    with pytest.raises(CodecError):
        decode_message(frame[:4] + struct.pack('<B', CODEC_VERSION + 1) + frame[5:])
    with pytest.raises(CodecError):
        encode_message("not a message")
