"""Bridge test helpers: in-memory WAV payloads and a scripted adapter."""

from __future__ import annotations

import base64
import io
import wave

import numpy as np
import pytest

from simulsa_bridge.adapters import ScriptedAdapter


def make_wav_bytes(duration_ms: int, rate: int = 16000, channels: int = 1) -> bytes:
    n = (duration_ms * rate) // 1000
    samples = (np.arange(n * channels, dtype=np.int64) % 197 - 98).astype("<i2")
    buf = io.BytesIO()
    with wave.open(buf, "wb") as handle:
        handle.setnchannels(channels)
        handle.setsampwidth(2)
        handle.setframerate(rate)
        handle.writeframes(samples.tobytes())
    return buf.getvalue()


def make_b64_wav(duration_ms: int, rate: int = 16000, channels: int = 1) -> str:
    return base64.b64encode(make_wav_bytes(duration_ms, rate, channels)).decode("ascii")


@pytest.fixture
def adapter():
    return ScriptedAdapter(
        target_tokens=("alpha", "beta", "gamma"),
        ready_at_ms=(600, 1200, 1800),
        high_prob=0.9,
        vocab_size=1000,
    )
