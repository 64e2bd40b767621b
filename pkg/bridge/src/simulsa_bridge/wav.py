"""Audio payload handling: base64 WAV in, model-rate float waveform out."""

from __future__ import annotations

import base64
import io
import wave

import numpy as np


class AudioPayloadError(ValueError):
    """Payload is not decodable 16-bit PCM WAV."""


def decode_b64_wav(payload: str) -> tuple[np.ndarray, int]:
    """Return (mono int16 samples, sample rate) from a base64 WAV string."""
    try:
        raw = base64.b64decode(payload, validate=True)
    except (ValueError, TypeError) as exc:
        raise AudioPayloadError(f"invalid base64 audio: {exc}") from exc
    try:
        with wave.open(io.BytesIO(raw), "rb") as handle:
            if handle.getsampwidth() != 2:
                raise AudioPayloadError(
                    f"audio must be 16-bit PCM, got sample width {handle.getsampwidth()}"
                )
            channels = handle.getnchannels()
            rate = handle.getframerate()
            frames = handle.readframes(handle.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioPayloadError(f"audio is not a readable WAV stream: {exc}") from exc
    samples = np.frombuffer(frames, dtype="<i2")
    if channels > 1:
        samples = np.rint(samples.reshape(-1, channels).mean(axis=1)).astype(np.int16)
    return samples, rate


def to_model_waveform(samples: np.ndarray, rate: int, target_rate: int) -> np.ndarray:
    """Float32 waveform in [-1, 1], linearly resampled to the model's rate."""
    waveform = samples.astype(np.float32) / 32768.0
    if rate == target_rate or len(waveform) == 0:
        return waveform
    duration_s = len(waveform) / rate
    n_target = max(int(round(duration_s * target_rate)), 1)
    src_times = np.arange(len(waveform)) / rate
    dst_times = np.arange(n_target) / target_rate
    return np.interp(dst_times, src_times, waveform).astype(np.float32)
