"""WAV ingestion and encoding (16-bit PCM only).

Multi-channel input is down-mixed to mono by channel averaging at load
time; everything downstream assumes a single stream.
"""

from __future__ import annotations

import base64
import io
import wave
from pathlib import Path
from typing import Union

import numpy as np

from .domain import AudioClip, AudioDecode, EmptyClip


def wav_bytes_to_clip(data: bytes) -> AudioClip:
    """Decode an in-memory WAV file into a mono clip."""
    try:
        with wave.open(io.BytesIO(data), "rb") as wav:
            sampwidth = wav.getsampwidth()
            channels = wav.getnchannels()
            rate = wav.getframerate()
            frames = wav.readframes(wav.getnframes())
    except (wave.Error, EOFError) as exc:
        raise AudioDecode(f"not a readable WAV stream: {exc}") from exc
    if sampwidth != 2:
        raise AudioDecode(f"only 16-bit PCM supported, got sample width {sampwidth}")
    samples = np.frombuffer(frames, dtype="<i2")
    if channels > 1:
        samples = samples.reshape(-1, channels)
        samples = np.rint(samples.mean(axis=1)).astype(np.int16)
    return AudioClip(samples=samples, sample_rate_hz=rate)


def clip_to_wav_bytes(clip: AudioClip) -> bytes:
    buf = io.BytesIO()
    with wave.open(buf, "wb") as wav:
        wav.setnchannels(1)
        wav.setsampwidth(2)
        wav.setframerate(clip.sample_rate_hz)
        wav.writeframes(clip.samples.astype("<i2").tobytes())
    return buf.getvalue()


def load_wav(path: Union[str, Path]) -> AudioClip:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise AudioDecode(f"cannot read {path}: {exc}") from exc
    return wav_bytes_to_clip(data)


def save_wav(clip: AudioClip, path: Union[str, Path]) -> None:
    Path(path).write_bytes(clip_to_wav_bytes(clip))


def clip_to_b64_wav(clip: AudioClip) -> str:
    """Encode as base64 WAV for the wire protocol."""
    if len(clip.samples) == 0:
        raise EmptyClip("refusing to encode a zero-sample clip")
    return base64.b64encode(clip_to_wav_bytes(clip)).decode("ascii")


def b64_wav_to_clip(payload: str) -> AudioClip:
    try:
        data = base64.b64decode(payload, validate=True)
    except (ValueError, TypeError) as exc:
        raise AudioDecode(f"invalid base64 audio payload: {exc}") from exc
    return wav_bytes_to_clip(data)
