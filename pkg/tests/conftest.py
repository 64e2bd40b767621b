"""Shared fixtures: deterministic clips, oracle specs, and manifest writers."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from simulsa.audio import save_wav
from simulsa.backend import SyntheticOracleSpec, make_synthetic_provider
from simulsa.domain import AudioClip


def make_clip(duration_ms: int, rate: int = 16000) -> AudioClip:
    """Deterministic sawtooth clip whose duration_ms is exactly duration_ms."""
    n = (duration_ms * rate) // 1000
    samples = (np.arange(n, dtype=np.int64) % 251 - 125).astype(np.int16)
    return AudioClip(samples=samples, sample_rate_hz=rate)


def random_oracle_spec(rng: np.random.Generator, max_tokens: int = 8) -> SyntheticOracleSpec:
    t = int(rng.integers(1, max_tokens + 1))
    tokens = tuple(f"w{j}" for j in range(t))
    ready = tuple(int(a) for a in np.sort(rng.integers(100, 4000, size=t)))
    vocab = int(rng.integers(150, 3000))
    high = float(rng.uniform(0.4, 0.95))
    return SyntheticOracleSpec(tokens, ready, high_prob=high, vocab_size=vocab)


@pytest.fixture
def three_token_oracle():
    """The worked example: tokens ready at 600/1200/1800 ms."""
    spec = SyntheticOracleSpec(
        target_tokens=("y1", "y2", "y3"),
        ready_at_ms=(600, 1200, 1800),
        high_prob=0.9,
        vocab_size=1000,
    )
    return make_synthetic_provider(spec)


def write_manifest(path: Path, records: list[dict]) -> Path:
    with path.open("w", encoding="utf-8") as handle:
        for record in records:
            handle.write(json.dumps(record, ensure_ascii=False) + "\n")
    return path


def write_wav(path: Path, duration_ms: int, rate: int = 16000) -> Path:
    save_wav(make_clip(duration_ms, rate), path)
    return path
