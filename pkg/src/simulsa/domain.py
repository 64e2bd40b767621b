"""Shared domain types, enums, and the package error hierarchy.

Durations and truncation points travel as integer milliseconds end to end;
conversion to sample indices happens only when audio is actually sliced.
All types here are immutable value objects and safe to share across workers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from enum import Enum
from typing import Any, Optional

import numpy as np


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class SimulsaError(Exception):
    """Base class for every error raised by this package."""


class InvalidInterval(SimulsaError):
    """Truncation interval has l >= r."""


class InvalidGrid(SimulsaError):
    """Grid step does not divide the truncation interval span."""


class NonPositiveParameter(SimulsaError):
    """A parameter that must be positive is zero or negative."""


class InvalidDraw(SimulsaError):
    """Uniform draw outside [0, 1)."""


class EmptyClip(SimulsaError):
    """Audio clip contains zero samples."""


class InvalidSpec(SimulsaError):
    """Synthetic oracle specification violates its invariants."""


class BackendUnavailable(SimulsaError):
    """Scoring backend unreachable or failing server-side."""


class ProtocolViolation(SimulsaError):
    """Backend answered outside the wire contract (missing fields, NaN logprobs)."""


class AudioDecode(SimulsaError):
    """Audio payload could not be decoded as 16-bit PCM WAV."""


class UnknownTemplate(SimulsaError):
    """Prompt template id is not registered."""


class LengthMismatch(SimulsaError):
    """Hypothesis and reference corpora differ in length."""


class IoFailure(SimulsaError):
    """File output could not be written."""


# ---------------------------------------------------------------------------
# Audio
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AudioClip:
    """Mono 16-bit PCM waveform; the unit of truncation and slicing."""

    samples: np.ndarray  # int16, shape (n,)
    sample_rate_hz: int

    def __post_init__(self) -> None:
        if self.sample_rate_hz <= 0:
            raise NonPositiveParameter(f"sample_rate_hz must be positive, got {self.sample_rate_hz}")
        arr = np.asarray(self.samples, dtype=np.int16)
        if arr.ndim != 1:
            raise AudioDecode(f"expected mono 1-D sample array, got shape {arr.shape}")
        arr = arr.copy() if arr.flags.writeable else arr
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    @property
    def channel_count(self) -> int:
        return 1

    @property
    def duration_ms(self) -> int:
        return (1000 * len(self.samples)) // self.sample_rate_hz

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AudioClip):
            return NotImplemented
        return (
            self.sample_rate_hz == other.sample_rate_hz
            and self.samples.shape == other.samples.shape
            and bool(np.array_equal(self.samples, other.samples))
        )


# ---------------------------------------------------------------------------
# Speech-text pairs
# ---------------------------------------------------------------------------

class PairKind(str, Enum):
    OFFLINE = "offline"
    TRUNCATED = "truncated"


@dataclass(frozen=True)
class SpeechTextPair:
    """One (audio, translation) pair; truncated pairs mark their cut point."""

    id: str
    audio_path: str
    target_text: str
    source_text: Optional[str] = None
    kind: PairKind = PairKind.OFFLINE
    truncation_ms: Optional[int] = None

    def __post_init__(self) -> None:
        if self.kind is PairKind.TRUNCATED:
            if self.truncation_ms is None or self.truncation_ms < 0:
                raise ValueError(f"truncated pair {self.id!r} needs a non-negative truncation_ms")
        elif self.truncation_ms is not None:
            raise ValueError(f"offline pair {self.id!r} must not carry truncation_ms")


def pair_to_json(pair: SpeechTextPair) -> str:
    """Serialize to one canonical JSON line (stable key order, raw UTF-8)."""
    record: dict[str, Any] = {"id": pair.id, "audio_path": pair.audio_path}
    if pair.source_text is not None:
        record["source_text"] = pair.source_text
    record["target_text"] = pair.target_text
    record["kind"] = pair.kind.value
    if pair.truncation_ms is not None:
        record["truncation_ms"] = pair.truncation_ms
    return json.dumps(record, ensure_ascii=False)


def pair_from_json(line: str) -> SpeechTextPair:
    record = json.loads(line)
    try:
        return SpeechTextPair(
            id=record["id"],
            audio_path=record["audio_path"],
            target_text=record["target_text"],
            source_text=record.get("source_text"),
            kind=PairKind(record.get("kind", "offline")),
            truncation_ms=record.get("truncation_ms"),
        )
    except KeyError as exc:
        raise ValueError(f"manifest record missing field {exc}") from exc


# ---------------------------------------------------------------------------
# Truncation policy
# ---------------------------------------------------------------------------

class TruncationFamily(str, Enum):
    BETA_DECAY = "beta_decay"
    UNIFORM = "uniform"
    BETA_DECAY_FULLSPAN = "beta_decay_fullspan"
    BETA_DECAY_GRID = "beta_decay_grid"


@dataclass(frozen=True)
class TruncationPolicy:
    """Distribution family plus sampling interval for truncation points.

    alpha/beta parameterize the decaying draw on the unit interval; the
    defaults (1, 3) give the density 3(1-x)^2 that biases cuts toward the
    start of the interval.
    """

    family: TruncationFamily = TruncationFamily.BETA_DECAY
    l_ms: int = 500
    r_ms: int = 5000
    grid_step_ms: int = 500
    alpha: float = 1.0
    beta: float = 3.0


def validate_policy(policy: TruncationPolicy) -> None:
    """Raise unless every policy invariant holds."""
    if policy.l_ms <= 0:
        raise NonPositiveParameter(f"l_ms must be positive, got {policy.l_ms}")
    if policy.r_ms <= 0:
        raise NonPositiveParameter(f"r_ms must be positive, got {policy.r_ms}")
    if policy.alpha <= 0 or policy.beta <= 0:
        raise NonPositiveParameter(f"alpha/beta must be positive, got ({policy.alpha}, {policy.beta})")
    if policy.l_ms >= policy.r_ms:
        raise InvalidInterval(f"need l_ms < r_ms, got [{policy.l_ms}, {policy.r_ms}]")
    if policy.family is TruncationFamily.BETA_DECAY_GRID:
        if policy.grid_step_ms <= 0:
            raise NonPositiveParameter(f"grid_step_ms must be positive, got {policy.grid_step_ms}")
        if (policy.r_ms - policy.l_ms) % policy.grid_step_ms != 0:
            raise InvalidGrid(
                f"grid_step_ms={policy.grid_step_ms} does not divide span {policy.r_ms - policy.l_ms}"
            )


# ---------------------------------------------------------------------------
# Token scores
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TokenScore:
    """Backend answer for one candidate continuation.

    strictly_greater_count is the number of vocabulary entries whose
    probability strictly exceeds the candidate's; ties do not count.
    A count of 0 marks the candidate as the distribution argmax.
    """

    candidate_logprob: float
    strictly_greater_count: int
    eos_logprob: float
    vocab_size: int

    def __post_init__(self) -> None:
        if self.vocab_size <= 0:
            raise ProtocolViolation(f"vocab_size must be positive, got {self.vocab_size}")
        if not 0 <= self.strictly_greater_count < self.vocab_size:
            raise ProtocolViolation(
                f"strictly_greater_count {self.strictly_greater_count} outside [0, {self.vocab_size})"
            )
        for name, lp in (("candidate_logprob", self.candidate_logprob), ("eos_logprob", self.eos_logprob)):
            if not math.isfinite(lp) or lp > 0.0:
                raise ProtocolViolation(f"{name}={lp!r} does not encode a probability in (0, 1]")


# ---------------------------------------------------------------------------
# Streaming configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StreamConfig:
    """Chunked-decoding parameters: chunk growth, rollback depth, step budget."""

    chunk_ms: int
    rollback_tokens: int = 0
    max_new_tokens_per_step: int = 128

    def __post_init__(self) -> None:
        if self.chunk_ms <= 0:
            raise NonPositiveParameter(f"chunk_ms must be positive, got {self.chunk_ms}")
        if self.rollback_tokens < 0:
            raise ValueError(f"rollback_tokens must be >= 0, got {self.rollback_tokens}")
        if self.max_new_tokens_per_step <= 0:
            raise NonPositiveParameter(
                f"max_new_tokens_per_step must be positive, got {self.max_new_tokens_per_step}"
            )
