"""Next-token scoring and generation providers.

A provider exposes the conditional distribution p(token | prompt, audio,
committed prefix) through two operations: score_next answers how one
candidate token ranks (log-probability, strict-rank count, end-of-sequence
log-probability, vocabulary size), generate returns the greedy
continuation.  Both are deterministic: greedy, temperature-free.

The synthetic provider is a closed-form stand-in for a real model.  It
carries an explicit readiness schedule: token j of the target becomes
translatable once the audio reaches ready_at_ms[j].  While the next target
token is ready it holds probability high_prob and everything else shares
the remainder uniformly; otherwise the end-of-sequence token dominates.
That makes prefix alignment and streaming behaviour brute-force checkable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from math import log
from pathlib import Path
from typing import Mapping, Optional, Protocol, Sequence, Tuple, Union, runtime_checkable

from .domain import AudioClip, InvalidSpec, TokenScore

EOS_TOKEN = "<EOS>"


@dataclass(frozen=True)
class ScoreRequest:
    prompt: str
    audio: AudioClip
    prefix_tokens: Tuple[str, ...]
    candidate_token: str

    def __post_init__(self) -> None:
        object.__setattr__(self, "prefix_tokens", tuple(self.prefix_tokens))
        if not self.candidate_token:
            raise ValueError("candidate_token must be non-empty")


@dataclass(frozen=True)
class GenerateRequest:
    prompt: str
    audio: AudioClip
    prefix_tokens: Tuple[str, ...]
    max_new_tokens: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "prefix_tokens", tuple(self.prefix_tokens))
        if self.max_new_tokens < 1:
            raise ValueError(f"max_new_tokens must be >= 1, got {self.max_new_tokens}")


@runtime_checkable
class Provider(Protocol):
    def score_next(self, req: ScoreRequest) -> TokenScore: ...

    def generate(self, req: GenerateRequest) -> Tuple[list[str], bool]: ...


def provider_for(backend, sample_id: str) -> Provider:
    """Resolve a per-sample provider; plain providers serve every sample."""
    resolver = getattr(backend, "provider_for", None)
    if callable(resolver):
        return resolver(sample_id)
    return backend


# ---------------------------------------------------------------------------
# Synthetic oracle
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticOracleSpec:
    """Deterministic test model: target tokens with audio-readiness times."""

    target_tokens: Tuple[str, ...]
    ready_at_ms: Tuple[int, ...]
    high_prob: float = 0.9
    vocab_size: int = 1000

    def __post_init__(self) -> None:
        object.__setattr__(self, "target_tokens", tuple(self.target_tokens))
        object.__setattr__(self, "ready_at_ms", tuple(self.ready_at_ms))
        if len(self.target_tokens) != len(self.ready_at_ms):
            raise InvalidSpec(
                f"{len(self.target_tokens)} tokens but {len(self.ready_at_ms)} readiness times"
            )
        if any(a <= 0 for a in self.ready_at_ms):
            raise InvalidSpec("readiness times must be positive")
        if any(a > b for a, b in zip(self.ready_at_ms, self.ready_at_ms[1:])):
            raise InvalidSpec(f"readiness times must be non-decreasing: {self.ready_at_ms}")
        if not 0.0 < self.high_prob < 1.0:
            raise InvalidSpec(f"high_prob must lie in (0, 1), got {self.high_prob}")
        if self.vocab_size < 2:
            raise InvalidSpec(f"vocab_size must be >= 2, got {self.vocab_size}")
        if self.high_prob <= 1.0 / self.vocab_size:
            raise InvalidSpec(
                f"high_prob {self.high_prob} must exceed 1/vocab_size = {1.0 / self.vocab_size}"
            )
        if any(not tok or tok == EOS_TOKEN for tok in self.target_tokens):
            raise InvalidSpec("target tokens must be non-empty and distinct from the EOS marker")


def spec_from_dict(data: Mapping) -> SyntheticOracleSpec:
    try:
        return SyntheticOracleSpec(
            target_tokens=tuple(data["target_tokens"]),
            ready_at_ms=tuple(int(a) for a in data["ready_at_ms"]),
            high_prob=float(data.get("high_prob", 0.9)),
            vocab_size=int(data.get("vocab_size", 1000)),
        )
    except KeyError as exc:
        raise InvalidSpec(f"oracle spec missing field {exc}") from exc


def spec_to_dict(spec: SyntheticOracleSpec) -> dict:
    return {
        "target_tokens": list(spec.target_tokens),
        "ready_at_ms": list(spec.ready_at_ms),
        "high_prob": spec.high_prob,
        "vocab_size": spec.vocab_size,
    }


@dataclass(frozen=True)
class SyntheticProvider:
    """Pure, fully concurrent provider backed by a SyntheticOracleSpec."""

    spec: SyntheticOracleSpec

    def _argmax_token(self, duration_ms: int, prefix: Sequence[str]) -> str:
        """Next target token while it is ready, otherwise the EOS marker.

        A prefix that is not a prefix of the target is off-script; the
        oracle then has nothing left to say and EOS dominates.
        """
        spec = self.spec
        i = len(prefix)
        if i >= len(spec.target_tokens) or tuple(prefix) != spec.target_tokens[:i]:
            return EOS_TOKEN
        if spec.ready_at_ms[i] <= duration_ms:
            return spec.target_tokens[i]
        return EOS_TOKEN

    def _probability(self, token: str, argmax: str) -> float:
        spec = self.spec
        if token == argmax:
            return spec.high_prob
        return (1.0 - spec.high_prob) / (spec.vocab_size - 1)

    def score_next(self, req: ScoreRequest) -> TokenScore:
        argmax = self._argmax_token(req.audio.duration_ms, req.prefix_tokens)
        p_cand = self._probability(req.candidate_token, argmax)
        p_eos = self._probability(EOS_TOKEN, argmax)
        return TokenScore(
            candidate_logprob=log(p_cand),
            strictly_greater_count=0 if req.candidate_token == argmax else 1,
            eos_logprob=log(p_eos),
            vocab_size=self.spec.vocab_size,
        )

    def generate(self, req: GenerateRequest) -> Tuple[list[str], bool]:
        duration = req.audio.duration_ms
        sequence = list(req.prefix_tokens)
        out: list[str] = []
        for _ in range(req.max_new_tokens):
            nxt = self._argmax_token(duration, sequence)
            if nxt == EOS_TOKEN:
                return out, True
            out.append(nxt)
            sequence.append(nxt)
        return out, False


def make_synthetic_provider(spec: SyntheticOracleSpec) -> SyntheticProvider:
    return SyntheticProvider(spec=spec)


# ---------------------------------------------------------------------------
# Per-sample synthetic corpora
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SyntheticBackend:
    """Maps sample ids to synthetic providers, with an optional default."""

    default: Optional[SyntheticProvider] = None
    per_id: Mapping[str, SyntheticProvider] = field(default_factory=dict)

    def provider_for(self, sample_id: str) -> SyntheticProvider:
        provider = self.per_id.get(sample_id, self.default)
        if provider is None:
            raise InvalidSpec(f"no oracle spec for sample {sample_id!r} and no default")
        return provider


def load_synthetic_backend(path: Union[str, Path]) -> SyntheticBackend:
    """Load an oracle corpus from JSON.

    Accepts either a single spec object (applied to every sample) or
    {"default": spec?, "per_id": {sample_id: spec, ...}}.
    """
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(data, Mapping):
        raise InvalidSpec(f"oracle corpus {path} must be a JSON object")
    if "target_tokens" in data:
        return SyntheticBackend(default=make_synthetic_provider(spec_from_dict(data)))
    default = None
    if data.get("default") is not None:
        default = make_synthetic_provider(spec_from_dict(data["default"]))
    per_id = {
        sid: make_synthetic_provider(spec_from_dict(sub))
        for sid, sub in data.get("per_id", {}).items()
    }
    if default is None and not per_id:
        raise InvalidSpec(f"oracle corpus {path} defines neither a default nor per-id specs")
    return SyntheticBackend(default=default, per_id=per_id)
