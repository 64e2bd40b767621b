"""Prefix alignment for truncated audio.

Given a clip cut at some point and the full reference translation, walk
the reference token by token and keep the longest prefix the backend still
considers supported by the audio.  Token i is scored against the
distribution conditioned on tokens 1..i-1 (the distribution that actually
predicts it); the walk stops, excluding token i, as soon as either

  * the end-of-sequence token outranks the candidate, or
  * more than tau * vocab_size tokens strictly outrank the candidate.

Probability comparisons happen in log space with no epsilon slack; the
rule is strict so that independent implementations agree bit-wise.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple

from .backend import Provider, ScoreRequest
from .domain import AudioClip, BackendUnavailable, PairKind, SpeechTextPair, TokenScore
from .metrics import detokenize, tokenize_for_bleu


@dataclass(frozen=True)
class SpeculationConfig:
    """tau is the rank threshold; None derives 100 / vocab_size from the backend."""

    tau: Optional[float] = None
    prompt_template_id: str = "default"

    def __post_init__(self) -> None:
        if self.tau is not None and not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")


class StopReason(str, Enum):
    EOS_DOMINATES = "eos_dominates"
    RANK_EXCEEDS_TAU = "rank_exceeds_tau"
    EXHAUSTED_TARGET = "exhausted_target"


@dataclass(frozen=True)
class SpeculationResult:
    prefix_len: int
    stop_reason: StopReason
    per_step_scores: Tuple[TokenScore, ...]


def _stop_reason(score: TokenScore, tau: float) -> Optional[StopReason]:
    # EOS dominance is checked first; when both conditions fire the
    # reported reason is eos_dominates.
    if score.candidate_logprob < score.eos_logprob:
        return StopReason.EOS_DOMINATES
    if score.strictly_greater_count / score.vocab_size > tau:
        return StopReason.RANK_EXCEEDS_TAU
    return None


def termination_check(score: TokenScore, tau: float) -> bool:
    """True iff scoring this candidate must end the speculation walk."""
    if tau <= 0.0:
        raise ValueError(f"tau must be positive, got {tau}")
    return _stop_reason(score, tau) is not None


def speculate_prefix(
    provider: Provider,
    truncated_audio: AudioClip,
    target_tokens: Sequence[str],
    cfg: SpeculationConfig,
    prompt: str = "",
) -> SpeculationResult:
    """Longest reference prefix supported by the truncated audio.

    The walk is sequential by construction (each step conditions on the
    previous tokens).  On backend failure the partial per-step scores are
    attached to the raised exception as `partial_scores`.
    """
    target_tokens = tuple(target_tokens)
    if not target_tokens:
        raise ValueError("target_tokens must be non-empty")
    tau = cfg.tau
    scores: list[TokenScore] = []
    for i, candidate in enumerate(target_tokens, start=1):
        req = ScoreRequest(
            prompt=prompt,
            audio=truncated_audio,
            prefix_tokens=target_tokens[: i - 1],
            candidate_token=candidate,
        )
        try:
            score = provider.score_next(req)
        except BackendUnavailable as exc:
            exc.partial_scores = tuple(scores)  # type: ignore[attr-defined]
            raise
        if tau is None:
            tau = 100.0 / score.vocab_size
        scores.append(score)
        reason = _stop_reason(score, tau)
        if reason is not None:
            return SpeculationResult(prefix_len=i - 1, stop_reason=reason, per_step_scores=tuple(scores))
    return SpeculationResult(
        prefix_len=len(target_tokens),
        stop_reason=StopReason.EXHAUSTED_TARGET,
        per_step_scores=tuple(scores),
    )


def build_truncated_pair(
    parent: SpeechTextPair,
    point_ms: int,
    result: SpeculationResult,
) -> Optional[SpeechTextPair]:
    """Truncated-kind pair for the aligned prefix, or None when it is empty.

    An empty prefix carries no training signal (emitting nothing is already
    implied by EOS training), so those results are dropped.  The target is
    re-tokenized with the same cjk/whitespace tokenizer the walk used.
    """
    if result.prefix_len == 0:
        return None
    tokens = tokenize_for_bleu(parent.target_text, "cjk_char")[: result.prefix_len]
    return SpeechTextPair(
        id=f"{parent.id}#t{point_ms}",
        audio_path=parent.audio_path,
        target_text=detokenize(tokens),
        source_text=parent.source_text,
        kind=PairKind.TRUNCATED,
        truncation_ms=point_ms,
    )
