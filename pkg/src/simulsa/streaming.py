"""Chunked simultaneous decoding with rollback.

Audio is fed to the backend in chunk_ms increments.  Each step forces the
committed tokens verbatim and extends them with the backend's greedy
continuation; after every non-final step the last b committed tokens are
removed so later audio can revise an uncertain tail.  No rollback happens
after the final chunk: there is no future audio left to justify it, and
removing tokens would only truncate the answer.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional, Tuple

from .backend import GenerateRequest, Provider
from .domain import AudioClip, EmptyClip, StreamConfig
from .metrics import detokenize
from .truncation import slice_audio


@dataclass(frozen=True)
class StreamStep:
    chunk_end_ms: int
    emitted: Tuple[str, ...]
    rolled_back: Tuple[str, ...]
    committed_after: Tuple[str, ...]


@dataclass(frozen=True)
class StreamSession:
    """Full record of one chunked decoding run."""

    clip: AudioClip
    config: StreamConfig
    committed: Tuple[str, ...]
    consumed_ms: int
    steps: Tuple[StreamStep, ...]


def run_stream_session(
    provider: Provider,
    clip: AudioClip,
    prompt: str,
    cfg: StreamConfig,
) -> Tuple[str, StreamSession]:
    """Stream the clip through the provider; returns (final text, session log)."""
    if len(clip.samples) == 0:
        raise EmptyClip("cannot stream a zero-sample clip")
    duration = clip.duration_ms
    committed: list[str] = []
    steps: list[StreamStep] = []
    consumed = 0
    while True:
        consumed = min(consumed + cfg.chunk_ms, duration)
        final_chunk = consumed >= duration
        audio = clip if final_chunk else slice_audio(clip, consumed)
        req = GenerateRequest(
            prompt=prompt,
            audio=audio,
            prefix_tokens=tuple(committed),
            max_new_tokens=cfg.max_new_tokens_per_step,
        )
        emitted, _finished = provider.generate(req)
        committed.extend(emitted)
        rolled_back: list[str] = []
        if not final_chunk and cfg.rollback_tokens > 0:
            n = min(cfg.rollback_tokens, len(committed))
            if n:
                rolled_back = committed[-n:]
                del committed[-n:]
        steps.append(
            StreamStep(
                chunk_end_ms=consumed,
                emitted=tuple(emitted),
                rolled_back=tuple(rolled_back),
                committed_after=tuple(committed),
            )
        )
        if final_chunk:
            break
    session = StreamSession(
        clip=clip,
        config=cfg,
        committed=tuple(committed),
        consumed_ms=consumed,
        steps=tuple(steps),
    )
    return detokenize(committed), session


def offline_translate(
    provider: Provider,
    clip: AudioClip,
    prompt: str,
    max_new_tokens: int = 1024,
) -> str:
    """Translate after all speech is received: one generate call, empty prefix."""
    if len(clip.samples) == 0:
        raise EmptyClip("cannot translate a zero-sample clip")
    tokens, _finished = provider.generate(
        GenerateRequest(prompt=prompt, audio=clip, prefix_tokens=(), max_new_tokens=max_new_tokens)
    )
    return detokenize(tokens)


def step_records(session: StreamSession, sample_id: Optional[str] = None) -> Iterator[dict]:
    """JSONL-ready dicts, one per step, optionally tagged with the sample id."""
    for step in session.steps:
        record: dict = {}
        if sample_id is not None:
            record["id"] = sample_id
        record.update(
            {
                "chunk_end_ms": step.chunk_end_ms,
                "emitted": list(step.emitted),
                "rolled_back": list(step.rolled_back),
                "committed_after": list(step.committed_after),
            }
        )
        yield record
