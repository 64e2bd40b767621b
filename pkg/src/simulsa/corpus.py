"""Manifest ingestion, prompt templating, augmentation, and corpus emission.

The augmentation pipeline mirrors the data-construction recipe: select a
small subset of offline pairs, draw a truncation point for each from the
decaying distribution, slice the audio, align the reference prefix against
the backend, and emit the surviving truncated pairs.  Mixing them after
the untouched offline records yields the combined fine-tuning corpus.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Optional, Sequence, Tuple, Union

from .audio import load_wav
from .backend import provider_for
from .domain import (
    AudioClip,
    BackendUnavailable,
    IoFailure,
    SpeechTextPair,
    TruncationPolicy,
    UnknownTemplate,
    pair_from_json,
    pair_to_json,
)
from .metrics import corpus_bleu, format_chunk_ms, tokenize_for_bleu
from .speculation import SpeculationConfig, build_truncated_pair, speculate_prefix
from .streaming import StreamConfig, StreamSession, offline_translate, run_stream_session
from .truncation import child_rng, sample_truncation_point, slice_audio

log = logging.getLogger("simulsa.corpus")

CHECKPOINT_EVERY = 100  # backend calls are the expensive step; batch granularity

PROMPT_TEMPLATES = {
    "default": "<audio>{path}</audio>Detect the language and translate the speech into Mandarin: <|{lang}|>",
}


def render_prompt(template_id: str, audio_placeholder: str, source_lang: str) -> str:
    try:
        template = PROMPT_TEMPLATES[template_id]
    except KeyError:
        raise UnknownTemplate(f"unknown prompt template {template_id!r}") from None
    return template.format(path=audio_placeholder, lang=source_lang)


# ---------------------------------------------------------------------------
# Manifests
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Manifest:
    """Offline speech-text records plus language tags and a resolution root."""

    records: Tuple[SpeechTextPair, ...]
    source_lang: str = "en"
    target_lang: str = "zh"
    root: Optional[Path] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))

    def resolve_audio(self, pair: SpeechTextPair) -> Path:
        path = Path(pair.audio_path)
        if not path.is_absolute() and self.root is not None:
            path = self.root / path
        return path


def load_manifest(
    path: Union[str, Path],
    source_lang: str = "en",
    target_lang: str = "zh",
) -> Manifest:
    """Read a JSONL manifest; relative audio paths resolve against its directory."""
    path = Path(path)
    records = []
    try:
        with path.open(encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    records.append(pair_from_json(line))
                except (ValueError, KeyError) as exc:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
    except OSError as exc:
        raise IoFailure(f"cannot read manifest {path}: {exc}") from exc
    return Manifest(
        records=tuple(records),
        source_lang=source_lang,
        target_lang=target_lang,
        root=path.parent,
    )


def validate_manifest(manifest: Manifest, check_audio: bool = True) -> None:
    seen: set[str] = set()
    for pair in manifest.records:
        if pair.id in seen:
            raise ValueError(f"duplicate manifest id {pair.id!r}")
        seen.add(pair.id)
        if check_audio and not manifest.resolve_audio(pair).exists():
            raise ValueError(f"audio path not resolvable for {pair.id!r}: {pair.audio_path}")


@lru_cache(maxsize=256)
def _load_clip(path_str: str) -> AudioClip:
    return load_wav(path_str)


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

class SelectionMode(str, Enum):
    UNIFORM_RANDOM = "uniform_random"
    FIRST_M = "first_m"


@dataclass(frozen=True)
class AugmentationPlan:
    m: int
    policy: TruncationPolicy = field(default_factory=TruncationPolicy)
    spec_cfg: SpeculationConfig = field(default_factory=SpeculationConfig)
    seed: int = 0
    selection: SelectionMode = SelectionMode.UNIFORM_RANDOM

    def __post_init__(self) -> None:
        if self.m < 1:
            raise ValueError(f"m must be >= 1, got {self.m}")


@dataclass
class AugmentationStats:
    selected: int = 0
    skipped_short: int = 0
    dropped_empty: int = 0
    emitted: int = 0
    failures: int = 0

    def as_dict(self) -> dict:
        return {
            "selected": self.selected,
            "skipped_short": self.skipped_short,
            "dropped_empty": self.dropped_empty,
            "emitted": self.emitted,
            "failures": self.failures,
        }


def select_pairs(manifest: Manifest, plan: AugmentationPlan) -> list[Tuple[int, SpeechTextPair]]:
    """The m (index, pair) entries to augment; index keys the per-sample seed."""
    n = len(manifest.records)
    if plan.m > n:
        raise ValueError(f"m={plan.m} exceeds manifest size {n}")
    if plan.selection is SelectionMode.FIRST_M:
        chosen = range(plan.m)
    else:
        rng = child_rng(plan.seed, 0)
        chosen = sorted(rng.choice(n, size=plan.m, replace=False).tolist())
    return [(rank, manifest.records[i]) for rank, i in enumerate(chosen)]


def _augment_one(
    manifest: Manifest,
    plan: AugmentationPlan,
    backend,
    rank: int,
    pair: SpeechTextPair,
) -> Tuple[str, Optional[SpeechTextPair]]:
    rng = child_rng(plan.seed, 1, rank)
    unit_draw = float(rng.random())
    clip = _load_clip(str(manifest.resolve_audio(pair)))
    draw = sample_truncation_point(plan.policy, clip.duration_ms, unit_draw)
    if draw is None:
        log.info("skip id=%s: duration %dms <= l", pair.id, clip.duration_ms)
        return "skipped_short", None
    target_tokens = tokenize_for_bleu(pair.target_text, "cjk_char")
    if not target_tokens:
        log.info("drop id=%s: empty target", pair.id)
        return "dropped_empty", None
    sliced = slice_audio(clip, draw.point_ms)
    prompt = render_prompt(plan.spec_cfg.prompt_template_id, pair.audio_path, manifest.source_lang)
    result = speculate_prefix(
        provider_for(backend, pair.id), sliced, target_tokens, plan.spec_cfg, prompt=prompt
    )
    child = build_truncated_pair(pair, draw.point_ms, result)
    if child is None:
        log.info("drop id=%s: empty aligned prefix at %dms", pair.id, draw.point_ms)
        return "dropped_empty", None
    return "emitted", child


def _load_checkpoint(path: Path) -> Tuple[set[str], list[SpeechTextPair], AugmentationStats]:
    data = json.loads(path.read_text(encoding="utf-8"))
    emitted = [pair_from_json(json.dumps(rec)) for rec in data.get("emitted", [])]
    stats = AugmentationStats(**data.get("stats", {}))
    return set(data.get("processed_ids", [])), emitted, stats


def _save_checkpoint(
    path: Path,
    processed: Iterable[str],
    emitted: Sequence[SpeechTextPair],
    stats: AugmentationStats,
) -> None:
    payload = {
        "processed_ids": sorted(processed),
        "emitted": [json.loads(pair_to_json(p)) for p in emitted],
        "stats": stats.as_dict(),
    }
    path.write_text(json.dumps(payload, ensure_ascii=False), encoding="utf-8")


def run_augmentation(
    manifest: Manifest,
    plan: AugmentationPlan,
    backend,
    *,
    jobs: Optional[int] = None,
    checkpoint_path: Optional[Union[str, Path]] = None,
) -> Tuple[list[SpeechTextPair], AugmentationStats]:
    """Truncate-and-align the planned subset; returns (augmented pairs, stats).

    Work runs in a thread pool in batches of CHECKPOINT_EVERY samples;
    per-sample seeds key off the selection rank, so results are identical
    regardless of worker count and across resumed runs.  On backend
    failure the checkpoint (when enabled) holds every completed batch.
    """
    selection = select_pairs(manifest, plan)
    checkpoint = Path(checkpoint_path) if checkpoint_path is not None else None

    processed: set[str] = set()
    emitted: list[SpeechTextPair] = []
    stats = AugmentationStats()
    if checkpoint is not None and checkpoint.exists():
        processed, emitted, stats = _load_checkpoint(checkpoint)
        log.info("resuming from checkpoint: %d samples already processed", len(processed))
    stats.selected = len(selection)

    pending = [(rank, pair) for rank, pair in selection if pair.id not in processed]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        for start in range(0, len(pending), CHECKPOINT_EVERY):
            batch = pending[start : start + CHECKPOINT_EVERY]
            try:
                outcomes = list(
                    pool.map(lambda item: _augment_one(manifest, plan, backend, *item), batch)
                )
            except BackendUnavailable:
                if checkpoint is not None:
                    _save_checkpoint(checkpoint, processed, emitted, stats)
                raise
            for (rank, pair), (outcome, child) in zip(batch, outcomes):
                processed.add(pair.id)
                if outcome == "emitted" and child is not None:
                    emitted.append(child)
                    stats.emitted += 1
                elif outcome == "skipped_short":
                    stats.skipped_short += 1
                else:
                    stats.dropped_empty += 1
            if checkpoint is not None:
                _save_checkpoint(checkpoint, processed, emitted, stats)
    return emitted, stats


# ---------------------------------------------------------------------------
# Mixed corpus emission
# ---------------------------------------------------------------------------

def emit_mixed_corpus(
    offline: Manifest,
    augmented: Sequence[SpeechTextPair],
    out_path: Union[str, Path],
    template_id: str = "default",
) -> int:
    """Write offline records followed by truncated ones as training JSONL.

    Each line is {"id", "audio_path", "prompt", "target", "kind"} plus
    "truncation_ms" for truncated records.  Returns the total count.
    """
    out_path = Path(out_path)

    def record_line(pair: SpeechTextPair) -> str:
        record: dict = {
            "id": pair.id,
            "audio_path": pair.audio_path,
            "prompt": render_prompt(template_id, pair.audio_path, offline.source_lang),
            "target": pair.target_text,
            "kind": pair.kind.value,
        }
        if pair.truncation_ms is not None:
            record["truncation_ms"] = pair.truncation_ms
        return json.dumps(record, ensure_ascii=False)

    count = 0
    try:
        with out_path.open("w", encoding="utf-8", newline="\n") as handle:
            for pair in offline.records:
                handle.write(record_line(pair) + "\n")
                count += 1
            for pair in augmented:
                handle.write(record_line(pair) + "\n")
                count += 1
    except OSError as exc:
        raise IoFailure(f"cannot write mixed corpus {out_path}: {exc}") from exc
    return count


# ---------------------------------------------------------------------------
# Simulation over manifests and the sweep harness
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SimResult:
    id: str
    hyp: str
    ref: str
    session: Optional[StreamSession]  # None for offline translation


def bleu_mode_for(target_lang: str) -> str:
    return "cjk_char" if target_lang.lower().startswith("zh") else "space"


def translate_manifest(
    manifest: Manifest,
    backend,
    *,
    chunk_ms: float,
    rollback: int = 0,
    max_new_tokens_per_step: int = 128,
    template_id: str = "default",
    jobs: Optional[int] = None,
) -> list[SimResult]:
    """Run every manifest record through the simulator (chunk_ms=inf: offline)."""

    def run_one(pair: SpeechTextPair) -> SimResult:
        clip = _load_clip(str(manifest.resolve_audio(pair)))
        provider = provider_for(backend, pair.id)
        prompt = render_prompt(template_id, pair.audio_path, manifest.source_lang)
        if math.isinf(chunk_ms):
            hyp = offline_translate(provider, clip, prompt, max_new_tokens=max_new_tokens_per_step)
            return SimResult(pair.id, hyp, pair.target_text, None)
        cfg = StreamConfig(
            chunk_ms=int(chunk_ms),
            rollback_tokens=rollback,
            max_new_tokens_per_step=max_new_tokens_per_step,
        )
        hyp, session = run_stream_session(provider, clip, prompt, cfg)
        return SimResult(pair.id, hyp, pair.target_text, session)

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(run_one, manifest.records))


@dataclass(frozen=True)
class SweepRow:
    model: str
    m: int
    chunk_ms: float
    rollback: int
    bleu: float


def run_sweep(
    manifest: Manifest,
    backend,
    *,
    m_values: Sequence[int],
    k_values: Sequence[float],
    b_values: Sequence[int],
    model_label: str = "model",
    max_new_tokens_per_step: int = 128,
    template_id: str = "default",
    jobs: Optional[int] = None,
) -> list[SweepRow]:
    """BLEU for every (m, k, b) grid cell over the evaluation manifest.

    The augmentation-size column m labels rows only; with a fixed backend
    the simulation depends on (k, b) alone, so those cells are computed
    once and reused across m values.
    """
    if not m_values or not k_values or not b_values:
        raise ValueError("sweep grids must be non-empty")
    mode = bleu_mode_for(manifest.target_lang)
    cache: dict[Tuple[float, int], float] = {}
    rows: list[SweepRow] = []
    for k in k_values:
        for b in b_values:
            key = (float(k), int(b))
            if key not in cache:
                results = translate_manifest(
                    manifest,
                    backend,
                    chunk_ms=float(k),
                    rollback=int(b),
                    max_new_tokens_per_step=max_new_tokens_per_step,
                    template_id=template_id,
                    jobs=jobs,
                )
                report = corpus_bleu(
                    [tokenize_for_bleu(r.hyp, mode) for r in results],
                    [tokenize_for_bleu(r.ref, mode) for r in results],
                )
                cache[key] = report.score
                log.info("sweep cell k=%s b=%d bleu=%.4f", format_chunk_ms(k), b, report.score)
    for m in m_values:
        for k in k_values:
            for b in b_values:
                rows.append(SweepRow(model_label, int(m), float(k), int(b), cache[(float(k), int(b))]))
    rows.sort(key=lambda r: (r.model, r.m, r.rollback, r.chunk_ms))
    return rows


def sweep_rows_to_csv(rows: Sequence[SweepRow]) -> str:
    """Grid-report CSV extended with the m column: model,m,chunk_ms,rollback,bleu."""
    lines = ["model,m,chunk_ms,rollback,bleu"]
    for row in rows:
        lines.append(
            f"{row.model},{row.m},{format_chunk_ms(row.chunk_ms)},{row.rollback},{float(row.bleu)}"
        )
    return "\n".join(lines) + "\n"
