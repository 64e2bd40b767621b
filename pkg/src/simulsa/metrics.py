"""Corpus-level BLEU and grid-report assembly.

BLEU uses modified n-gram precisions (n=1..4) with clipped counts summed
over the whole corpus, the standard brevity penalty, and no smoothing: a
zero precision at any order zeroes the score.  Chinese targets are scored
at character level via the cjk_char tokenizer.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

from .domain import LengthMismatch

# CJK ideographs plus CJK punctuation and fullwidth forms; each such
# codepoint becomes its own token in cjk_char mode.
_CJK_RANGES = (
    (0x3000, 0x303F),
    (0x3400, 0x4DBF),
    (0x4E00, 0x9FFF),
    (0xF900, 0xFAFF),
    (0xFF00, 0xFFEF),
    (0x20000, 0x2FA1F),
)


def _is_cjk(ch: str) -> bool:
    cp = ord(ch)
    return any(lo <= cp <= hi for lo, hi in _CJK_RANGES)


def contains_cjk(text: str) -> bool:
    return any(_is_cjk(ch) for ch in text)


def tokenize_for_bleu(text: str, mode: str = "cjk_char") -> list[str]:
    """Split text into scoring tokens.

    space: whitespace split only.  cjk_char: every CJK codepoint is
    isolated as its own token first, then the rest splits on whitespace.
    """
    if mode == "space":
        return text.split()
    if mode == "cjk_char":
        out = []
        for ch in text:
            if _is_cjk(ch):
                out.append(" ")
                out.append(ch)
                out.append(" ")
            else:
                out.append(ch)
        return "".join(out).split()
    raise ValueError(f"unknown tokenizer mode {mode!r}")


def detokenize(tokens: Sequence[str]) -> str:
    """Inverse of tokenization for display: spaces only between non-CJK neighbours."""
    parts: list[str] = []
    for i, tok in enumerate(tokens):
        if i > 0 and not _is_cjk(tokens[i - 1][-1:]) and not _is_cjk(tok[:1]):
            parts.append(" ")
        parts.append(tok)
    return "".join(parts)


@dataclass(frozen=True)
class BleuReport:
    score: float
    ngram_precisions: Tuple[float, float, float, float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int


def _ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def corpus_bleu(
    hyps: Sequence[Sequence[str]],
    refs: Sequence[Sequence[str]],
) -> BleuReport:
    """Corpus BLEU over pre-tokenized hypothesis/reference pairs (one ref each)."""
    if len(hyps) != len(refs):
        raise LengthMismatch(f"{len(hyps)} hypotheses vs {len(refs)} references")
    if not hyps:
        raise LengthMismatch("empty corpus")

    matched = [0, 0, 0, 0]
    total = [0, 0, 0, 0]
    hyp_len = 0
    ref_len = 0
    for hyp, ref in zip(hyps, refs):
        hyp_len += len(hyp)
        ref_len += len(ref)
        for n in range(1, 5):
            hyp_grams = _ngram_counts(hyp, n)
            if not hyp_grams:
                continue
            ref_grams = _ngram_counts(ref, n)
            total[n - 1] += sum(hyp_grams.values())
            matched[n - 1] += sum(min(c, ref_grams[g]) for g, c in hyp_grams.items())

    precisions = tuple(m / t if t > 0 else 0.0 for m, t in zip(matched, total))
    if hyp_len == 0 or hyp_len >= ref_len:
        # hyp_len == 0 already zeroes the score through the precisions;
        # the penalty is pinned to 1 to stay within (0, 1].
        bp = 1.0
    else:
        bp = math.exp(1.0 - ref_len / hyp_len)
    if any(p == 0.0 for p in precisions):
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / 4.0) * 100.0
    return BleuReport(
        score=score,
        ngram_precisions=precisions,  # type: ignore[arg-type]
        brevity_penalty=bp,
        hyp_len=hyp_len,
        ref_len=ref_len,
    )


def format_chunk_ms(k: float) -> str:
    return "inf" if math.isinf(float(k)) else str(int(k))


def assemble_grid_report(rows: Iterable[Tuple[str, float, int, float]]) -> str:
    """CSV for (model_label, chunk_ms, rollback, bleu) rows.

    chunk_ms may be float('inf') for the offline setting, encoded as
    "inf"; rows are sorted by (model, rollback, chunk).  UTF-8, LF line
    endings, trailing newline.
    """
    lines = ["model,chunk_ms,rollback,bleu"]
    ordered = sorted(rows, key=lambda r: (r[0], r[2], float(r[1])))
    for model, k, b, bleu in ordered:
        lines.append(f"{model},{format_chunk_ms(k)},{b},{float(bleu)}")
    return "\n".join(lines) + "\n"
