"""Command-line entry point binding the pipeline stages.

Subcommands: augment (build the mixed training corpus), simulate (chunked
streaming inference over a manifest), evaluate (corpus BLEU), sweep (the
full m x k x b grid report with figures).  Machine output goes to files
and stdout only; structured logs go to stderr.

A TOML config file (--config FILE, flat key = value entries named after
the long flags) overlays defaults; explicit flags win over the file.

Exit codes: 0 ok, 2 usage/validation, 3 backend failure, 4 io failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib  # type: ignore[no-redef]

from . import corpus as corpus_mod
from .backend import load_synthetic_backend
from .domain import (
    BackendUnavailable,
    IoFailure,
    LengthMismatch,
    ProtocolViolation,
    SimulsaError,
    TruncationFamily,
    TruncationPolicy,
    validate_policy,
)
from .figures import render_sweep_figure, render_truncation_figure
from .http_backend import HttpBackend
from .metrics import (
    assemble_grid_report,
    contains_cjk,
    corpus_bleu,
    tokenize_for_bleu,
)
from .speculation import SpeculationConfig
from .streaming import step_records

log = logging.getLogger("simulsa.cli")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_IO = 4

_DIST_FAMILIES = {
    "beta": TruncationFamily.BETA_DECAY,
    "uniform": TruncationFamily.UNIFORM,
    "beta-full": TruncationFamily.BETA_DECAY_FULLSPAN,
    "beta-grid": TruncationFamily.BETA_DECAY_GRID,
}


# ---------------------------------------------------------------------------
# Argument parsing helpers
# ---------------------------------------------------------------------------

def _chunk_ms(text: str) -> float:
    if text.strip().lower() == "inf":
        return math.inf
    value = int(text)
    if value <= 0:
        raise ValueError(f"chunk-ms must be positive or 'inf', got {text!r}")
    return float(value)


def _int_list(text: str) -> list[int]:
    values = [int(part) for part in str(text).split(",") if part.strip()]
    if not values:
        raise ValueError(f"empty list {text!r}")
    return values


def _k_list(text: str) -> list[float]:
    values = [_chunk_ms(part) for part in str(text).split(",") if part.strip()]
    if not values:
        raise ValueError(f"empty list {text!r}")
    return values


def make_backend(uri: str, *, concurrency: int = 4):
    """Resolve --backend: 'synthetic:FILE' or an http(s) base URL."""
    if uri.startswith("synthetic:"):
        return load_synthetic_backend(uri[len("synthetic:"):])
    if uri.startswith("http://") or uri.startswith("https://"):
        return HttpBackend(uri, max_concurrency=concurrency)
    raise ValueError(f"backend must be 'synthetic:FILE' or an http(s) URL, got {uri!r}")


def _close_backend(backend) -> None:
    close = getattr(backend, "close", None)
    if callable(close):
        close()


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", default=None,
                        help="TOML file of flag defaults (explicit flags win)")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1,
                        help="worker parallelism (default: logical CPU count)")
    parser.add_argument("--backend-concurrency", type=int, default=4,
                        help="max in-flight backend requests")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="simulsa",
        description="Streaming speech-translation data augmentation and evaluation toolkit.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    formatter = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("augment", formatter_class=formatter,
                       help="build the mixed offline + truncated training corpus")
    p.add_argument("--manifest", required=True, help="offline manifest JSONL")
    p.add_argument("--out", required=True, help="mixed-corpus JSONL output path")
    p.add_argument("--m", type=int, default=3000, help="number of pairs to augment")
    p.add_argument("--l-ms", type=int, default=500, help="truncation interval lower bound (ms)")
    p.add_argument("--r-ms", type=int, default=5000, help="truncation interval upper bound (ms)")
    p.add_argument("--dist", choices=sorted(_DIST_FAMILIES), default="beta",
                   help="truncation distribution family")
    p.add_argument("--grid-step-ms", type=int, default=500, help="grid step for --dist beta-grid")
    p.add_argument("--tau", type=float, default=None,
                   help="rank threshold; default derives 100/vocab_size from the backend")
    p.add_argument("--backend", required=True, help="http(s) URL or synthetic:FILE")
    p.add_argument("--seed", type=int, default=0, help="selection and sampling seed")
    p.add_argument("--selection", choices=[m.value for m in corpus_mod.SelectionMode],
                   default=corpus_mod.SelectionMode.UNIFORM_RANDOM.value,
                   help="how the m parents are chosen")
    p.add_argument("--template", default="default", help="prompt template id")
    p.add_argument("--source-lang", default="en")
    p.add_argument("--target-lang", default="zh")
    p.add_argument("--stats-out", default=None, help="stats JSON path (default: OUT.stats.json)")
    p.add_argument("--checkpoint", default=None, help="resumable checkpoint path")
    p.add_argument("--figure", default=None, help="render the truncation-point histogram PNG here")
    _add_common(p)
    p.set_defaults(func=cmd_augment)

    p = sub.add_parser("simulate", formatter_class=formatter, help="chunked streaming inference over a manifest")
    p.add_argument("--manifest", required=True)
    p.add_argument("--backend", required=True, help="http(s) URL or synthetic:FILE")
    p.add_argument("--chunk-ms", type=_chunk_ms, required=True, help="chunk size in ms, or 'inf' for offline")
    p.add_argument("--rollback", type=int, default=0, help="tokens removed after each non-final step")
    p.add_argument("--out-hyps", required=True, help="hypotheses JSONL output path")
    p.add_argument("--out-log", default=None, help="per-step session log JSONL path")
    p.add_argument("--max-new-tokens-per-step", type=int, default=128)
    p.add_argument("--template", default="default")
    p.add_argument("--source-lang", default="en")
    p.add_argument("--target-lang", default="zh")
    _add_common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", formatter_class=formatter, help="corpus BLEU between hypothesis and reference files")
    p.add_argument("--hyps", required=True, help="hypotheses (JSONL with 'hyp', or plain lines)")
    p.add_argument("--refs", required=True, help="references (JSONL with 'ref'/'target_text', or plain lines)")
    p.add_argument("--tokenizer", choices=["space", "cjk_char", "auto"], default="auto",
                   help="auto picks cjk_char when references contain CJK text")
    p.add_argument("--out-csv", default=None, help="write a one-row grid report here")
    p.add_argument("--label", default="model", help="model label for the report row")
    p.add_argument("--chunk-ms", type=_chunk_ms, default=math.inf, help="chunk size for the report row")
    p.add_argument("--rollback", type=int, default=0, help="rollback for the report row")
    _add_common(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", formatter_class=formatter, help="BLEU over the m x k x b grid, CSV + figure")
    p.add_argument("--manifest", required=True)
    p.add_argument("--backend", required=True, help="http(s) URL or synthetic:FILE")
    p.add_argument("--m-list", type=_int_list, default=[1000, 2000, 3000],
                   help="augmentation sizes, comma-separated")
    p.add_argument("--k-list", type=_k_list, default=[500.0, 1000.0, 1500.0, 2000.0],
                   help="chunk sizes in ms ('inf' allowed), comma-separated")
    p.add_argument("--b-list", type=_int_list, default=[0, 3, 5],
                   help="rollback sizes, comma-separated")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--model-label", default="model")
    p.add_argument("--max-new-tokens-per-step", type=int, default=128)
    p.add_argument("--template", default="default")
    p.add_argument("--source-lang", default="en")
    p.add_argument("--target-lang", default="zh")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG next to the CSV")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def _inject_config(argv: list[str]) -> list[str]:
    """Expand --config FILE into flag tokens placed before the explicit flags."""
    config_path: Optional[str] = None
    rest: list[str] = []
    i = 0
    while i < len(argv):
        token = argv[i]
        if token == "--config":
            if i + 1 >= len(argv):
                rest.append(token)  # let argparse report the missing value
                i += 1
                continue
            config_path = argv[i + 1]
            i += 2
        elif token.startswith("--config="):
            config_path = token.split("=", 1)[1]
            i += 1
        else:
            rest.append(token)
            i += 1
    if config_path is None:
        return rest
    try:
        with open(config_path, "rb") as handle:
            cfg = tomllib.load(handle)
    except OSError as exc:
        raise IoFailure(f"cannot read config {config_path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ValueError(f"malformed config {config_path}: {exc}") from exc
    tokens: list[str] = []
    for key, value in cfg.items():
        flag = "--" + str(key).replace("_", "-")
        if isinstance(value, bool):
            if value:
                tokens.append(flag)
            continue
        if isinstance(value, list):
            value = ",".join(str(v) for v in value)
        tokens.extend([flag, str(value)])
    # insert right after the subcommand so explicit flags override (last wins)
    for pos, token in enumerate(rest):
        if not token.startswith("-"):
            return rest[: pos + 1] + tokens + rest[pos + 1 :]
    return rest + tokens


# ---------------------------------------------------------------------------
# File helpers
# ---------------------------------------------------------------------------

def _read_eval_file(path: str, keys: Sequence[str]) -> list[tuple[Optional[str], str]]:
    """(id, text) rows from a JSONL file (first matching key) or plain lines."""
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    first = next((ln for ln in lines if ln.strip()), None)
    if first is None:
        return []
    if not first.lstrip().startswith("{"):
        return [(None, line) for line in lines]
    rows: list[tuple[Optional[str], str]] = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        record = json.loads(line)
        for key in keys:
            if key in record:
                rows.append((record.get("id"), str(record[key])))
                break
        else:
            raise ValueError(f"{path}:{lineno}: none of {list(keys)} present")
    return rows


def _write_text(path: str, text: str) -> None:
    try:
        Path(path).write_text(text, encoding="utf-8", newline="\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_augment(args: argparse.Namespace) -> int:
    policy = TruncationPolicy(
        family=_DIST_FAMILIES[args.dist],
        l_ms=args.l_ms,
        r_ms=args.r_ms,
        grid_step_ms=args.grid_step_ms,
    )
    validate_policy(policy)
    plan = corpus_mod.AugmentationPlan(
        m=args.m,
        policy=policy,
        spec_cfg=SpeculationConfig(tau=args.tau, prompt_template_id=args.template),
        seed=args.seed,
        selection=corpus_mod.SelectionMode(args.selection),
    )
    manifest = corpus_mod.load_manifest(args.manifest, args.source_lang, args.target_lang)
    corpus_mod.validate_manifest(manifest)
    backend = make_backend(args.backend, concurrency=args.backend_concurrency)
    try:
        augmented, stats = corpus_mod.run_augmentation(
            manifest, plan, backend, jobs=args.jobs, checkpoint_path=args.checkpoint
        )
    finally:
        _close_backend(backend)
    total = corpus_mod.emit_mixed_corpus(manifest, augmented, args.out, template_id=args.template)
    stats_path = args.stats_out or f"{args.out}.stats.json"
    payload = dict(stats.as_dict(), total_records=total, offline_records=len(manifest.records))
    _write_text(stats_path, json.dumps(payload, indent=2) + "\n")
    if args.figure:
        points = [p.truncation_ms for p in augmented if p.truncation_ms is not None]
        render_truncation_figure(policy, points, args.figure)
        log.info("figure written to %s", args.figure)
    log.info(
        "augment done: %d offline + %d truncated -> %s (stats: %s)",
        len(manifest.records), stats.emitted, args.out, stats_path,
    )
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    if args.rollback < 0:
        raise ValueError(f"rollback must be >= 0, got {args.rollback}")
    manifest = corpus_mod.load_manifest(args.manifest, args.source_lang, args.target_lang)
    corpus_mod.validate_manifest(manifest)
    backend = make_backend(args.backend, concurrency=args.backend_concurrency)
    try:
        results = corpus_mod.translate_manifest(
            manifest,
            backend,
            chunk_ms=args.chunk_ms,
            rollback=args.rollback,
            max_new_tokens_per_step=args.max_new_tokens_per_step,
            template_id=args.template,
            jobs=args.jobs,
        )
    finally:
        _close_backend(backend)
    hyp_lines = [
        json.dumps({"id": r.id, "hyp": r.hyp, "ref": r.ref}, ensure_ascii=False) for r in results
    ]
    _write_text(args.out_hyps, "\n".join(hyp_lines) + ("\n" if hyp_lines else ""))
    if args.out_log:
        log_lines = []
        for result in results:
            if result.session is None:
                continue
            for record in step_records(result.session, sample_id=result.id):
                log_lines.append(json.dumps(record, ensure_ascii=False))
        _write_text(args.out_log, "\n".join(log_lines) + ("\n" if log_lines else ""))
    log.info("simulate done: %d samples -> %s", len(results), args.out_hyps)
    return EXIT_OK


def cmd_evaluate(args: argparse.Namespace) -> int:
    hyp_rows = _read_eval_file(args.hyps, ("hyp", "target_text", "ref"))
    ref_rows = _read_eval_file(args.refs, ("ref", "target_text", "hyp"))
    if len(hyp_rows) != len(ref_rows):
        raise LengthMismatch(f"{len(hyp_rows)} hypotheses vs {len(ref_rows)} references")
    if hyp_rows and all(rid is not None for rid, _ in ref_rows) and all(
        rid is not None for rid, _ in hyp_rows
    ):
        by_id = dict(ref_rows)
        if set(by_id) == {rid for rid, _ in hyp_rows}:
            ref_rows = [(rid, by_id[rid]) for rid, _ in hyp_rows]
    mode = args.tokenizer
    if mode == "auto":
        mode = "cjk_char" if any(contains_cjk(text) for _, text in ref_rows) else "space"
    report = corpus_bleu(
        [tokenize_for_bleu(text, mode) for _, text in hyp_rows],
        [tokenize_for_bleu(text, mode) for _, text in ref_rows],
    )
    print(f"{report.score:.4f}")
    log.info(
        "bleu=%.4f bp=%.4f precisions=%s hyp_len=%d ref_len=%d tokenizer=%s",
        report.score, report.brevity_penalty,
        "/".join(f"{p:.4f}" for p in report.ngram_precisions),
        report.hyp_len, report.ref_len, mode,
    )
    if args.out_csv:
        _write_text(
            args.out_csv,
            assemble_grid_report([(args.label, args.chunk_ms, args.rollback, round(report.score, 4))]),
        )
    return EXIT_OK


def cmd_sweep(args: argparse.Namespace) -> int:
    manifest = corpus_mod.load_manifest(args.manifest, args.source_lang, args.target_lang)
    corpus_mod.validate_manifest(manifest)
    backend = make_backend(args.backend, concurrency=args.backend_concurrency)
    try:
        rows = corpus_mod.run_sweep(
            manifest,
            backend,
            m_values=args.m_list,
            k_values=args.k_list,
            b_values=args.b_list,
            model_label=args.model_label,
            max_new_tokens_per_step=args.max_new_tokens_per_step,
            template_id=args.template,
            jobs=args.jobs,
        )
    finally:
        _close_backend(backend)
    _write_text(args.out_csv, corpus_mod.sweep_rows_to_csv(rows))
    log.info("sweep done: %d rows -> %s", len(rows), args.out_csv)
    if not args.no_figure:
        figure_path = Path(args.out_csv).with_suffix(".png")
        render_sweep_figure(rows, figure_path)
        log.info("figure written to %s", figure_path)
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def main(argv: Optional[Sequence[str]] = None) -> int:
    logging.basicConfig(
        stream=sys.stderr,
        level=logging.INFO,
        format="%(levelname)s %(name)s %(message)s",
        force=True,
    )
    raw = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(_inject_config(raw))
        return args.func(args)
    except (BackendUnavailable, ProtocolViolation) as exc:
        log.error("backend failure: %s", exc)
        return EXIT_BACKEND
    except IoFailure as exc:
        log.error("io failure: %s", exc)
        return EXIT_IO
    except OSError as exc:
        log.error("io failure: %s", exc)
        return EXIT_IO
    except (SimulsaError, ValueError) as exc:
        log.error("validation failure: %s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
