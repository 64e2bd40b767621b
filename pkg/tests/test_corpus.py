import hashlib
import json
import math

import pytest

from simulsa import corpus as corpus_mod
from simulsa.backend import (
    SyntheticBackend,
    SyntheticOracleSpec,
    make_synthetic_provider,
)
from simulsa.corpus import (
    AugmentationPlan,
    SelectionMode,
    bleu_mode_for,
    emit_mixed_corpus,
    load_manifest,
    render_prompt,
    run_augmentation,
    run_sweep,
    select_pairs,
    sweep_rows_to_csv,
    translate_manifest,
    validate_manifest,
)
from simulsa.domain import BackendUnavailable, PairKind, UnknownTemplate
from simulsa.metrics import tokenize_for_bleu
from simulsa.truncation import child_rng, sample_truncation_point

from conftest import write_manifest, write_wav


class TestRenderPrompt:
    def test_default_template_exact(self):
        assert (
            render_prompt("default", "/a.wav", "en")
            == "<audio>/a.wav</audio>Detect the language and translate the speech into Mandarin: <|en|>"
        )

    def test_unknown_template(self):
        with pytest.raises(UnknownTemplate):
            render_prompt("nope", "/a.wav", "en")

    def test_placeholder_passed_verbatim(self):
        rendered = render_prompt("default", "dir with spaces/clip 1.wav", "en")
        assert "<audio>dir with spaces/clip 1.wav</audio>" in rendered


@pytest.fixture
def small_corpus(tmp_path):
    """Manifest of 5 pairs with per-id oracles covering skip/drop/emit paths."""
    clips = tmp_path / "clips"
    clips.mkdir()
    rows = [
        ("u0", 3000, "w0 w1 w2", (600, 1200, 1800)),
        ("u1", 400, "w0", (100,)),            # shorter than l: skipped
        ("u2", 8000, "w0 w1", (100, 200)),    # always fully ready
        ("u3", 2500, "", ()),                 # empty target: dropped
        ("u4", 2000, "你好", (9000, 9500)),   # never ready: dropped
    ]
    records = []
    per_id = {}
    for pair_id, duration, target, ready in rows:
        write_wav(clips / f"{pair_id}.wav", duration)
        records.append({"id": pair_id, "audio_path": f"clips/{pair_id}.wav", "target_text": target})
        tokens = tuple(tokenize_for_bleu(target, "cjk_char"))
        if tokens:
            per_id[pair_id] = make_synthetic_provider(
                SyntheticOracleSpec(tokens, ready, high_prob=0.9, vocab_size=1000)
            )
    manifest_path = write_manifest(tmp_path / "manifest.jsonl", records)
    backend = SyntheticBackend(
        default=make_synthetic_provider(SyntheticOracleSpec((), (), 0.9, 1000)),
        per_id=per_id,
    )
    return manifest_path, backend, dict((r[0], r) for r in rows)


class TestManifest:
    def test_load_and_resolve(self, small_corpus):
        manifest_path, _, _ = small_corpus
        manifest = load_manifest(manifest_path)
        assert len(manifest.records) == 5
        validate_manifest(manifest)

    def test_duplicate_ids_rejected(self, tmp_path):
        write_wav(tmp_path / "a.wav", 1000)
        path = write_manifest(
            tmp_path / "m.jsonl",
            [
                {"id": "a", "audio_path": "a.wav", "target_text": "x"},
                {"id": "a", "audio_path": "a.wav", "target_text": "y"},
            ],
        )
        with pytest.raises(ValueError):
            validate_manifest(load_manifest(path))

    def test_missing_audio_rejected(self, tmp_path):
        path = write_manifest(
            tmp_path / "m.jsonl", [{"id": "a", "audio_path": "gone.wav", "target_text": "x"}]
        )
        with pytest.raises(ValueError):
            validate_manifest(load_manifest(path))

    def test_malformed_record(self, tmp_path):
        path = tmp_path / "m.jsonl"
        path.write_text('{"id": "a"}\n')
        with pytest.raises(ValueError):
            load_manifest(path)


class TestSelection:
    def test_first_m(self, small_corpus):
        manifest = load_manifest(small_corpus[0])
        plan = AugmentationPlan(m=3, selection=SelectionMode.FIRST_M)
        assert [p.id for _, p in select_pairs(manifest, plan)] == ["u0", "u1", "u2"]

    def test_uniform_deterministic(self, small_corpus):
        manifest = load_manifest(small_corpus[0])
        plan = AugmentationPlan(m=3, seed=42)
        first = select_pairs(manifest, plan)
        second = select_pairs(manifest, plan)
        assert first == second

    def test_m_exceeds_manifest(self, small_corpus):
        manifest = load_manifest(small_corpus[0])
        with pytest.raises(ValueError):
            select_pairs(manifest, AugmentationPlan(m=6))

    def test_m_must_be_positive(self):
        with pytest.raises(ValueError):
            AugmentationPlan(m=0)


class TestRunAugmentation:
    def test_accounting_and_brute_force_targets(self, small_corpus):
        manifest_path, backend, rows = small_corpus
        manifest = load_manifest(manifest_path)
        plan = AugmentationPlan(m=5, seed=7, selection=SelectionMode.FIRST_M)
        augmented, stats = run_augmentation(manifest, plan, backend, jobs=2)

        assert stats.selected == 5
        assert stats.skipped_short == 1  # u1
        assert stats.emitted + stats.dropped_empty + stats.skipped_short + stats.failures == 5

        expected_targets = {}
        for rank, (_, pair) in enumerate(select_pairs(manifest, plan)):
            pair_id, duration, target, ready = rows[pair.id]
            unit = float(child_rng(plan.seed, 1, rank).random())
            draw = sample_truncation_point(plan.policy, duration, unit)
            if draw is None or not target:
                continue
            prefix = 0
            for i, a in enumerate(ready):
                if a <= draw.point_ms:
                    prefix = i + 1
                else:
                    break
            if prefix == 0:
                continue
            tokens = tokenize_for_bleu(target, "cjk_char")[:prefix]
            expected_targets[pair_id] = (draw.point_ms, tokens)

        assert stats.emitted == len(expected_targets)
        for child in augmented:
            parent_id = child.id.split("#", 1)[0]
            point, tokens = expected_targets[parent_id]
            assert child.kind is PairKind.TRUNCATED
            assert child.truncation_ms == point
            assert tokenize_for_bleu(child.target_text, "cjk_char") == tokens
            assert 500 <= child.truncation_ms <= min(5000, rows[parent_id][1])

    def test_reproducible(self, small_corpus):
        manifest_path, backend, _ = small_corpus
        manifest = load_manifest(manifest_path)
        plan = AugmentationPlan(m=5, seed=11)
        first, _ = run_augmentation(manifest, plan, backend, jobs=4)
        second, _ = run_augmentation(manifest, plan, backend, jobs=1)
        assert first == second

    def test_checkpoint_resume(self, small_corpus, tmp_path, monkeypatch):
        manifest_path, backend, _ = small_corpus
        manifest = load_manifest(manifest_path)
        plan = AugmentationPlan(m=5, seed=3, selection=SelectionMode.FIRST_M)
        monkeypatch.setattr(corpus_mod, "CHECKPOINT_EVERY", 2)

        class FlakyBackend:
            def __init__(self, inner, fail_ids):
                self.inner = inner
                self.fail_ids = set(fail_ids)

            def provider_for(self, sample_id):
                if sample_id in self.fail_ids:
                    raise BackendUnavailable(f"outage for {sample_id}")
                return self.inner.provider_for(sample_id)

        checkpoint = tmp_path / "ckpt.json"
        with pytest.raises(BackendUnavailable):
            run_augmentation(
                manifest,
                plan,
                FlakyBackend(backend, {"u4"}),
                jobs=1,
                checkpoint_path=checkpoint,
            )
        assert checkpoint.exists()
        resumed, stats = run_augmentation(
            manifest, plan, backend, jobs=1, checkpoint_path=checkpoint
        )
        clean, clean_stats = run_augmentation(manifest, plan, backend, jobs=1)
        assert resumed == clean
        assert stats.as_dict() == clean_stats.as_dict()


class TestEmitMixedCorpus:
    def test_counts_and_order(self, small_corpus, tmp_path):
        manifest_path, backend, _ = small_corpus
        manifest = load_manifest(manifest_path)
        plan = AugmentationPlan(m=5, seed=7, selection=SelectionMode.FIRST_M)
        augmented, stats = run_augmentation(manifest, plan, backend)
        out = tmp_path / "mixed.jsonl"
        total = emit_mixed_corpus(manifest, augmented, out)
        lines = out.read_text(encoding="utf-8").splitlines()
        assert total == len(lines) == 5 + stats.emitted
        heads = [json.loads(line) for line in lines]
        assert [h["kind"] for h in heads] == ["offline"] * 5 + ["truncated"] * stats.emitted
        for head in heads:
            assert set(head) >= {"id", "audio_path", "prompt", "target", "kind"}
            if head["kind"] == "truncated":
                assert "truncation_ms" in head
            else:
                assert "truncation_ms" not in head

    def test_empty_augmentation_copies_offline(self, small_corpus, tmp_path):
        manifest = load_manifest(small_corpus[0])
        out = tmp_path / "mixed.jsonl"
        total = emit_mixed_corpus(manifest, [], out)
        lines = out.read_text(encoding="utf-8").splitlines()
        assert total == len(lines) == 5
        records = [json.loads(line) for line in lines]
        assert [r["id"] for r in records] == [p.id for p in manifest.records]
        assert all(r["kind"] == "offline" for r in records)

    def test_byte_identical_rerun(self, small_corpus, tmp_path):
        manifest_path, backend, _ = small_corpus
        manifest = load_manifest(manifest_path)
        plan = AugmentationPlan(m=5, seed=13)
        digests = []
        for name in ("a.jsonl", "b.jsonl"):
            augmented, _ = run_augmentation(manifest, plan, backend)
            out = tmp_path / name
            emit_mixed_corpus(manifest, augmented, out)
            digests.append(hashlib.sha256(out.read_bytes()).hexdigest())
        assert digests[0] == digests[1]


class TestTranslateAndSweep:
    def test_offline_equals_big_chunk(self, small_corpus):
        manifest_path, backend, _ = small_corpus
        manifest = load_manifest(manifest_path)
        offline = translate_manifest(manifest, backend, chunk_ms=math.inf)
        big = translate_manifest(manifest, backend, chunk_ms=10_000)
        assert [r.hyp for r in offline] == [r.hyp for r in big]
        assert all(r.session is None for r in offline)

    def test_sweep_grid_shape(self, small_corpus):
        manifest_path, backend, _ = small_corpus
        manifest = load_manifest(manifest_path)
        rows = run_sweep(
            manifest,
            backend,
            m_values=[3000],
            k_values=[500, 1000, 1500, 2000, 3000, 4000],
            b_values=[0, 3, 5],
        )
        assert len(rows) == 18
        csv = sweep_rows_to_csv(rows)
        lines = csv.splitlines()
        assert lines[0] == "model,m,chunk_ms,rollback,bleu"
        assert len(lines) == 19

    def test_sweep_includes_offline_rows(self, small_corpus):
        manifest_path, backend, _ = small_corpus
        manifest = load_manifest(manifest_path)
        rows = run_sweep(
            manifest, backend, m_values=[1000], k_values=[500, math.inf], b_values=[0]
        )
        assert any(math.isinf(r.chunk_ms) for r in rows)
        assert ",inf,0," in sweep_rows_to_csv(rows)

    def test_bleu_non_decreasing_in_k_without_rollback(self, small_corpus):
        manifest_path, backend, _ = small_corpus
        manifest = load_manifest(manifest_path)
        rows = run_sweep(
            manifest, backend, m_values=[1], k_values=[500, 1000, 2000, 4000], b_values=[0]
        )
        scores = [r.bleu for r in sorted(rows, key=lambda r: r.chunk_ms)]
        assert scores == sorted(scores)

    def test_empty_grid_rejected(self, small_corpus):
        manifest_path, backend, _ = small_corpus
        manifest = load_manifest(manifest_path)
        with pytest.raises(ValueError):
            run_sweep(manifest, backend, m_values=[], k_values=[500], b_values=[0])

    def test_bleu_mode_for(self):
        assert bleu_mode_for("zh") == "cjk_char"
        assert bleu_mode_for("zh-CN") == "cjk_char"
        assert bleu_mode_for("en") == "space"
