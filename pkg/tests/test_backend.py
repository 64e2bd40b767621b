import math

import numpy as np
import pytest

from simulsa.backend import (
    EOS_TOKEN,
    GenerateRequest,
    ScoreRequest,
    SyntheticBackend,
    SyntheticOracleSpec,
    load_synthetic_backend,
    make_synthetic_provider,
    provider_for,
    spec_from_dict,
    spec_to_dict,
)
from simulsa.domain import InvalidSpec

from conftest import make_clip, random_oracle_spec


class TestSpecValidation:
    def test_length_mismatch(self):
        with pytest.raises(InvalidSpec):
            SyntheticOracleSpec(("a", "b"), (100,))

    def test_decreasing_readiness(self):
        with pytest.raises(InvalidSpec):
            SyntheticOracleSpec(("a", "b"), (500, 400))

    def test_high_prob_bounds(self):
        with pytest.raises(InvalidSpec):
            SyntheticOracleSpec(("a",), (100,), high_prob=1.0)
        with pytest.raises(InvalidSpec):
            SyntheticOracleSpec(("a",), (100,), high_prob=0.0005, vocab_size=1000)

    def test_eos_not_a_target(self):
        with pytest.raises(InvalidSpec):
            SyntheticOracleSpec((EOS_TOKEN,), (100,))

    def test_dict_round_trip(self):
        spec = SyntheticOracleSpec(("a", "b"), (100, 200), high_prob=0.8, vocab_size=500)
        assert spec_from_dict(spec_to_dict(spec)) == spec


class TestScoreNext:
    def test_ready_candidate_is_argmax(self, three_token_oracle):
        score = three_token_oracle.score_next(
            ScoreRequest("", make_clip(1500), ("y1",), "y2")
        )
        assert score.strictly_greater_count == 0
        assert score.candidate_logprob == pytest.approx(math.log(0.9))
        assert score.candidate_logprob > score.eos_logprob
        assert score.vocab_size == 1000

    def test_unready_candidate_loses_to_eos(self, three_token_oracle):
        # a3 = 1800 > 1500: EOS is the argmax
        score = three_token_oracle.score_next(
            ScoreRequest("", make_clip(1500), ("y1", "y2"), "y3")
        )
        assert score.candidate_logprob < score.eos_logprob
        assert score.strictly_greater_count == 1

    def test_first_token_not_ready(self, three_token_oracle):
        score = three_token_oracle.score_next(ScoreRequest("", make_clip(500), (), "y1"))
        assert score.candidate_logprob < score.eos_logprob

    def test_off_script_prefix_is_eos_dominant(self, three_token_oracle):
        score = three_token_oracle.score_next(
            ScoreRequest("", make_clip(5000), ("not-a-target",), "y1")
        )
        assert score.candidate_logprob < score.eos_logprob

    def test_uniform_share_normalization(self):
        spec = SyntheticOracleSpec(("a",), (100,), high_prob=0.9, vocab_size=1000)
        provider = make_synthetic_provider(spec)
        score = provider.score_next(ScoreRequest("", make_clip(50), (), "other"))
        share = 0.1 / 999
        assert math.exp(score.candidate_logprob) == pytest.approx(share, rel=1e-12)
        total = spec.high_prob + (spec.vocab_size - 1) * share
        assert total == pytest.approx(1.0, abs=1e-9)


class TestGenerate:
    def test_partial_audio(self, three_token_oracle):
        tokens, finished = three_token_oracle.generate(
            GenerateRequest("", make_clip(1500), (), 16)
        )
        assert tokens == ["y1", "y2"]
        assert finished is True

    def test_full_audio(self, three_token_oracle):
        tokens, finished = three_token_oracle.generate(
            GenerateRequest("", make_clip(1800), (), 16)
        )
        assert tokens == ["y1", "y2", "y3"]
        assert finished is True

    def test_nothing_left(self, three_token_oracle):
        tokens, finished = three_token_oracle.generate(
            GenerateRequest("", make_clip(2000), ("y1", "y2", "y3"), 16)
        )
        assert tokens == []
        assert finished is True

    def test_budget_exhaustion(self, three_token_oracle):
        tokens, finished = three_token_oracle.generate(
            GenerateRequest("", make_clip(2000), (), 2)
        )
        assert tokens == ["y1", "y2"]
        assert finished is False

    def test_empty_target_spec(self):
        provider = make_synthetic_provider(SyntheticOracleSpec((), (), 0.9, 1000))
        tokens, finished = provider.generate(GenerateRequest("", make_clip(1000), (), 4))
        assert (tokens, finished) == ([], True)

    def test_first_generated_token_is_argmax_per_score(self):
        rng = np.random.default_rng(20240810)
        for _ in range(50):
            spec = random_oracle_spec(rng)
            provider = make_synthetic_provider(spec)
            clip = make_clip(int(rng.integers(100, 5000)), rate=1000)
            prefix_len = int(rng.integers(0, len(spec.target_tokens) + 1))
            prefix = spec.target_tokens[:prefix_len]
            tokens, _ = provider.generate(GenerateRequest("", clip, prefix, 32))
            if tokens:
                score = provider.score_next(ScoreRequest("", clip, prefix, tokens[0]))
                assert score.strictly_greater_count == 0

    def test_deterministic(self, three_token_oracle):
        req = GenerateRequest("", make_clip(1500), (), 16)
        assert three_token_oracle.generate(req) == three_token_oracle.generate(req)


class TestBackendResolution:
    def test_plain_provider_passthrough(self, three_token_oracle):
        assert provider_for(three_token_oracle, "any") is three_token_oracle

    def test_per_id_lookup(self, three_token_oracle):
        backend = SyntheticBackend(default=None, per_id={"a": three_token_oracle})
        assert provider_for(backend, "a") is three_token_oracle
        with pytest.raises(InvalidSpec):
            provider_for(backend, "missing")

    def test_default_fallback(self, three_token_oracle):
        backend = SyntheticBackend(default=three_token_oracle)
        assert provider_for(backend, "anything") is three_token_oracle


class TestLoadSyntheticBackend:
    def test_single_spec_file(self, tmp_path):
        path = tmp_path / "oracle.json"
        path.write_text(
            '{"target_tokens": ["a", "b"], "ready_at_ms": [100, 200], "high_prob": 0.8, "vocab_size": 500}'
        )
        backend = load_synthetic_backend(path)
        assert backend.default is not None
        assert backend.provider_for("anything").spec.vocab_size == 500

    def test_per_id_file(self, tmp_path):
        path = tmp_path / "oracle.json"
        path.write_text(
            '{"default": {"target_tokens": ["a"], "ready_at_ms": [100]},'
            ' "per_id": {"u1": {"target_tokens": ["x", "y"], "ready_at_ms": [50, 60]}}}'
        )
        backend = load_synthetic_backend(path)
        assert backend.provider_for("u1").spec.target_tokens == ("x", "y")
        assert backend.provider_for("other").spec.target_tokens == ("a",)

    def test_rejects_empty_corpus(self, tmp_path):
        path = tmp_path / "oracle.json"
        path.write_text("{}")
        with pytest.raises(InvalidSpec):
            load_synthetic_backend(path)
