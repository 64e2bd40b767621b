import math

import numpy as np
import pytest

from simulsa.backend import make_synthetic_provider
from simulsa.domain import BackendUnavailable, PairKind, SpeechTextPair, TokenScore
from simulsa.metrics import tokenize_for_bleu
from simulsa.speculation import (
    SpeculationConfig,
    StopReason,
    build_truncated_pair,
    speculate_prefix,
    termination_check,
)

from conftest import make_clip, random_oracle_spec


def score(p_cand: float, count: int, p_eos: float, vocab: int) -> TokenScore:
    return TokenScore(math.log(p_cand), count, math.log(p_eos), vocab)


class TestTerminationCheck:
    def test_eos_dominates(self):
        assert termination_check(score(0.01, 0, 0.02, 1000), tau=0.1) is True

    def test_rank_exceeds_tau(self):
        assert termination_check(score(0.30, 150, 0.001, 1000), tau=0.1) is True

    def test_neither_condition(self):
        assert termination_check(score(0.30, 0, 0.001, 1000), tau=0.1) is False

    def test_strict_at_tau_boundary(self):
        tau = 100 / 151_646
        assert termination_check(score(0.30, 100, 0.001, 151_646), tau=tau) is False
        assert termination_check(score(0.30, 101, 0.001, 151_646), tau=tau) is True

    def test_rejects_non_positive_tau(self):
        with pytest.raises(ValueError):
            termination_check(score(0.5, 0, 0.1, 100), tau=0.0)


class ScriptedProvider:
    """Replays a fixed score sequence; raises after the script runs out."""

    def __init__(self, scores, fail_after=None):
        self.scores = list(scores)
        self.fail_after = fail_after
        self.calls = 0

    def score_next(self, req):
        if self.fail_after is not None and self.calls >= self.fail_after:
            raise BackendUnavailable("scripted outage")
        item = self.scores[self.calls]
        self.calls += 1
        return item

    def generate(self, req):
        raise NotImplementedError


class TestSpeculatePrefix:
    def test_oracle_cut_mid_sequence(self, three_token_oracle):
        result = speculate_prefix(
            three_token_oracle, make_clip(1500), ["y1", "y2", "y3"], SpeculationConfig()
        )
        assert result.prefix_len == 2
        assert result.stop_reason is StopReason.EOS_DOMINATES
        assert len(result.per_step_scores) == 3

    def test_oracle_cut_before_first_token(self, three_token_oracle):
        result = speculate_prefix(
            three_token_oracle, make_clip(500), ["y1", "y2", "y3"], SpeculationConfig()
        )
        assert result.prefix_len == 0

    def test_oracle_full_information(self, three_token_oracle):
        result = speculate_prefix(
            three_token_oracle, make_clip(1800), ["y1", "y2", "y3"], SpeculationConfig()
        )
        assert result.prefix_len == 3
        assert result.stop_reason is StopReason.EXHAUSTED_TARGET

    def test_rank_stop_reason(self):
        provider = ScriptedProvider(
            [score(0.3, 0, 0.01, 1000), score(0.3, 500, 0.01, 1000)]
        )
        result = speculate_prefix(provider, make_clip(100), ["a", "b"], SpeculationConfig(tau=0.1))
        assert result.prefix_len == 1
        assert result.stop_reason is StopReason.RANK_EXCEEDS_TAU

    def test_derived_tau_boundary(self):
        # tau defaults to 100 / vocab_size; count 100 passes, count 101 stops
        passing = ScriptedProvider([score(0.3, 100, 0.001, 151_646)] * 2)
        result = speculate_prefix(passing, make_clip(100), ["a", "b"], SpeculationConfig())
        assert result.prefix_len == 2
        stopping = ScriptedProvider([score(0.3, 101, 0.001, 151_646)])
        result = speculate_prefix(stopping, make_clip(100), ["a", "b"], SpeculationConfig())
        assert result.prefix_len == 0

    def test_tau_monotonicity_on_fixed_scores(self):
        scores = [
            score(0.3, 5, 0.01, 1000),
            score(0.3, 40, 0.01, 1000),
            score(0.3, 200, 0.01, 1000),
        ]
        lengths = []
        for tau in (0.001, 0.01, 0.05, 0.25, 0.9):
            provider = ScriptedProvider(scores)
            result = speculate_prefix(
                provider, make_clip(100), ["a", "b", "c"], SpeculationConfig(tau=tau)
            )
            lengths.append(result.prefix_len)
        assert lengths == sorted(lengths)

    def test_empty_target_rejected(self, three_token_oracle):
        with pytest.raises(ValueError):
            speculate_prefix(three_token_oracle, make_clip(1000), [], SpeculationConfig())

    def test_partial_scores_on_outage(self):
        provider = ScriptedProvider([score(0.3, 0, 0.01, 1000)] * 2, fail_after=2)
        with pytest.raises(BackendUnavailable) as excinfo:
            speculate_prefix(provider, make_clip(100), ["a", "b", "c"], SpeculationConfig(tau=0.5))
        assert len(excinfo.value.partial_scores) == 2

    def test_cut_point_monotonicity(self, three_token_oracle):
        lengths = [
            speculate_prefix(
                three_token_oracle, make_clip(cut), ["y1", "y2", "y3"], SpeculationConfig()
            ).prefix_len
            for cut in (300, 600, 900, 1200, 1500, 1800, 2500)
        ]
        assert lengths == sorted(lengths)
        assert lengths[0] == 0 and lengths[-1] == 3

    def test_brute_force_equivalence_sample(self):
        rng = np.random.default_rng(7)
        for _ in range(40):
            spec = random_oracle_spec(rng)
            provider = make_synthetic_provider(spec)
            cut = int(rng.integers(50, 4500))
            result = speculate_prefix(
                provider,
                make_clip(cut, rate=1000),
                list(spec.target_tokens),
                SpeculationConfig(),
            )
            expected = max(
                (i + 1 for i in range(len(spec.ready_at_ms))
                 if all(a <= cut for a in spec.ready_at_ms[: i + 1])),
                default=0,
            )
            assert result.prefix_len == expected


class TestBuildTruncatedPair:
    PARENT = SpeechTextPair(id="p1", audio_path="clips/p1.wav", target_text="the cat sat on mat")

    def result(self, n, total=5):
        reason = StopReason.EXHAUSTED_TARGET if n == total else StopReason.EOS_DOMINATES
        return type("R", (), {"prefix_len": n, "stop_reason": reason, "per_step_scores": ()})()

    def test_prefix_of_two(self):
        pair = build_truncated_pair(self.PARENT, 1200, self.result(2))
        assert pair.target_text == "the cat"
        assert pair.kind is PairKind.TRUNCATED
        assert pair.truncation_ms == 1200
        assert pair.audio_path == self.PARENT.audio_path
        assert pair.id != self.PARENT.id

    def test_empty_prefix_drops(self):
        assert build_truncated_pair(self.PARENT, 800, self.result(0)) is None

    def test_full_prefix_keeps_whole_target(self):
        pair = build_truncated_pair(self.PARENT, 4000, self.result(5))
        assert pair.target_text == self.PARENT.target_text
        assert pair.kind is PairKind.TRUNCATED

    def test_cjk_prefix(self):
        parent = SpeechTextPair(id="z", audio_path="z.wav", target_text="你好 world 再见")
        pair = build_truncated_pair(parent, 900, self.result(3, total=5))
        assert pair.target_text == "你好world"
        parent_tokens = tokenize_for_bleu(parent.target_text, "cjk_char")
        child_tokens = tokenize_for_bleu(pair.target_text, "cjk_char")
        assert child_tokens == parent_tokens[: len(child_tokens)]

    def test_target_always_token_prefix_of_parent(self):
        parent = SpeechTextPair(id="m", audio_path="m.wav", target_text="一 二 three four 五")
        total = len(tokenize_for_bleu(parent.target_text, "cjk_char"))
        for n in range(1, total + 1):
            pair = build_truncated_pair(parent, 700, self.result(n, total=total))
            child_tokens = tokenize_for_bleu(pair.target_text, "cjk_char")
            parent_tokens = tokenize_for_bleu(parent.target_text, "cjk_char")
            assert child_tokens == parent_tokens[:n]
