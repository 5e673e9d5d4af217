import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import naive_iou, naive_pearson, naive_spearman, naive_wer
from ttsfix.core import TextSequence, TimeScope
from ttsfix.errors import DegenerateInput, EmptyReference, UndefinedIou
from ttsfix.metrics import (MetricReport, corpus_wer, failure_rate, mean_iou, mse_clean, scope_iou, sys_srcc,
                            system_level_srcc, utt_pcc, wer, word_errors)


def T(text):
    return TextSequence.from_text(text)


def S(*pairs):
    return TimeScope.from_pairs(pairs)


class TestWer:
    def test_examples(self):
        assert wer(T("the cat sat"), T("the cat sat")) == 0.0
        assert wer(T("the cat sat on mat"), T("the cat on mat")) == 0.2
        assert wer(T("a"), T("b c")) == 2.0

    def test_counts(self):
        c = word_errors(T("a b c d"), T("a x c d e"))
        assert (c.substitutions, c.deletions, c.insertions, c.ref_words) == (1, 0, 1, 4)

    def test_empty_reference(self):
        with pytest.raises(EmptyReference):
            wer(T("."), T("a"))

    def test_corpus_wer_pools_words(self):
        pairs = [(T("a b"), T("a")), (T("c d e f"), T("c d e f"))]
        assert corpus_wer(pairs) == 1 / 6

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.sampled_from("abcd"), min_size=1, max_size=7),
           st.lists(st.sampled_from("abcd"), max_size=7),
           st.lists(st.sampled_from(",.!?"), max_size=3))
    def test_punctuation_invariance(self, ref, hyp, punct):
        base = wer(TextSequence.from_words(ref), TextSequence.from_words(hyp))
        noisy = TextSequence.from_words(list(ref) + list(punct))
        assert wer(noisy, TextSequence.from_words(list(punct) + list(hyp))) == base
        assert wer(TextSequence.from_words(ref), TextSequence.from_words(ref)) == 0.0


class TestIou:
    def test_examples(self):
        assert scope_iou(S((1, 2)), S((1, 2))) == 1.0
        assert scope_iou(S((1.0, 2.0)), S((1.5, 2.5))) == pytest.approx(1 / 3, abs=1e-15)
        assert scope_iou(S(), S((1, 2))) == 0.0
        with pytest.raises(UndefinedIou):
            scope_iou(S(), S())

    def test_mean_and_pooled(self):
        pairs = [(S((0, 1)), S((0, 1))), (S((0, 1)), S((0, 3)))]
        assert mean_iou(pairs) == pytest.approx((1 + 1 / 3) / 2)
        assert mean_iou(pairs, pooled=True) == pytest.approx(2 / 4)

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 50), st.integers(1, 20)), min_size=1, max_size=4),
           st.lists(st.tuples(st.integers(0, 50), st.integers(1, 20)), max_size=4))
    def test_symmetric_and_self_one(self, a, b):
        sa = S(*[(s / 10, (s + d) / 10) for s, d in a])
        sb = S(*[(s / 10, (s + d) / 10) for s, d in b])
        assert scope_iou(sa, sb) == scope_iou(sb, sa)
        assert scope_iou(sa, sa) == 1.0


class TestCorrelation:
    def test_closed_forms(self):
        assert utt_pcc([1, 2, 3], [2, 4, 6]) == 1.0
        assert utt_pcc([1, 2, 3], [3, 2, 1]) == -1.0
        assert utt_pcc([1, 2, 3, 4], [1, 3, 2, 4]) == pytest.approx(0.8, abs=1e-15)
        assert sys_srcc([1, 2, 3, 4], [10, 20, 30, 40]) == 1.0
        assert sys_srcc([1, 2, 3, 4], [4, 3, 2, 1]) == -1.0
        assert sys_srcc([1, 2, 3, 4], [2, 1, 4, 3]) == pytest.approx(0.6, abs=1e-15)

    def test_degenerate(self):
        with pytest.raises(DegenerateInput):
            utt_pcc([1, 1, 1], [1, 2, 3])
        with pytest.raises(DegenerateInput):
            sys_srcc([5, 5], [1, 2])

    def test_invariances(self, rng):
        for _ in range(50):
            x, y = rng.normal(size=12), rng.normal(size=12)
            a, b = rng.uniform(0.1, 5), rng.normal()
            assert abs(utt_pcc(a * x + b, y) - utt_pcc(x, y)) <= 1e-12
            assert abs(utt_pcc(x, a * y + b) - utt_pcc(x, y)) <= 1e-12
            assert sys_srcc(np.exp(x), y ** 3) == sys_srcc(x, y)

    def test_system_level_averages_first(self):
        pred = [1, 3, 5, 7, 2, 2]
        truth = [1, 1, 2, 2, 3, 3]
        systems = ["a", "a", "b", "b", "c", "c"]
        # system means: pred (2, 6, 2), truth (1, 2, 3)
        assert system_level_srcc(pred, truth, systems) == pytest.approx(naive_spearman([2, 6, 2], [1, 2, 3]))


class TestMseAndFailure:
    def test_mse_examples(self):
        assert mse_clean([[0.0, 0.0, 0.0]]) == 0.0
        assert mse_clean([0.1, 0.1]) == pytest.approx(0.01)
        assert mse_clean([[1.0]]) == 1.0
        assert mse_clean([[0.5], [0.0, 0.0, 0.0]]) == pytest.approx(0.0625)

    def test_failure_rate(self):
        assert failure_rate([(0.0, 9.0)] * 4, 0.0, 6.0) == 0.0
        assert failure_rate([(0.1, 9.0)] * 7 + [(0.0, 9.0)] * 43, 0.0, 6.0) == 0.14
        assert failure_rate([(0.0, 1.0)], 0.0, 1.0) == 0.0
        assert failure_rate([(0.2, 10.0), (0.0, 5.9)], 0.0, 6.0) == 1.0

    def test_report_validates(self):
        assert MetricReport(0.1, iou=0.5).to_dict()["iou"] == 0.5
        with pytest.raises(ValueError):
            MetricReport(0.1, iou=1.5)


class TestAgainstNaive:
    """Randomized comparison with the reference formulations (1e-12 absolute)."""

    def test_wer(self, rng):
        for _ in range(300):
            ref = list(rng.choice(list("abcde"), size=rng.integers(1, 9)))
            hyp = list(rng.choice(list("abcde"), size=rng.integers(0, 9)))
            got = wer(TextSequence.from_words(ref), TextSequence.from_words(hyp))
            assert abs(got - naive_wer(ref, hyp)) <= 1e-12

    def test_iou(self, rng):
        for _ in range(300):
            a = [(s / 8, (s + d) / 8) for s, d in rng.integers(1, 40, size=(rng.integers(1, 4), 2))]
            b = [(s / 8, (s + d) / 8) for s, d in rng.integers(1, 40, size=(rng.integers(1, 4), 2))]
            assert abs(scope_iou(S(*a), S(*b)) - naive_iou(a, b)) <= 1e-12

    def test_correlations(self, rng):
        for _ in range(300):
            n = int(rng.integers(3, 30))
            x, y = rng.normal(size=n), rng.normal(size=n)
            assert abs(utt_pcc(x, y) - naive_pearson(list(x), list(y))) <= 1e-12
            xi, yi = rng.integers(0, 5, size=n), rng.integers(0, 5, size=n)
            if len(set(xi)) > 1 and len(set(yi)) > 1:
                assert abs(sys_srcc(xi, yi) - naive_spearman(list(xi), list(yi))) <= 1e-12
            assert math.isfinite(sys_srcc(x, y))
