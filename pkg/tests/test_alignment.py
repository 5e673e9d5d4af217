import itertools

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_min_cost, char_edit_distance, word_edit_distance
from ttsfix.alignment import (DEFAULT_COST, UNIT_COST, CostSpec, OpKind, default_word_cost, discrepancy_intervals,
                              dtw_align, levenshtein, map_discrepancies_to_words, unit_word_cost)
from ttsfix.core import Frame, SpeechTrack, TextSequence, TimeInterval, TimeScope, WordSegment
from ttsfix.errors import UnalignedWord

ALPHABET = ("aa", "ab", "ba", "bb")
words = st.lists(st.sampled_from(ALPHABET), max_size=5)


def test_identity_alignment():
    path, o = dtw_align(["a", "b", "c"], ["a", "b", "c"], UNIT_COST)
    assert path.total_cost == 0.0
    assert not o and o.is_empty
    assert [op.kind for op in o.ops] == [OpKind.MATCH] * 3


def test_single_substitution():
    path, o = dtw_align(["a", "b", "c"], ["a", "x", "c"], UNIT_COST)
    assert path.total_cost == 1.0
    assert [(op.kind, op.ref, op.hyp) for op in o.mismatches] == [(OpKind.SUBSTITUTE, 1, 1)]
    assert path.steps == ((0, 0), (1, 1), (2, 2), (3, 3))


def test_empty_hypothesis_deletes_everything():
    spec = CostSpec(unit_word_cost, insertion=1.0, deletion=0.75)
    path, o = dtw_align(["a", "b"], [], spec)
    assert path.total_cost == 1.5
    assert [(op.kind, op.ref) for op in o.ops] == [(OpKind.DELETE, 0), (OpKind.DELETE, 1)]


def test_both_empty():
    path, o = dtw_align([], [])
    assert path.total_cost == 0.0 and path.steps == ((0, 0),)
    assert not o


def test_tie_break_prefers_diagonal_then_delete():
    # substitute (1.0) and delete+insert (1.0) tie: the diagonal wins
    spec = CostSpec(unit_word_cost, insertion=0.5, deletion=0.5)
    path, o = dtw_align(["a"], ["b"], spec)
    assert path.total_cost == 1.0
    assert [op.kind for op in o.ops] == [OpKind.SUBSTITUTE]
    # a doubled word: backtracing from the end matches the later copy, so the
    # earlier copy is the insertion
    _, o = dtw_align(["a", "b"], ["a", "a", "b"], UNIT_COST)
    assert [(op.kind, op.ref, op.hyp) for op in o.ops] == [
        (OpKind.INSERT, None, 0), (OpKind.MATCH, 0, 1), (OpKind.MATCH, 1, 2)]
    # two substitutions tie with delete + match + insert
    _, o = dtw_align(["a", "b"], ["b", "c"], UNIT_COST)
    assert [op.kind for op in o.ops] == [OpKind.SUBSTITUTE, OpKind.SUBSTITUTE]
    _, o = dtw_align(["a", "b"], ["b"], UNIT_COST)
    assert [(op.kind, op.ref, op.hyp) for op in o.ops] == [(OpKind.DELETE, 0, None), (OpKind.MATCH, 1, 0)]


def test_punctuation_and_case_are_ignored():
    path, o = dtw_align(TextSequence.from_text("Hello, World!"), TextSequence.from_text("hello world"))
    assert path.total_cost == 0.0 and not o


class TestWordCost:
    def test_examples(self):
        assert default_word_cost("cat", "cat") == 0.0
        assert default_word_cost("cat", "bat") == pytest.approx(1 / 3)
        assert default_word_cost("a", "xyz") == 1.0

    @settings(max_examples=200, deadline=None)
    @given(st.text("abcd", max_size=6), st.text("abcd", max_size=6))
    def test_levenshtein_matches_oracle_and_is_symmetric(self, a, b):
        assert levenshtein(a, b) == char_edit_distance(a, b)
        if a and b:
            assert default_word_cost(a, b) == default_word_cost(b, a)
            assert (default_word_cost(a, b) == 0.0) == (a == b)


class TestOptimality:
    @settings(max_examples=300, deadline=None)
    @given(words, words)
    def test_matches_exhaustive_enumeration(self, ref, hyp):
        path, o = dtw_align(ref, hyp, DEFAULT_COST)
        assert path.total_cost == brute_min_cost(ref, hyp)

    @settings(max_examples=300, deadline=None)
    @given(words, words)
    def test_unit_cost_is_word_levenshtein(self, ref, hyp):
        path, _ = dtw_align(ref, hyp, UNIT_COST)
        assert path.total_cost == word_edit_distance(ref, hyp)

    @settings(max_examples=200, deadline=None)
    @given(words, words)
    def test_path_and_ops_are_consistent(self, ref, hyp):
        path, o = dtw_align(ref, hyp)
        assert path.steps[0] == (0, 0) and path.steps[-1] == (len(ref), len(hyp))
        for (i0, j0), (i1, j1) in zip(path.steps, path.steps[1:]):
            assert (i1 - i0, j1 - j0) in {(1, 1), (1, 0), (0, 1)}
        assert [op.ref for op in o.ops if op.ref is not None] == list(range(len(ref)))
        assert [op.hyp for op in o.ops if op.hyp is not None] == list(range(len(hyp)))
        assert sum(op.cost for op in o.ops) == pytest.approx(path.total_cost)
        for op in o.ops:
            assert (op.kind is OpKind.MATCH) == (op.cost == 0.0)

    def test_all_short_pairs_exhaustively(self):
        for n, m in itertools.product(range(4), repeat=2):
            for ref in itertools.product(ALPHABET[:3], repeat=n):
                for hyp in itertools.product(ALPHABET[:3], repeat=m):
                    assert dtw_align(ref, hyp)[0].total_cost == brute_min_cost(ref, hyp)


def _track(segments, n_frames=200, hop=0.02):
    segs = tuple(WordSegment(k, TimeInterval(s, e)) for k, (s, e) in enumerate(segments))
    return SpeechTrack(tuple(Frame("x") for _ in range(n_frames)), hop, segs)


class TestDiscrepancyMapping:
    def test_empty(self):
        _, o = dtw_align(["a", "b"], ["a", "b"])
        assert map_discrepancies_to_words(o, TextSequence.from_words(["a", "b"]), _track([(0, 1), (1, 2)])) == TimeScope()

    def test_substitution_maps_to_word_segment(self):
        ref = TextSequence.from_words(["w", "x", "y"])
        track = _track([(0.0, 0.5), (1.0, 1.6), (2.0, 2.5)])
        _, o = dtw_align(ref, ["w", "zz", "y"], UNIT_COST)
        assert map_discrepancies_to_words(o, ref, track) == TimeScope.from_pairs([(1.0, 1.6)])

    def test_insert_maps_to_gap_between_neighbors(self):
        ref = TextSequence.from_words(["p", "q", "r", "s"])
        track = _track([(0.0, 0.5), (0.5, 1.0), (1.0, 1.6), (2.4, 3.0)])
        _, o = dtw_align(ref, ["p", "q", "r", "zz", "s"], UNIT_COST)
        assert [op.kind for op in o.mismatches] == [OpKind.INSERT]
        assert map_discrepancies_to_words(o, ref, track) == TimeScope.from_pairs([(1.6, 2.4)])

    def test_insert_without_gap_uses_neighbors(self):
        ref = TextSequence.from_words(["p", "q"])
        track = _track([(0.0, 0.5), (0.5, 1.0)])
        _, o = dtw_align(ref, ["p", "zz", "q"], UNIT_COST)
        assert map_discrepancies_to_words(o, ref, track) == TimeScope.from_pairs([(0.0, 1.0)])

    def test_insert_at_edges_reaches_track_bounds(self):
        ref = TextSequence.from_words(["p", "q"])
        track = _track([(0.4, 0.8), (0.8, 1.2)], n_frames=100)
        _, o = dtw_align(ref, ["p", "q", "zz"], UNIT_COST)
        assert map_discrepancies_to_words(o, ref, track) == TimeScope.from_pairs([(1.2, 2.0)])

    def test_deleted_word_without_segment_raises(self):
        ref = TextSequence.from_words(["p", "q", "r"])
        track = _track([(0.0, 0.5), (0.5, 1.0)])
        _, o = dtw_align(ref, ["p", "q"], UNIT_COST)
        with pytest.raises(UnalignedWord) as info:
            discrepancy_intervals(o, track)
        assert info.value.word_index == 2
