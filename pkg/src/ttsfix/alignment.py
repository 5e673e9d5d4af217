"""Minimum-cost word alignment between a target text and a recognized
transcript, and conversion of the resulting edit operations into time
spans of a speech track.

The alignment is the classic DTW recursion on the ``(n+1) x (m+1)`` grid
with three step types: diagonal (match / substitute, cost ``C(t_i, h_j)``),
vertical (delete a reference word) and horizontal (insert a hypothesis
word).  Ties in the backtrace resolve diagonal > delete > insert.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import SpeechTrack, TextSequence, TimeInterval, TimeScope
from .errors import UnalignedWord


def levenshtein(a: Sequence, b: Sequence) -> int:
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def default_word_cost(w1: str, w2: str) -> float:
    """Character edit distance normalized by the longer word; 0 iff equal."""
    if w1 == w2:
        return 0.0
    return levenshtein(w1, w2) / max(len(w1), len(w2))


def unit_word_cost(w1: str, w2: str) -> float:
    return 0.0 if w1 == w2 else 1.0


@dataclass(frozen=True)
class CostSpec:
    substitution: Callable[[str, str], float] = default_word_cost
    insertion: float = 1.0
    deletion: float = 1.0

    def __post_init__(self):
        if self.insertion < 0 or self.deletion < 0:
            raise ValueError("insertion/deletion costs must be nonnegative")


DEFAULT_COST = CostSpec()
UNIT_COST = CostSpec(substitution=unit_word_cost)


class OpKind(str, enum.Enum):
    MATCH = "match"
    SUBSTITUTE = "substitute"
    DELETE = "delete"
    INSERT = "insert"


@dataclass(frozen=True)
class EditOp:
    kind: OpKind
    ref: int | None  # zero-based reference word position
    hyp: int | None  # zero-based hypothesis word position
    cost: float


@dataclass(frozen=True)
class WarpingPath:
    """Grid nodes visited from ``(0, 0)`` to ``(n, m)``."""

    steps: tuple[tuple[int, int], ...]
    total_cost: float


@dataclass(frozen=True)
class DiscrepancySet:
    """Op decomposition of an optimal path.

    ``ops`` holds every operation (matches included) so that projecting it on
    either side recovers all word positions in order.  The set is *empty*
    (falsy) when it contains no substitutions, deletions or insertions.
    """

    ops: tuple[EditOp, ...] = field(default=())

    @property
    def mismatches(self) -> tuple[EditOp, ...]:
        return tuple(op for op in self.ops if op.kind is not OpKind.MATCH)

    @property
    def is_empty(self) -> bool:
        return not self.mismatches

    def __bool__(self) -> bool:
        return not self.is_empty

    def counts(self) -> dict[OpKind, int]:
        out = {k: 0 for k in OpKind}
        for op in self.ops:
            out[op.kind] += 1
        return out


def _words(seq) -> tuple[str, ...]:
    if isinstance(seq, TextSequence):
        return seq.words()
    return tuple(w.lower() for w in seq)


def dtw_align(ref, hyp, cost: CostSpec = DEFAULT_COST) -> tuple[WarpingPath, DiscrepancySet]:
    """Globally optimal alignment of ``ref`` against ``hyp``.

    Parameters
    ----------
    ref, hyp : TextSequence or sequence of str
        Punctuation is dropped and words are case-folded before aligning.
    cost : CostSpec
        Word substitution cost function plus per-step insertion/deletion costs.

    Returns
    -------
    (WarpingPath, DiscrepancySet)
    """
    r, h = _words(ref), _words(hyp)
    n, m = len(r), len(h)
    sub = np.zeros((n, m))
    for i in range(n):
        for j in range(m):
            sub[i, j] = cost.substitution(r[i], h[j])

    acc = np.empty((n + 1, m + 1))
    acc[0, :] = np.arange(m + 1) * cost.insertion
    acc[:, 0] = np.arange(n + 1) * cost.deletion
    for i in range(1, n + 1):
        for j in range(1, m + 1):
            acc[i, j] = min(
                acc[i - 1, j - 1] + sub[i - 1, j - 1],
                acc[i - 1, j] + cost.deletion,
                acc[i, j - 1] + cost.insertion,
            )

    # backtrace; candidate expressions are recomputed exactly as in the forward
    # pass so equality tests against acc are exact
    i, j = n, m
    steps = [(i, j)]
    ops: list[EditOp] = []
    while i > 0 or j > 0:
        here = acc[i, j]
        if i > 0 and j > 0 and acc[i - 1, j - 1] + sub[i - 1, j - 1] == here:
            c = float(sub[i - 1, j - 1])
            kind = OpKind.MATCH if c == 0.0 else OpKind.SUBSTITUTE
            ops.append(EditOp(kind, i - 1, j - 1, c))
            i, j = i - 1, j - 1
        elif i > 0 and acc[i - 1, j] + cost.deletion == here:
            ops.append(EditOp(OpKind.DELETE, i - 1, None, float(cost.deletion)))
            i -= 1
        else:
            ops.append(EditOp(OpKind.INSERT, None, j - 1, float(cost.insertion)))
            j -= 1
        steps.append((i, j))
    steps.reverse()
    ops.reverse()
    return WarpingPath(tuple(steps), float(acc[n, m])), DiscrepancySet(tuple(ops))


def map_discrepancies_to_words(o: DiscrepancySet, ref: TextSequence, track: SpeechTrack) -> TimeScope:
    """Time spans of the speech that the mismatching operations point at.

    Substituted or deleted reference words map to their own word segments.
    An inserted hypothesis word maps to the gap between the segments of the
    reference words on either side of it in the alignment; when that gap has
    zero length (the extra material sits inside a neighbor's segment) the
    neighboring segments themselves are used.
    """
    return TimeScope(tuple(iv for _, iv in discrepancy_intervals(o, track)))


def discrepancy_intervals(o: DiscrepancySet, track: SpeechTrack) -> list[tuple[EditOp, TimeInterval]]:
    """``(op, interval)`` for every mismatching op; an op may yield several."""
    out: list[tuple[EditOp, TimeInterval]] = []
    ops = o.ops
    for k, op in enumerate(ops):
        if op.kind in (OpKind.SUBSTITUTE, OpKind.DELETE):
            segs = track.segments_for(op.ref)
            if not segs:
                raise UnalignedWord(op.ref)
            out.extend((op, s.interval) for s in segs)
        elif op.kind is OpKind.INSERT:
            left = next((ops[q].ref for q in range(k - 1, -1, -1) if ops[q].ref is not None), None)
            right = next((ops[q].ref for q in range(k + 1, len(ops)) if ops[q].ref is not None), None)
            left_segs = _neighbor_segments(track, left)
            right_segs = _neighbor_segments(track, right)
            lo = left_segs[-1].interval.end_s if left_segs else 0.0
            hi = right_segs[0].interval.start_s if right_segs else track.duration
            if hi > lo:
                out.append((op, TimeInterval(lo, hi)))
            else:
                for s in (left_segs[-1:] + right_segs[:1]):
                    out.append((op, s.interval))
    return out


def _neighbor_segments(track: SpeechTrack, word_index: int | None):
    if word_index is None:
        return []
    segs = track.segments_for(word_index)
    if not segs:
        raise UnalignedWord(word_index)
    return segs
