"""Evaluation metrics: WER, scope IOU, clean-sample MSE, utterance-level
Pearson, system-level Spearman and gate-based failure rate."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .alignment import UNIT_COST, OpKind, dtw_align
from .core import TextSequence, TimeScope, scope_intersection_length, scope_union_length
from .errors import DegenerateInput, EmptyInput, EmptyReference, UndefinedIou


@dataclass(frozen=True)
class ErrorCounts:
    substitutions: int
    deletions: int
    insertions: int
    ref_words: int

    @property
    def errors(self) -> int:
        return self.substitutions + self.deletions + self.insertions


def word_errors(ref: TextSequence, hyp: TextSequence) -> ErrorCounts:
    _, ops = dtw_align(ref, hyp, UNIT_COST)
    c = ops.counts()
    return ErrorCounts(c[OpKind.SUBSTITUTE], c[OpKind.DELETE], c[OpKind.INSERT], ref.word_count)


def wer(ref: TextSequence, hyp: TextSequence) -> float:
    """(S + D + I) / N over words; punctuation tokens are ignored."""
    counts = word_errors(ref, hyp)
    if counts.ref_words == 0:
        raise EmptyReference("reference has no words")
    return counts.errors / counts.ref_words


def corpus_wer(pairs: Iterable[tuple[TextSequence, TextSequence]]) -> float:
    """Total errors over total reference words."""
    errors = words = 0
    for ref, hyp in pairs:
        c = word_errors(ref, hyp)
        errors += c.errors
        words += c.ref_words
    if words == 0:
        raise EmptyReference("no reference words")
    return errors / words


def scope_iou(pred: TimeScope, truth: TimeScope) -> float:
    union = scope_union_length(pred, truth)
    if union <= 0.0:
        raise UndefinedIou("both scopes are empty")
    return min(1.0, scope_intersection_length(pred, truth) / union)


def mean_iou(pairs: Sequence[tuple[TimeScope, TimeScope]], pooled: bool = False) -> float:
    """Per-utterance mean IOU, or pooled (sum of intersections over sum of unions)."""
    if not pairs:
        raise EmptyInput("no scope pairs")
    if pooled:
        inter = math.fsum(scope_intersection_length(p, t) for p, t in pairs)
        union = math.fsum(scope_union_length(p, t) for p, t in pairs)
        if union <= 0:
            raise UndefinedIou("all scopes empty")
        return inter / union
    return math.fsum(scope_iou(p, t) for p, t in pairs) / len(pairs)


def mse_clean(preds) -> float:
    """Mean squared frame error probability over clean samples (labels are all 0).

    ``preds`` is either one flat sequence of frame probabilities or a list of
    per-sample sequences; all frames are pooled.
    """
    parts = [np.ravel(np.asarray(p, dtype=float)) for p in preds]
    flat = np.concatenate(parts) if parts else np.empty(0)
    if flat.size == 0:
        raise EmptyInput("no frames")
    if np.any((flat < 0) | (flat > 1)):
        raise ValueError("frame probabilities must lie in [0, 1]")
    return float(np.mean(flat ** 2))


def _check_pair(x, y) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-D and of equal length")
    if x.size < 2:
        raise EmptyInput("need at least two paired values")
    return x, y


def utt_pcc(x, y) -> float:
    x, y = _check_pair(x, y)
    dx, dy = x - x.mean(), y - y.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise DegenerateInput("constant input vector")
    r = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, r))


def sys_srcc(x, y) -> float:
    """Spearman correlation: Pearson of average-rank vectors."""
    x, y = _check_pair(x, y)
    try:
        return utt_pcc(rankdata(x), rankdata(y))
    except DegenerateInput:
        raise DegenerateInput("all ranks tie") from None


def system_level_srcc(pred, truth, systems) -> float:
    """Average per system, then rank-correlate the system means."""
    pred, truth = _check_pair(pred, truth)
    systems = list(systems)
    if len(systems) != len(pred):
        raise ValueError("one system label per score required")
    keys = sorted(set(systems))
    p = [pred[[s == k for s in systems]].mean() for k in keys]
    t = [truth[[s == k for s in systems]].mean() for k in keys]
    return sys_srcc(p, t)


def failure_rate(samples: Sequence[tuple[float, float]], wer_gate: float, quality_gate: float) -> float:
    """Fraction of ``(wer, quality)`` samples with wer > gate or quality < gate."""
    if not samples:
        raise EmptyInput("no samples")
    failed = sum(1 for w, q in samples if w > wer_gate or q < quality_gate)
    return failed / len(samples)


@dataclass(frozen=True)
class MetricReport:
    wer: float
    iou: float | None = None
    mse_clean: float | None = None
    utt_pcc: float | None = None
    sys_srcc: float | None = None
    failure_rate: float | None = None

    def __post_init__(self):
        if self.wer < 0:
            raise ValueError("wer must be nonnegative")
        for name, lo, hi in (("iou", 0, 1), ("utt_pcc", -1, 1), ("sys_srcc", -1, 1), ("failure_rate", 0, 1)):
            v = getattr(self, name)
            if v is not None and not lo <= v <= hi:
                raise ValueError(f"{name}={v} outside [{lo}, {hi}]")
        if self.mse_clean is not None and self.mse_clean < 0:
            raise ValueError("mse_clean must be nonnegative")

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in
                ("wer", "iou", "mse_clean", "utt_pcc", "sys_srcc", "failure_rate")}
