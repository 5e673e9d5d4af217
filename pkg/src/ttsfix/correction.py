"""Iterative detect -> mask -> regenerate correction loop.

Each pass asks an evaluator for a transcript, an erroneous time scope and a
quality score; aligns the transcript against the target text; and, unless
the sample passes the gate, builds a mask from both error sources and
asks an editor to regenerate the masked speech.  The target text never
changes between passes.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Protocol

from .alignment import DEFAULT_COST, CostSpec, DiscrepancySet, discrepancy_intervals, dtw_align
from .core import (QualityScore, SpeechTrack, TextSequence, TimeInterval, TimeScope, clamp_scope,
                   extend_scope, scope_union)
from .errors import EditorFailure, TtsfixError
from .metrics import wer

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EvaluationReport:
    transcript: TextSequence
    scope: TimeScope
    quality: QualityScore


class Evaluator(Protocol):
    def evaluate(self, track: SpeechTrack, target: TextSequence) -> EvaluationReport: ...


class Editor(Protocol):
    def edit(self, track: SpeechTrack, mask: TimeScope, target: TextSequence) -> SpeechTrack: ...


@dataclass(frozen=True)
class MarginPolicy:
    """``uniform``: widen each interval by its length divided by the number of
    mismatched words inside it.  ``fixed``: widen by ``seconds``."""

    kind: str = "uniform"
    seconds: float = 0.0

    def __post_init__(self):
        if self.kind not in ("uniform", "fixed"):
            raise ValueError(f"unknown margin policy {self.kind!r}")
        if self.seconds < 0:
            raise ValueError("margin must be nonnegative")

    @classmethod
    def uniform(cls) -> "MarginPolicy":
        return cls("uniform")

    @classmethod
    def fixed(cls, seconds: float) -> "MarginPolicy":
        return cls("fixed", seconds)


@dataclass(frozen=True)
class CorrectionConfig:
    max_iter: int = 2
    wer_gate: float = 0.0
    quality_gate: float = 6.0
    margin: MarginPolicy = field(default_factory=MarginPolicy.uniform)
    cost: CostSpec = DEFAULT_COST
    # regenerate the whole utterance when the gate fails but nothing is localized
    full_mask_fallback: bool = True

    def __post_init__(self):
        if not isinstance(self.max_iter, int) or self.max_iter < 1:
            raise ValueError("max_iter must be a positive integer")
        if self.wer_gate < 0:
            raise ValueError("wer_gate must be nonnegative")
        if not 1.0 <= self.quality_gate <= 10.0:
            raise ValueError("quality_gate must lie in [1, 10]")


@dataclass(frozen=True)
class Snapshot:
    wer: float
    quality: float
    scope: TimeScope
    has_discrepancies: bool

    def passes(self, config: CorrectionConfig) -> bool:
        return (gate(self.wer, QualityScore(self.quality), config)
                and not self.has_discrepancies and not self.scope)


@dataclass(frozen=True)
class CorrectionOutcome:
    final_track: SpeechTrack
    iterations_used: int
    per_iteration: tuple[Snapshot, ...]
    corrected: bool
    masks: tuple[TimeScope, ...] = ()
    error: str | None = None


def gate(wer_value: float, quality: QualityScore, config: CorrectionConfig) -> bool:
    return wer_value <= config.wer_gate and quality.value >= config.quality_gate


def build_mask(scope: TimeScope, o: DiscrepancySet, ref: TextSequence, track: SpeechTrack,
               policy: MarginPolicy = MarginPolicy()) -> TimeScope:
    """Union of the evaluator scope and the word spans of alignment mismatches,
    widened by the margin policy and clipped to the track."""
    pairs = discrepancy_intervals(o, track) if o else []
    merged = scope_union(scope, TimeScope(tuple(iv for _, iv in pairs)))
    if not merged or track.duration <= 0:
        return TimeScope()
    if policy.kind == "fixed":
        margins = [policy.seconds] * len(merged)
    else:
        margins = []
        for iv in merged:
            words = {op for op, op_iv in pairs if iv.overlap(op_iv) > 0}
            margins.append(iv.length / max(len(words), 1))
    return clamp_scope(extend_scope(merged, margins), track.duration)


def _runs(track: SpeechTrack, mask: TimeScope):
    """Alternating (masked, frames) runs of the track."""
    flags = track.frame_mask(mask)
    runs = []
    start = 0
    for k in range(1, track.n_frames + 1):
        if k == track.n_frames or flags[k] != flags[start]:
            runs.append((bool(flags[start]), track.frames[start:k]))
            start = k
    return runs


def _find(hay: tuple, needle: tuple, start: int) -> int:
    n = len(needle)
    for pos in range(start, len(hay) - n + 1):
        if hay[pos:pos + n] == needle:
            return pos
    return -1


def check_locality(before: SpeechTrack, mask: TimeScope, after: SpeechTrack) -> bool:
    """True when every unmasked frame run of ``before`` survives unchanged, in
    order, in ``after``; masked runs may be replaced by anything (including
    content of a different length)."""
    runs = _runs(before, mask)
    if not any(masked for masked, _ in runs):
        return before.frames == after.frames
    out = after.frames
    pos = 0
    for k, (masked, frames) in enumerate(runs):
        if masked:
            continue
        if k == 0:
            if out[:len(frames)] != frames:
                return False
            pos = len(frames)
        elif k == len(runs) - 1:
            tail = len(out) - len(frames)
            if tail < pos or out[tail:] != frames:
                return False
        else:
            found = _find(out, frames, pos)
            if found < 0:
                return False
            pos = found + len(frames)
    return True


def refine(track: SpeechTrack, mask: TimeScope, target: TextSequence, editor: Editor) -> SpeechTrack:
    if not mask:
        return track
    try:
        edited = editor.edit(track, mask, target)
    except TtsfixError:
        raise
    except Exception as exc:  # adapter crash
        raise EditorFailure(f"editor raised {type(exc).__name__}: {exc}") from exc
    if edited.hop_s != track.hop_s:
        raise EditorFailure("editor changed the frame hop")
    if not check_locality(track, mask, edited):
        raise EditorFailure(f"editor modified frames outside mask {mask.to_pairs()}")
    return edited


def full_track_scope(track: SpeechTrack) -> TimeScope:
    if track.duration <= 0:
        return TimeScope()
    return TimeScope((TimeInterval(0.0, track.duration),))


def correct(track: SpeechTrack, target: TextSequence, evaluator: Evaluator, editor: Editor,
            config: CorrectionConfig = CorrectionConfig()) -> CorrectionOutcome:
    """Run the correction loop for at most ``config.max_iter`` regenerations.

    The outcome holds one snapshot for the input plus one per regeneration.
    Adapter failures stop the loop; the partial outcome is returned with
    ``corrected=False`` and the error message.
    """
    snapshots: list[Snapshot] = []
    masks: list[TimeScope] = []
    corrected = False
    error = None
    try:
        for it in range(config.max_iter + 1):
            report = evaluator.evaluate(track, target)
            _, o = dtw_align(target, report.transcript, config.cost)
            snap = Snapshot(wer(target, report.transcript), report.quality.value,
                            report.scope, not o.is_empty)
            snapshots.append(snap)
            if snap.passes(config):
                corrected = True
                break
            if it == config.max_iter:
                break
            mask = build_mask(report.scope, o, target, track, config.margin)
            if not mask and config.full_mask_fallback:
                mask = full_track_scope(track)
            track = refine(track, mask, target, editor)
            masks.append(mask)
    except Exception as exc:
        error = f"{type(exc).__name__}: {exc}"
        log.warning("correction aborted after %d iteration(s): %s", len(masks), error)
    return CorrectionOutcome(track, len(masks), tuple(snapshots), corrected, tuple(masks), error)
