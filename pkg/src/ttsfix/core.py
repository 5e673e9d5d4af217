"""Domain types shared by every module: time intervals and scopes, word
sequences, and the symbolic speech track.

Intervals are half-open ``[start, end)`` in seconds.  A :class:`TimeScope`
normalizes itself on construction (sorted, overlapping or touching
intervals merged), so every scope produced anywhere in the package is
already in canonical form.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

SILENCE = "<sil>"
DEFAULT_HOP_S = 0.02

# tolerance for time -> frame conversion; absorbs representation error in k * hop
_FRAME_EPS = 1e-9

_TOKEN_RE = re.compile(r"\w+(?:'\w+)*|[^\w\s]+")


@dataclass(frozen=True)
class TimeInterval:
    start_s: float
    end_s: float

    def __post_init__(self):
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise ValueError(f"non-finite interval bounds ({self.start_s}, {self.end_s})")
        if not self.start_s < self.end_s:
            raise ValueError(f"interval start {self.start_s} must be < end {self.end_s}")

    @property
    def length(self) -> float:
        return self.end_s - self.start_s

    def overlap(self, other: "TimeInterval") -> float:
        return max(0.0, min(self.end_s, other.end_s) - max(self.start_s, other.start_s))


@dataclass(frozen=True)
class TimeScope:
    """Sorted, pairwise-disjoint set of half-open intervals."""

    intervals: tuple[TimeInterval, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "intervals", _normalize(self.intervals))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "TimeScope":
        return cls(tuple(TimeInterval(float(s), float(e)) for s, e in pairs))

    def to_pairs(self) -> list[list[float]]:
        return [[iv.start_s, iv.end_s] for iv in self.intervals]

    @property
    def total_length(self) -> float:
        return math.fsum(iv.length for iv in self.intervals)

    def __bool__(self) -> bool:
        return bool(self.intervals)

    def __len__(self) -> int:
        return len(self.intervals)

    def __iter__(self):
        return iter(self.intervals)


def _normalize(intervals: Iterable[TimeInterval]) -> tuple[TimeInterval, ...]:
    ordered = sorted(intervals, key=lambda iv: (iv.start_s, iv.end_s))
    merged: list[list[float]] = []
    for iv in ordered:
        # half-open intervals: touching ones ([a, b) and [b, c)) are merged
        if merged and iv.start_s <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], iv.end_s)
        else:
            merged.append([iv.start_s, iv.end_s])
    return tuple(TimeInterval(s, e) for s, e in merged)


def scope_union(a: TimeScope, b: TimeScope) -> TimeScope:
    return TimeScope(a.intervals + b.intervals)


def scope_intersection_length(a: TimeScope, b: TimeScope) -> float:
    """Measure of the points covered by both scopes (two-pointer sweep)."""
    i = j = 0
    parts = []
    xs, ys = a.intervals, b.intervals
    while i < len(xs) and j < len(ys):
        lo = max(xs[i].start_s, ys[j].start_s)
        hi = min(xs[i].end_s, ys[j].end_s)
        if hi > lo:
            parts.append(hi - lo)
        if xs[i].end_s < ys[j].end_s:
            i += 1
        else:
            j += 1
    return math.fsum(parts)


def scope_union_length(a: TimeScope, b: TimeScope) -> float:
    return a.total_length + b.total_length - scope_intersection_length(a, b)


def clamp_scope(scope: TimeScope, duration: float) -> TimeScope:
    if duration <= 0:
        raise ValueError("duration must be positive")
    kept = []
    for iv in scope.intervals:
        s, e = max(iv.start_s, 0.0), min(iv.end_s, duration)
        if e > s:
            kept.append(TimeInterval(s, e))
    return TimeScope(tuple(kept))


def extend_scope(scope: TimeScope, margins: Sequence[float]) -> TimeScope:
    """Widen interval ``k`` by ``margins[k]`` on both sides."""
    return TimeScope(tuple(
        TimeInterval(iv.start_s - m, iv.end_s + m) for iv, m in zip(scope.intervals, margins)
    ))


# ---------------------------------------------------------------------------
# text

def tokenize(text: str) -> list[str]:
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class WordToken:
    text: str
    is_punctuation: bool = False

    def __post_init__(self):
        if not self.text or self.text != self.text.lower():
            raise ValueError(f"token must be non-empty lowercase: {self.text!r}")
        if tokenize(self.text) != [self.text]:
            raise ValueError(f"token {self.text!r} is not a single word or punctuation run")
        if self.is_punctuation != _is_punct(self.text):
            raise ValueError(f"punctuation flag inconsistent for {self.text!r}")

    @classmethod
    def of(cls, text: str) -> "WordToken":
        return cls(text, _is_punct(text))


def _is_punct(text: str) -> bool:
    return re.search(r"\w", text) is None


@dataclass(frozen=True)
class TextSequence:
    tokens: tuple[WordToken, ...] = ()

    @classmethod
    def from_text(cls, text: str) -> "TextSequence":
        return cls(tuple(WordToken.of(t) for t in tokenize(text)))

    @classmethod
    def from_words(cls, words: Iterable[str]) -> "TextSequence":
        return cls(tuple(WordToken.of(w) for w in words))

    def words(self) -> tuple[str, ...]:
        """Non-punctuation token texts, in order."""
        return tuple(t.text for t in self.tokens if not t.is_punctuation)

    @property
    def word_count(self) -> int:
        return sum(1 for t in self.tokens if not t.is_punctuation)

    def __str__(self) -> str:
        return " ".join(t.text for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


# ---------------------------------------------------------------------------
# speech

@dataclass(frozen=True)
class QualityScore:
    value: float

    def __post_init__(self):
        if not 1.0 <= self.value <= 10.0:
            raise ValueError(f"quality score {self.value} outside [1, 10]")

    @classmethod
    def clamped(cls, value: float) -> "QualityScore":
        return cls(min(10.0, max(1.0, float(value))))


@dataclass(frozen=True)
class Frame:
    unit_label: str
    corruption: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.corruption <= 1.0:
            raise ValueError(f"corruption {self.corruption} outside [0, 1]")


def time_to_frame(t: float, hop_s: float) -> int:
    return math.floor(t / hop_s + _FRAME_EPS)


def frames_to_interval(start: int, stop: int, hop_s: float) -> TimeInterval:
    return TimeInterval(start * hop_s, stop * hop_s)


@dataclass(frozen=True)
class WordSegment:
    word_index: int
    interval: TimeInterval


@dataclass(frozen=True)
class SpeechTrack:
    """Frame sequence plus the time span attributed to each target word.

    ``word_index`` refers to positions in the target's word list (punctuation
    excluded, zero based).  Frames not covered by any word segment are
    material the synthesizer produced without a target word behind it
    (repeats, inserted pauses).
    """

    frames: tuple[Frame, ...]
    hop_s: float = DEFAULT_HOP_S
    word_segments: tuple[WordSegment, ...] = field(default=())

    def __post_init__(self):
        if not self.hop_s > 0:
            raise ValueError("hop_s must be positive")
        object.__setattr__(self, "frames", tuple(self.frames))
        object.__setattr__(self, "word_segments", tuple(self.word_segments))
        duration = self.duration
        prev_end = 0.0
        for seg in self.word_segments:
            iv = seg.interval
            if iv.start_s < 0 or iv.end_s > duration:
                raise ValueError(f"word segment {iv} outside [0, {duration})")
            if iv.start_s < prev_end:
                raise ValueError("word segments must be sorted and non-overlapping")
            prev_end = iv.end_s

    @property
    def n_frames(self) -> int:
        return len(self.frames)

    @property
    def duration(self) -> float:
        return self.n_frames * self.hop_s

    def frame_span(self, interval: TimeInterval) -> tuple[int, int]:
        a = min(max(time_to_frame(interval.start_s, self.hop_s), 0), self.n_frames)
        b = min(max(time_to_frame(interval.end_s, self.hop_s), 0), self.n_frames)
        return a, b

    def frame_mask(self, scope: TimeScope) -> np.ndarray:
        mask = np.zeros(self.n_frames, dtype=bool)
        for iv in scope.intervals:
            a, b = self.frame_span(iv)
            mask[a:b] = True
        return mask

    def segments_for(self, word_index: int) -> list[WordSegment]:
        return [s for s in self.word_segments if s.word_index == word_index]

    def labels(self) -> tuple[str, ...]:
        return tuple(f.unit_label for f in self.frames)


def scope_from_frame_mask(mask: Sequence[bool], hop_s: float) -> TimeScope:
    """Runs of true frames as a scope of frame-aligned intervals."""
    mask = np.asarray(mask, dtype=bool)
    if not mask.any():
        return TimeScope()
    padded = np.concatenate([[False], mask, [False]])
    edges = np.flatnonzero(padded[1:] != padded[:-1])
    return TimeScope(tuple(
        frames_to_interval(int(a), int(b), hop_s) for a, b in zip(edges[::2], edges[1::2])
    ))
