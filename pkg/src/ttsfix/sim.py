"""Seeded stand-ins for the neural components: a TTS generator that injects
one issue per sample, an evaluator that reads ground truth off the track, an
editor that regenerates masked regions, and a provider of noised residuals
for the preference loss.

Every random draw comes from a generator keyed by ``(seed, stream, ids...)``
so results never depend on call order or worker layout.
"""
from __future__ import annotations

import enum
import logging
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from itertools import groupby
from typing import Sequence

import numpy as np

from .core import (SILENCE, Frame, QualityScore, SpeechTrack, TextSequence, TimeInterval, TimeScope,
                   WordSegment, clamp_scope, frames_to_interval, scope_from_frame_mask)
from .correction import CorrectionConfig, CorrectionOutcome, EvaluationReport, correct
from .errors import TargetTooShort
from .metrics import failure_rate

log = logging.getLogger(__name__)

CORRUPTION_THRESHOLD = 0.5
DISTRACTORS = ("bark", "plum", "zebra", "quilt", "moss", "fjord", "crisp", "lumen", "tarn", "vex")

_TTS, _EVAL, _EDIT, _RESIDUAL = 1, 2, 3, 4


class IssueType(str, enum.Enum):
    COMMON = "Common"
    REPEATED = "Repeated"
    PUNCTUATION = "Punctuation"
    ABNORMAL = "Abnormal"
    CLEAN = "Clean"


ISSUES = (IssueType.COMMON, IssueType.REPEATED, IssueType.PUNCTUATION, IssueType.ABNORMAL)


@dataclass(frozen=True)
class SimConfig:
    seed: int = 0
    p_common: float = 0.0
    p_repeated: float = 0.0
    p_punctuation: float = 0.0
    p_abnormal: float = 0.0
    words_per_second: float = 2.5
    evaluator_scope_jitter_s: float = 0.0
    evaluator_transcript_noise: float = 0.0
    editor_p_fix: float = 1.0
    hop_s: float = 0.02
    # fixture magnitudes
    silence_s: tuple[float, float] = (0.5, 1.5)
    abnormal_fraction: tuple[float, float] = (0.1, 0.3)
    abnormal_level: tuple[float, float] = (0.8, 1.0)
    omission_gap_s: float = 0.1
    # quality proxy: 10 - 9 * (w * mean corruption + (1 - w) * erroneous fraction)
    quality_corruption_weight: float = 0.5

    def __post_init__(self):
        probs = self.issue_probabilities()
        for p in probs + (self.evaluator_transcript_noise, self.editor_p_fix):
            if not 0.0 <= p <= 1.0:
                raise ValueError(f"probability {p} outside [0, 1]")
        if sum(probs) > 1.0 + 1e-12:
            raise ValueError("issue probabilities must sum to at most 1")
        if self.words_per_second <= 0 or self.hop_s <= 0:
            raise ValueError("words_per_second and hop_s must be positive")
        if self.evaluator_scope_jitter_s < 0:
            raise ValueError("jitter must be nonnegative")

    def issue_probabilities(self) -> tuple[float, float, float, float]:
        return (self.p_common, self.p_repeated, self.p_punctuation, self.p_abnormal)

    @property
    def frames_per_word(self) -> int:
        return max(1, round(1.0 / (self.words_per_second * self.hop_s)))

    def seconds_to_frames(self, seconds: float) -> int:
        return max(1, round(seconds / self.hop_s))


def _rng(config: SimConfig, stream: int, *ids: int) -> np.random.Generator:
    key = (stream,) + tuple(int(i) & 0xFFFFFFFF for i in ids)
    return np.random.default_rng(np.random.SeedSequence(int(config.seed) & (2**64 - 1), spawn_key=key))


@dataclass(frozen=True)
class InjectionRecord:
    issue_type: IssueType
    truth_scope: TimeScope
    truth_transcript: TextSequence


# ---------------------------------------------------------------------------
# piece representation: a track as a list of word-owned / unowned frame runs

@dataclass
class _Piece:
    word: int | None
    frames: list[Frame]
    fresh: bool = False          # fully regenerated by the editor
    fresh_frames: tuple[int, ...] = ()  # relabeled positions inside a partial piece


def _pieces(track: SpeechTrack) -> list[_Piece]:
    owner = np.full(track.n_frames, -1)
    for seg in track.word_segments:
        a, b = track.frame_span(seg.interval)
        owner[a:b] = seg.word_index
    out = []
    start = 0
    for k in range(1, track.n_frames + 1):
        if k == track.n_frames or owner[k] != owner[start]:
            w = int(owner[start])
            out.append(_Piece(None if w < 0 else w, list(track.frames[start:k])))
            start = k
    return out


def _assemble(pieces: Sequence[_Piece], hop_s: float) -> SpeechTrack:
    frames: list[Frame] = []
    segments = []
    for p in pieces:
        if p.word is not None and p.frames:
            segments.append(WordSegment(p.word, frames_to_interval(len(frames), len(frames) + len(p.frames), hop_s)))
        frames.extend(p.frames)
    return SpeechTrack(tuple(frames), hop_s, tuple(segments))


def _span_of(pieces: Sequence[_Piece], target: _Piece, hop_s: float) -> TimeInterval:
    pos = 0
    for p in pieces:
        if p is target:
            return frames_to_interval(pos, pos + len(p.frames), hop_s)
        pos += len(p.frames)
    raise LookupError("piece not found")


def _word_frames(word: str, config: SimConfig) -> list[Frame]:
    return [Frame(word, 0.0)] * config.frames_per_word


def render_clean(target: TextSequence, config: SimConfig) -> SpeechTrack:
    """Target words at uniform pacing, no pauses, no corruption."""
    pieces = [_Piece(k, _word_frames(w, config)) for k, w in enumerate(target.words())]
    return _assemble(pieces, config.hop_s)


def _distractor(word: str, rng: np.random.Generator) -> str:
    choices = [d for d in DISTRACTORS if d != word]
    return choices[int(rng.integers(len(choices)))]


def _draw_issue(rng: np.random.Generator, probs: Sequence[float]) -> IssueType:
    u = rng.random()
    acc = 0.0
    for issue, p in zip(ISSUES, probs):
        acc += p
        if u < acc:
            return issue
    return IssueType.CLEAN


# ---------------------------------------------------------------------------

def simulate_tts(target: TextSequence, config: SimConfig, sample_id: int) -> tuple[SpeechTrack, InjectionRecord]:
    """Synthesize ``target`` with at most one injected issue.

    Issue realizations:

    - Common: one word's frames relabeled to a distractor, or collapsed to a
      short silent gap (omission); 50/50.
    - Repeated: an extra copy of one word placed right before it.
    - Punctuation: a 0.5-1.5 s pause between two words.
    - Abnormal: corruption 0.8-1.0 over a contiguous 10-30 % frame span.
    """
    words = target.words()
    if len(words) < 3:
        raise TargetTooShort(f"need at least 3 words, got {len(words)}")
    rng = _rng(config, _TTS, sample_id)
    issue = _draw_issue(rng, config.issue_probabilities())
    pieces = [_Piece(k, _word_frames(w, config)) for k, w in enumerate(words)]
    hop = config.hop_s
    transcript = list(words)

    if issue is IssueType.CLEAN:
        track = _assemble(pieces, hop)
        return track, InjectionRecord(issue, TimeScope(), TextSequence.from_words(words))

    if issue is IssueType.ABNORMAL:
        track = _assemble(pieces, hop)
        n = track.n_frames
        length = min(n, max(1, round(rng.uniform(*config.abnormal_fraction) * n)))
        start = int(rng.integers(0, n - length + 1))
        levels = rng.uniform(*config.abnormal_level, size=length)
        frames = list(track.frames)
        for k in range(length):
            frames[start + k] = Frame(frames[start + k].unit_label, float(levels[k]))
        track = SpeechTrack(tuple(frames), hop, track.word_segments)
        scope = TimeScope((frames_to_interval(start, start + length, hop),))
        return track, InjectionRecord(issue, scope, TextSequence.from_words(words))

    if issue is IssueType.PUNCTUATION:
        pos = int(rng.integers(1, len(words)))
        n_sil = config.seconds_to_frames(rng.uniform(*config.silence_s))
        affected = _Piece(None, [Frame(SILENCE, 0.0)] * n_sil)
        pieces.insert(pos, affected)
    else:
        w = int(rng.integers(len(words)))
        if issue is IssueType.REPEATED:
            affected = _Piece(None, _word_frames(words[w], config))
            pieces.insert(w, affected)
            transcript.insert(w, words[w])
        elif rng.random() < 0.5:
            affected = pieces[w]
            affected.frames = [Frame(_distractor(words[w], rng), 0.0)] * len(affected.frames)
            transcript[w] = affected.frames[0].unit_label
        else:
            affected = pieces[w]
            affected.frames = [Frame(SILENCE, 0.0)] * config.seconds_to_frames(config.omission_gap_s)
            del transcript[w]
    track = _assemble(pieces, hop)
    scope = TimeScope((_span_of(pieces, affected, hop),))
    return track, InjectionRecord(issue, scope, TextSequence.from_words(transcript))


def track_truth(track: SpeechTrack, target: TextSequence) -> tuple[TextSequence, TimeScope]:
    """What an exact listener hears, and where it deviates from ``target``.

    A word segment is erroneous unless every frame carries the target word.
    Unowned frames are always erroneous (pauses are silent, repeats are
    heard).  Frames with corruption >= 0.5 are erroneous.
    """
    words = target.words()
    heard: list[str] = []
    err = np.zeros(track.n_frames, dtype=bool)
    pos = 0
    for p in _pieces(track):
        labels = [f.unit_label for f in p.frames]
        stop = pos + len(labels)
        if p.word is None:
            err[pos:stop] = True
            heard.extend(label for label, _ in groupby(labels) if label != SILENCE)
        else:
            expected = words[p.word] if p.word < len(words) else None
            if all(label == expected for label in labels):
                heard.append(expected)
            else:
                err[pos:stop] = True
                voiced = [label for label in labels if label != SILENCE]
                if voiced:
                    heard.append(Counter(voiced).most_common(1)[0][0])
        pos = stop
    corruption = np.array([f.corruption for f in track.frames])
    if corruption.size:
        err |= corruption >= CORRUPTION_THRESHOLD
    return TextSequence.from_words(heard), scope_from_frame_mask(err, track.hop_s)


def quality_proxy(track: SpeechTrack, truth_scope: TimeScope, config: SimConfig) -> QualityScore:
    if track.n_frames == 0:
        return QualityScore(1.0)
    mean_corruption = float(np.mean([f.corruption for f in track.frames]))
    err_fraction = truth_scope.total_length / track.duration
    w = config.quality_corruption_weight
    return QualityScore.clamped(10.0 - 9.0 * (w * mean_corruption + (1.0 - w) * err_fraction))


def simulate_evaluator(track: SpeechTrack, target: TextSequence, injection: InjectionRecord | None,
                       config: SimConfig, call_id: int = 0, sample_id: int = 0) -> EvaluationReport:
    """Ground truth (from ``injection`` or read off the track) degraded by the
    configured transcript noise and scope jitter."""
    if injection is None:
        transcript, truth = track_truth(track, target)
    else:
        transcript, truth = injection.truth_transcript, injection.truth_scope
    rng = _rng(config, _EVAL, sample_id, call_id)
    if config.evaluator_transcript_noise > 0:
        noisy = [(_distractor(w, rng) if rng.random() < config.evaluator_transcript_noise else w)
                 for w in transcript.words()]
        transcript = TextSequence.from_words(noisy)
    scope = truth
    j = config.evaluator_scope_jitter_s
    if j > 0 and truth and track.duration > 0:
        moved = []
        for iv in truth:
            s, e = iv.start_s + rng.uniform(-j, j), iv.end_s + rng.uniform(-j, j)
            if e > s:
                moved.append(TimeInterval(s, e))
        scope = clamp_scope(TimeScope(tuple(moved)), track.duration)
    return EvaluationReport(transcript, scope, quality_proxy(track, truth, config))


def simulate_editor(track: SpeechTrack, mask: TimeScope, target: TextSequence, config: SimConfig,
                    call_id: int = 0, sample_id: int = 0) -> SpeechTrack:
    """Regenerate the masked frames.

    Unowned masked frames are dropped, fully masked words are re-rendered at
    nominal pacing, partially masked words have their masked frames
    relabeled.  With probability ``1 - editor_p_fix`` a fresh issue is then
    injected inside the regenerated material.  Unmasked frames are never
    touched.
    """
    if not mask:
        return track
    words = target.words()
    rng = _rng(config, _EDIT, sample_id, call_id)
    fixed = rng.random() < config.editor_p_fix
    masked = track.frame_mask(mask)
    out: list[_Piece] = []
    drop_at: int | None = None
    pos = 0
    for p in _pieces(track):
        m = masked[pos:pos + len(p.frames)]
        pos += len(p.frames)
        if p.word is None:
            for hit, run in groupby(zip(p.frames, m), key=lambda t: bool(t[1])):
                if hit:
                    if drop_at is None:
                        drop_at = len(out)
                else:
                    out.append(_Piece(None, [f for f, _ in run]))
        elif p.word >= len(words):
            raise ValueError(f"word segment index {p.word} outside target")
        elif m.all():
            out.append(_Piece(p.word, _word_frames(words[p.word], config), fresh=True))
        elif m.any():
            frames = [Frame(words[p.word], 0.0) if hit else f for f, hit in zip(p.frames, m)]
            out.append(_Piece(p.word, frames, fresh_frames=tuple(int(k) for k in np.flatnonzero(m))))
        else:
            out.append(p)
    if not fixed:
        _reinject(out, words, config, rng, drop_at)
    return _assemble(out, config.hop_s)


def _reinject(pieces: list[_Piece], words, config: SimConfig, rng: np.random.Generator,
              drop_at: int | None) -> None:
    probs = np.array(config.issue_probabilities(), dtype=float)
    probs = probs / probs.sum() if probs.sum() > 0 else np.full(4, 0.25)
    issue = ISSUES[int(rng.choice(4, p=probs))]
    full = [k for k, p in enumerate(pieces) if p.fresh]
    partial = [k for k, p in enumerate(pieces) if p.fresh_frames]

    if issue is not IssueType.ABNORMAL and full:
        k = full[int(rng.integers(len(full)))]
        p = pieces[k]
        w = words[p.word]
        if issue is IssueType.REPEATED:
            pieces.insert(k, _Piece(None, _word_frames(w, config)))
        elif issue is IssueType.PUNCTUATION:
            n_sil = config.seconds_to_frames(rng.uniform(*config.silence_s))
            pieces.insert(k if k > 0 else k + 1, _Piece(None, [Frame(SILENCE, 0.0)] * n_sil))
        elif rng.random() < 0.5:
            p.frames = [Frame(_distractor(w, rng), 0.0)] * len(p.frames)
        else:
            p.frames = [Frame(SILENCE, 0.0)] * config.seconds_to_frames(config.omission_gap_s)
    elif full or partial:
        k = (full + partial)[int(rng.integers(len(full) + len(partial)))]
        p = pieces[k]
        idx = range(len(p.frames)) if p.fresh else p.fresh_frames
        frames = list(p.frames)
        for i in idx:
            frames[i] = Frame(frames[i].unit_label, float(rng.uniform(*config.abnormal_level)))
        p.frames = frames
    else:
        # the mask held only unowned material, which was removed: put a pause back
        n_sil = config.seconds_to_frames(rng.uniform(*config.silence_s))
        pieces.insert(drop_at if drop_at is not None else len(pieces), _Piece(None, [Frame(SILENCE, 0.0)] * n_sil))


# ---------------------------------------------------------------------------
# adapters

class SimEvaluator:
    """Evaluator adapter reading ground truth off the track; one RNG
    substream per call."""

    def __init__(self, config: SimConfig, sample_id: int = 0):
        self.config = config
        self.sample_id = sample_id
        self.calls = 0

    def evaluate(self, track: SpeechTrack, target: TextSequence) -> EvaluationReport:
        self.calls += 1
        return simulate_evaluator(track, target, None, self.config, self.calls - 1, self.sample_id)


class SimEditor:
    def __init__(self, config: SimConfig, sample_id: int = 0):
        self.config = config
        self.sample_id = sample_id
        self.calls = 0

    def edit(self, track: SpeechTrack, mask: TimeScope, target: TextSequence) -> SpeechTrack:
        self.calls += 1
        return simulate_editor(track, mask, target, self.config, self.calls - 1, self.sample_id)


@dataclass(frozen=True)
class NoisedResiduals:
    """Diffusion residuals of one sample at one timestep."""

    eps: np.ndarray
    pred_theta: np.ndarray
    pred_ref: np.ndarray
    timestep: int
    horizon: int


class SyntheticResidualProvider:
    """Gaussian noise targets with reference and policy predictions scattered
    around them.  ``policy_gain`` > 0 pulls the policy prediction toward the
    true noise on every frame except those listed in ``degraded``."""

    def __init__(self, seed: int, n_frames: int, horizon: int = 1000, ref_noise: float = 0.5,
                 policy_gain: float = 0.0, degraded: dict[str, Sequence[int]] | None = None):
        self.config = SimConfig(seed=seed)
        self.n_frames = n_frames
        self.horizon = horizon
        self.ref_noise = ref_noise
        self.policy_gain = policy_gain
        self.degraded = degraded or {}
        self.timestep = int(_rng(self.config, _RESIDUAL, 0).integers(horizon))

    def __call__(self, sample_id: str) -> NoisedResiduals:
        rng = _rng(self.config, _RESIDUAL, 1, _stable_id(sample_id))
        eps = rng.standard_normal(self.n_frames)
        ref = eps + self.ref_noise * rng.standard_normal(self.n_frames)
        theta = ref + self.policy_gain * (eps - ref)
        bad = list(self.degraded.get(sample_id, ()))
        theta[bad] = ref[bad] - self.policy_gain * (eps[bad] - ref[bad])
        return NoisedResiduals(eps, theta, ref, self.timestep, self.horizon)


def _stable_id(text: str) -> int:
    import hashlib
    return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


# ---------------------------------------------------------------------------
# experiment harness

@dataclass(frozen=True)
class SampleResult:
    sample_id: int
    issue_type: IssueType
    fails: tuple[bool, ...]                 # full-gate failure after each iteration
    wer_quality: tuple[tuple[float, float], ...]
    iterations_used: int
    corrected: bool
    error: str | None = None


@dataclass(frozen=True)
class ExperimentResult:
    curve: tuple[float, ...]
    wer_quality_curve: tuple[float, ...]
    initially_failing: int
    residual_failing: tuple[int, ...]
    n_samples: int
    issue_counts: dict = field(default_factory=dict)
    excluded: tuple[tuple[int, str], ...] = ()
    samples: tuple[SampleResult, ...] = ()


def run_sample(sample_id: int, target: TextSequence, config: SimConfig,
               correction: CorrectionConfig) -> tuple[SampleResult, CorrectionOutcome, InjectionRecord]:
    track, injection = simulate_tts(target, config, sample_id)
    outcome = correct(track, target, SimEvaluator(config, sample_id), SimEditor(config, sample_id), correction)
    snaps = outcome.per_iteration
    fails, wq = [], []
    for k in range(correction.max_iter + 1):
        # a sample that passed stays at its passing snapshot
        s = snaps[min(k, len(snaps) - 1)]
        fails.append(not s.passes(correction))
        wq.append((s.wer, s.quality))
    result = SampleResult(sample_id, injection.issue_type, tuple(fails), tuple(wq),
                          outcome.iterations_used, outcome.corrected, outcome.error)
    return result, outcome, injection


def _run_chunk(args):
    ids, targets, config, correction = args
    out = []
    for i in ids:
        try:
            out.append(run_sample(i, targets[i % len(targets)], config, correction)[0])
        except Exception as exc:
            out.append((i, f"{type(exc).__name__}: {exc}"))
    return out


def run_experiment(n_samples: int, targets: Sequence[TextSequence], config: SimConfig,
                   correction: CorrectionConfig = CorrectionConfig(), workers: int = 1) -> ExperimentResult:
    """Generate ``n_samples`` seeded samples, correct each, and aggregate the
    failure rate after 0, 1, ..., max_iter regenerations.

    ``curve`` counts a sample as failing while it does not pass the full
    correction gate; ``wer_quality_curve`` applies only the WER and quality
    gates.  Results are identical for any ``workers``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if not targets:
        raise ValueError("no targets")
    ids = list(range(n_samples))
    if workers > 1:
        chunks = [ids[k::workers] for k in range(workers)]
        with ProcessPoolExecutor(workers) as pool:
            parts = list(pool.map(_run_chunk, [(c, list(targets), config, correction) for c in chunks]))
        merged = sorted((r for part in parts for r in part),
                        key=lambda r: r.sample_id if isinstance(r, SampleResult) else r[0])
    else:
        merged = _run_chunk((ids, list(targets), config, correction))
    samples = tuple(r for r in merged if isinstance(r, SampleResult))
    excluded = tuple(r for r in merged if not isinstance(r, SampleResult))
    for sid, why in excluded:
        log.warning("sample %d excluded: %s", sid, why)
    if not samples:
        raise ValueError("every sample was excluded")
    n_steps = correction.max_iter + 1
    curve = tuple(sum(s.fails[k] for s in samples) / len(samples) for k in range(n_steps))
    wq_curve = tuple(failure_rate([s.wer_quality[k] for s in samples], correction.wer_gate,
                                  correction.quality_gate) for k in range(n_steps))
    initial = [s for s in samples if s.fails[0]]
    residual = tuple(sum(s.fails[k] for s in initial) for k in range(n_steps))
    counts = Counter(s.issue_type.value for s in samples)
    return ExperimentResult(curve, wq_curve, len(initial), residual, len(samples),
                            dict(sorted(counts.items())), excluded, samples)
