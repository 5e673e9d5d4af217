"""Preference pairs for the DPO objective.

Within a prompt group, lower WER wins; if the WERs tie (within 1e-9) the
higher quality score wins; if the qualities also tie (within 0.1) the two
samples are indistinguishable and no pair is emitted.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from .core import DEFAULT_HOP_S, QualityScore, TimeScope, time_to_frame
from .errors import GroupTooSmall, ProviderMismatch
from .losses import DpoInputs
from .records import scope_from_json, scope_to_json

log = logging.getLogger(__name__)

WER_TIE = 1e-9
QUALITY_TIE = 0.1


@dataclass(frozen=True)
class EvaluatedSample:
    sample_id: str
    prompt_id: str
    wer: float
    quality: float
    error_scope: TimeScope = TimeScope()


def compare(a: EvaluatedSample, b: EvaluatedSample, wer_tie: float = WER_TIE,
            quality_tie: float = QUALITY_TIE) -> int:
    """1 if ``a`` is preferred, -1 if ``b`` is, 0 if indistinguishable."""
    if abs(a.wer - b.wer) > wer_tie:
        return 1 if a.wer < b.wer else -1
    if abs(a.quality - b.quality) > quality_tie:
        return 1 if a.quality > b.quality else -1
    return 0


@dataclass(frozen=True)
class PreferencePair:
    prompt_id: str
    winner_id: str
    loser_id: str
    winner_quality: QualityScore
    loser_quality: QualityScore
    winner_wer: float
    loser_wer: float
    loser_error_scope: TimeScope

    def __post_init__(self):
        if self.winner_id == self.loser_id:
            raise ValueError("winner and loser must differ")

    def to_record(self) -> dict:
        return {
            "prompt_id": self.prompt_id, "winner_id": self.winner_id, "loser_id": self.loser_id,
            "winner_quality": self.winner_quality.value, "loser_quality": self.loser_quality.value,
            "winner_wer": self.winner_wer, "loser_wer": self.loser_wer,
            "loser_error_scope": scope_to_json(self.loser_error_scope),
        }

    @classmethod
    def from_record(cls, rec: dict) -> "PreferencePair":
        return cls(str(rec["prompt_id"]), str(rec["winner_id"]), str(rec["loser_id"]),
                   QualityScore(float(rec["winner_quality"])), QualityScore(float(rec["loser_quality"])),
                   float(rec["winner_wer"]), float(rec["loser_wer"]), scope_from_json(rec["loser_error_scope"]))


def _make_pair(prompt_id: str, w: EvaluatedSample, l: EvaluatedSample) -> PreferencePair:
    return PreferencePair(prompt_id, w.sample_id, l.sample_id, QualityScore(w.quality), QualityScore(l.quality),
                          w.wer, l.wer, l.error_scope)


def group_by_prompt(samples: Iterable[EvaluatedSample]) -> dict[str, list[EvaluatedSample]]:
    groups: dict[str, list[EvaluatedSample]] = {}
    for s in samples:
        groups.setdefault(s.prompt_id, []).append(s)
    return groups


def build_pairs(groups: Mapping[str, Sequence[EvaluatedSample]], all_pairs: bool = False
                ) -> tuple[list[PreferencePair], list[tuple[str, str]]]:
    """Pairs per prompt group, plus ``(prompt_id, reason)`` for skipped groups.

    By default only the best-vs-worst pair of each group is emitted (when the
    two are distinguishable); ``all_pairs`` emits every strictly ordered pair.
    """
    pairs: list[PreferencePair] = []
    skipped: list[tuple[str, str]] = []
    for prompt_id in sorted(groups):
        group = list(groups[prompt_id])
        if len(group) < 2:
            err = GroupTooSmall(f"prompt {prompt_id!r} has {len(group)} sample(s)")
            log.info("%s", err)
            skipped.append((prompt_id, str(err)))
            continue
        if all_pairs:
            for a, b in combinations(group, 2):
                c = compare(a, b)
                if c:
                    pairs.append(_make_pair(prompt_id, a, b) if c > 0 else _make_pair(prompt_id, b, a))
            continue
        ranked = sorted(group, key=lambda s: (s.wer, -s.quality, s.sample_id))
        best, worst = ranked[0], ranked[-1]
        if compare(best, worst) > 0:
            pairs.append(_make_pair(prompt_id, best, worst))
        else:
            skipped.append((prompt_id, "best and worst samples are indistinguishable"))
    return pairs, skipped


def scope_to_frame_mask(scope: TimeScope, n_frames: int, hop_s: float = DEFAULT_HOP_S) -> np.ndarray:
    """Frames ``floor(start / hop) .. floor(end / hop) - 1`` of each interval."""
    mask = np.zeros(n_frames, dtype=bool)
    for iv in scope:
        a = min(max(time_to_frame(iv.start_s, hop_s), 0), n_frames)
        b = min(max(time_to_frame(iv.end_s, hop_s), 0), n_frames)
        mask[a:b] = True
    return mask


def pair_to_dpo_inputs(pair: PreferencePair, provider: Callable, beta: float,
                       hop_s: float = DEFAULT_HOP_S) -> DpoInputs:
    """Fetch residuals for both samples and attach the loser's error mask.

    ``provider(sample_id)`` returns an object with ``eps``, ``pred_theta``,
    ``pred_ref``, ``timestep`` and ``horizon``.  The winner mask is all true.
    """
    w, l = provider(pair.winner_id), provider(pair.loser_id)
    sizes = {np.size(getattr(r, name)) for r in (w, l) for name in ("eps", "pred_theta", "pred_ref")}
    if len(sizes) != 1:
        raise ProviderMismatch(f"residual lengths differ: {sorted(sizes)}")
    if (w.timestep, w.horizon) != (l.timestep, l.horizon):
        raise ProviderMismatch("winner and loser residuals were drawn at different timesteps")
    n = sizes.pop()
    return DpoInputs(
        eps_w=w.eps, eps_l=l.eps, pred_theta_w=w.pred_theta, pred_theta_l=l.pred_theta,
        pred_ref_w=w.pred_ref, pred_ref_l=l.pred_ref, beta=beta, timestep=w.timestep, horizon=w.horizon,
        frame_mask_w=np.ones(n, dtype=bool), frame_mask_l=scope_to_frame_mask(pair.loser_error_scope, n, hop_s),
    )
