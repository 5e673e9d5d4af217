"""JSON record conversions for tracks, scopes and evaluator reports.

Track file layout::

    {"hop_s": 0.02,
     "frames": [["the", 0.0], ["the", 0.0], ...],
     "word_segments": [[0, 0.0, 0.4], [1, 0.4, 0.8], ...]}

Word indices are zero-based positions in the target's word list.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

from .core import Frame, QualityScore, SpeechTrack, TextSequence, TimeInterval, TimeScope, WordSegment
from .correction import EvaluationReport


def scope_to_json(scope: TimeScope) -> list[list[float]]:
    return scope.to_pairs()


def scope_from_json(pairs) -> TimeScope:
    return TimeScope.from_pairs(pairs or [])


def track_to_dict(track: SpeechTrack) -> dict:
    return {
        "hop_s": track.hop_s,
        "frames": [[f.unit_label, f.corruption] for f in track.frames],
        "word_segments": [[s.word_index, s.interval.start_s, s.interval.end_s] for s in track.word_segments],
    }


def track_from_dict(d: dict) -> SpeechTrack:
    frames = tuple(Frame(str(label), float(c)) for label, c in d["frames"])
    segments = tuple(WordSegment(int(i), TimeInterval(float(s), float(e))) for i, s, e in d["word_segments"])
    return SpeechTrack(frames, float(d["hop_s"]), segments)


def report_to_dict(report: EvaluationReport) -> dict:
    return {"transcript": str(report.transcript), "scope": scope_to_json(report.scope),
            "quality": report.quality.value}


def report_from_dict(d: dict) -> EvaluationReport:
    return EvaluationReport(TextSequence.from_text(d["transcript"]), scope_from_json(d["scope"]),
                            QualityScore(float(d["quality"])))


def dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def save_track(track: SpeechTrack, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(dumps(track_to_dict(track)) + "\n", encoding="utf-8")


def load_track(path) -> SpeechTrack:
    return track_from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def config_hash(config: dict) -> str:
    return hashlib.sha256(dumps(config).encode("utf-8")).hexdigest()[:16]
