"""Manifests of annotated erroneous-speech samples: line-delimited JSON
records, stratified train/val/test splitting and per-issue statistics."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import networkx as nx
import numpy as np

from .core import QualityScore, TextSequence, TimeScope
from .errors import DuplicateId, EmptyManifest, InvariantViolation, ParseError, TooFewSamples
from .records import dumps, scope_from_json, scope_to_json
from .sim import IssueType

DEFAULT_RATIOS = (20 / 22, 1 / 22, 1 / 22)
ISSUE_ORDER = (IssueType.COMMON, IssueType.REPEATED, IssueType.PUNCTUATION, IssueType.ABNORMAL, IssueType.CLEAN)
STATS_HEADER = "issue_type,count,avg_words,avg_audio_len_s"

FIELDS = ("id", "target_text", "track_path", "error_scope", "quality", "issue_type", "transcript", "duration_s")


@dataclass(frozen=True)
class FgesSample:
    id: str
    target_text: TextSequence
    track_path: str
    error_scope: TimeScope
    quality: QualityScore
    issue_type: IssueType
    transcript: TextSequence
    duration_s: float

    def __post_init__(self):
        if not self.id:
            raise InvariantViolation(self.id, "empty id")
        if self.issue_type is IssueType.CLEAN and self.error_scope:
            raise InvariantViolation(self.id, "clean sample with a non-empty error scope")
        if not self.duration_s >= 0:
            raise InvariantViolation(self.id, "negative duration")

    def to_record(self) -> dict:
        return {
            "id": self.id,
            "target_text": str(self.target_text),
            "track_path": self.track_path,
            "error_scope": scope_to_json(self.error_scope),
            "quality": self.quality.value,
            "issue_type": self.issue_type.value,
            "transcript": str(self.transcript),
            "duration_s": self.duration_s,
        }

    @classmethod
    def from_record(cls, rec: dict) -> "FgesSample":
        sid = str(rec.get("id", ""))
        try:
            quality = QualityScore(float(rec["quality"]))
        except ValueError as exc:
            raise InvariantViolation(sid, str(exc)) from None
        try:
            scope = scope_from_json(rec["error_scope"])
            issue = IssueType(rec["issue_type"])
        except ValueError as exc:
            raise InvariantViolation(sid, str(exc)) from None
        return cls(sid, TextSequence.from_text(rec["target_text"]), str(rec["track_path"]), scope, quality,
                   issue, TextSequence.from_text(rec["transcript"]), float(rec["duration_s"]))


@dataclass(frozen=True)
class FgesManifest:
    samples: tuple[FgesSample, ...] = ()
    split_ratios: tuple[float, float, float] = DEFAULT_RATIOS

    def __post_init__(self):
        object.__setattr__(self, "samples", tuple(self.samples))
        seen = set()
        for s in self.samples:
            if s.id in seen:
                raise DuplicateId(s.id)
            seen.add(s.id)
        r = self.split_ratios
        if len(r) != 3 or any(x <= 0 for x in r) or abs(sum(r) - 1.0) > 1e-9:
            raise ValueError(f"split ratios must be three positive fractions summing to 1, got {r}")

    def __len__(self) -> int:
        return len(self.samples)


def normalize_ratios(train: float, val: float, test: float) -> tuple[float, float, float]:
    total = train + val + test
    return (train / total, val / total, test / total)


def save_manifest(manifest: FgesManifest, path) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        for s in manifest.samples:
            fh.write(dumps(s.to_record()) + "\n")


def load_manifest(path, split_ratios: tuple[float, float, float] = DEFAULT_RATIOS) -> FgesManifest:
    samples = []
    seen = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(lineno, f"invalid JSON ({exc.msg})") from None
            if not isinstance(rec, dict):
                raise ParseError(lineno, "record is not an object")
            missing = [f for f in FIELDS if f not in rec]
            if missing:
                raise ParseError(lineno, f"missing fields {missing}")
            try:
                sample = FgesSample.from_record(rec)
            except InvariantViolation:
                raise
            except (TypeError, ValueError, KeyError) as exc:
                raise ParseError(lineno, str(exc)) from None
            if sample.id in seen:
                raise DuplicateId(sample.id)
            seen.add(sample.id)
            samples.append(sample)
    return FgesManifest(tuple(samples), split_ratios)


# ---------------------------------------------------------------------------
# splitting

def _split_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment; every split gets >= 1 sample when n >= 3."""
    raw = [n * r for r in ratios]
    sizes = [math.floor(x) for x in raw]
    order = sorted(range(3), key=lambda k: (-(raw[k] - sizes[k]), k))
    for k in order[: n - sum(sizes)]:
        sizes[k] += 1
    for k in range(3):
        if sizes[k] == 0:
            donor = max(range(3), key=lambda q: sizes[q])
            sizes[donor] -= 1
            sizes[k] += 1
    return sizes


def _stratum_quotas(strata_sizes: list[int], split_sizes: list[int]) -> np.ndarray:
    """Integer table (stratum x split) with fixed margins whose cells are the
    floor or ceiling of the proportional share."""
    n = sum(strata_sizes)
    # exact integer shares: cell (i, j) is s_i * c_j / n
    prod = np.array([[s * c for c in split_sizes] for s in strata_sizes], dtype=np.int64)
    table = prod // n
    row_need = np.array(strata_sizes) - table.sum(axis=1)
    col_need = np.array(split_sizes) - table.sum(axis=0)
    g = nx.DiGraph()
    for i, need in enumerate(row_need):
        if need:
            g.add_edge("src", ("row", i), capacity=int(need))
    for j, need in enumerate(col_need):
        if need:
            g.add_edge(("col", j), "sink", capacity=int(need))
    for i in range(len(strata_sizes)):
        for j in range(3):
            if prod[i, j] % n:
                g.add_edge(("row", i), ("col", j), capacity=1)
    if g.number_of_edges():
        _, flow = nx.maximum_flow(g, "src", "sink")
        for i in range(len(strata_sizes)):
            for j in range(3):
                table[i, j] += flow.get(("row", i), {}).get(("col", j), 0)
    # integral max-flow on a feasible fractional table always saturates both margins
    assert table.sum(axis=0).tolist() == list(split_sizes)
    return table


def split(manifest: FgesManifest, seed: int = 0) -> tuple[FgesManifest, FgesManifest, FgesManifest]:
    """Deterministic shuffled partition, stratified by issue type."""
    n = len(manifest)
    if n < 3:
        raise TooFewSamples(f"need at least 3 samples to split, got {n}")
    sizes = _split_sizes(n, manifest.split_ratios)
    strata: dict[IssueType, list[FgesSample]] = {}
    for s in manifest.samples:
        strata.setdefault(s.issue_type, []).append(s)
    keys = [k for k in ISSUE_ORDER if k in strata]
    quotas = _stratum_quotas([len(strata[k]) for k in keys], sizes)
    rng = np.random.default_rng(seed)
    parts: list[list[FgesSample]] = [[], [], []]
    for i, k in enumerate(keys):
        members = strata[k]
        perm = rng.permutation(len(members))
        start = 0
        for j in range(3):
            parts[j].extend(members[p] for p in perm[start:start + quotas[i, j]])
            start += quotas[i, j]
    out = []
    for part in parts:
        order = rng.permutation(len(part))
        out.append(FgesManifest(tuple(part[p] for p in order), manifest.split_ratios))
    return tuple(out)


# ---------------------------------------------------------------------------
# statistics

@dataclass(frozen=True)
class IssueStats:
    issue_type: str
    count: int
    avg_words: float
    avg_audio_len_s: float


def stats(manifest: FgesManifest) -> list[IssueStats]:
    """Per issue type: sample count, mean target word count, mean duration."""
    if not len(manifest):
        raise EmptyManifest("manifest has no samples")
    rows = []
    for issue in ISSUE_ORDER:
        group = [s for s in manifest.samples if s.issue_type is issue]
        if not group:
            continue
        rows.append(IssueStats(
            issue.value, len(group),
            math.fsum(s.target_text.word_count for s in group) / len(group),
            math.fsum(s.duration_s for s in group) / len(group),
        ))
    return rows


def overall_stats(rows: Sequence[IssueStats]) -> IssueStats:
    total = sum(r.count for r in rows)
    return IssueStats("All", total,
                      math.fsum(r.count * r.avg_words for r in rows) / total,
                      math.fsum(r.count * r.avg_audio_len_s for r in rows) / total)


def stats_csv(rows: Sequence[IssueStats]) -> str:
    lines = [STATS_HEADER]
    lines += [f"{r.issue_type},{r.count},{r.avg_words:.6f},{r.avg_audio_len_s:.6f}" for r in rows]
    return "\n".join(lines) + "\n"
