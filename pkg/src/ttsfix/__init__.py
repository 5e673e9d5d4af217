"""Locate erroneous segments in synthesized speech, mask them, and regenerate
only those regions until the output passes a quality gate.

The numerical pieces (alignment, metrics, losses, dataset handling) are plain
numpy; the neural evaluator and editor are pluggable, with seeded simulated
stand-ins in :mod:`ttsfix.sim`.
"""
from .alignment import DEFAULT_COST, UNIT_COST, CostSpec, DiscrepancySet, EditOp, OpKind, dtw_align
from .core import (QualityScore, SpeechTrack, TextSequence, TimeInterval, TimeScope, WordSegment)
from .correction import CorrectionConfig, CorrectionOutcome, EvaluationReport, MarginPolicy, correct
from .errors import TtsfixError

__version__ = "0.1.0"

__all__ = [
    "CostSpec", "CorrectionConfig", "CorrectionOutcome", "DEFAULT_COST", "DiscrepancySet", "EditOp",
    "EvaluationReport", "MarginPolicy", "OpKind", "QualityScore", "SpeechTrack", "TextSequence",
    "TimeInterval", "TimeScope", "TtsfixError", "UNIT_COST", "WordSegment", "correct", "dtw_align",
]
