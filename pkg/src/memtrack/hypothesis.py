"""Per-frame hypothesis evaluation.

Covers primary-mask selection under the IoU gate, interference refinement
of the primary mask against the alternative candidates, bounding-box band
classification, and cumulative log-IoU branch scoring.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

from . import masks as mk
from .masks import BinaryMask

ClassId = str
NUM_BRANCHES = 3


@dataclass(frozen=True)
class CandidateMask:
    class_masks: Mapping[ClassId, BinaryMask]
    predicted_iou: Mapping[ClassId, float]
    confidence: Mapping[ClassId, float]

    def __post_init__(self) -> None:
        keys = set(self.class_masks)
        if keys != set(self.predicted_iou) or keys != set(self.confidence):
            raise ValueError("class_masks, predicted_iou and confidence must share keys")
        shapes = {m.shape for m in self.class_masks.values()}
        if len(shapes) > 1:
            raise ValueError(f"candidate masks disagree on shape: {sorted(shapes)}")
        for name, scores in (("predicted_iou", self.predicted_iou), ("confidence", self.confidence)):
            for c, v in scores.items():
                if not 0.0 <= v <= 1.0:
                    raise ValueError(f"{name}[{c}]={v} outside [0, 1]")

    @property
    def classes(self) -> frozenset:
        return frozenset(self.class_masks)


@dataclass(frozen=True)
class CandidateSet:
    frame_index: int
    candidates: tuple[CandidateMask, ...]

    def __post_init__(self) -> None:
        if self.frame_index < 0:
            raise ValueError("frame_index must be nonnegative")
        if len(self.candidates) != NUM_BRANCHES:
            raise ValueError(f"expected {NUM_BRANCHES} candidates, got {len(self.candidates)}")
        shapes = {m.shape for c in self.candidates for m in c.class_masks.values()}
        if len(shapes) > 1:
            raise ValueError("candidates disagree on mask shape")


@dataclass(frozen=True)
class ScoreState:
    cumulative: tuple[float, float, float] = (0.0, 0.0, 0.0)
    epsilon: float = 1e-6

    def __post_init__(self) -> None:
        if len(self.cumulative) != NUM_BRANCHES:
            raise ValueError("one cumulative score per branch")
        if not all(math.isfinite(v) for v in self.cumulative):
            raise ValueError(f"non-finite cumulative score {self.cumulative}")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")


class Verdict(enum.Enum):
    CLEAN = "clean"
    INTERFERENCE = "interference"
    REDUNDANT = "redundant"


@dataclass(frozen=True)
class InterferenceVerdict:
    kind: Verdict
    ratio: float


@dataclass(frozen=True)
class RefinementResult:
    primary_index: Optional[int]
    refined_masks: Mapping[ClassId, BinaryMask] = field(default_factory=dict)
    verdict: Optional[InterferenceVerdict] = None
    class_verdicts: Mapping[ClassId, InterferenceVerdict] = field(default_factory=dict)


def avg_iou(c: CandidateMask, present: Iterable[ClassId]) -> float:
    present = list(present)
    if not present:
        raise ValueError("avg_iou needs at least one present class")
    return sum(c.predicted_iou[k] for k in present) / len(present)


def avg_confidence(c: CandidateMask, present: Iterable[ClassId]) -> float:
    present = list(present)
    if not present:
        raise ValueError("avg_confidence needs at least one present class")
    return sum(c.confidence[k] for k in present) / len(present)


def _argmax(values: Sequence[float]) -> int:
    # strict > keeps the lowest index on ties
    best = 0
    for i in range(1, len(values)):
        if values[i] > values[best]:
            best = i
    return best


def select_primary(s: CandidateSet, present: Iterable[ClassId], theta: float = 0.8) -> Optional[int]:
    """Branch with the best mean predicted IoU, or None if it falls below ``theta``."""
    present = sorted(present)
    if not present:
        return None
    scores = [avg_iou(c, present) for c in s.candidates]
    best = _argmax(scores)
    return best if scores[best] >= theta else None


def refine_interference(
    primary_mask: BinaryMask,
    alternative_masks: Sequence[BinaryMask],
    connectivity: int = 4,
) -> BinaryMask:
    """CC(M_s minus overlap) united with the overlap, where overlap = M_s ∩ union(alternatives)."""
    alt = mk.union_all(alternative_masks, *primary_mask.shape)
    overlap = mk.intersect(primary_mask, alt)
    rest = mk.subtract(primary_mask, overlap)
    return mk.union(mk.largest_connected_component(rest, connectivity), overlap)


def classify_ratio(ratio: float, lo: float = 0.6, hi: float = 0.9) -> Verdict:
    if ratio < lo:
        return Verdict.INTERFERENCE
    if ratio > hi:
        return Verdict.REDUNDANT
    return Verdict.CLEAN


def classify_interference(
    refined: BinaryMask, primary: BinaryMask, lo: float = 0.6, hi: float = 0.9
) -> InterferenceVerdict:
    outer = mk.bounding_box(primary)
    if outer is None:
        return InterferenceVerdict(Verdict.REDUNDANT, 1.0)
    inner = mk.bounding_box(refined)
    ratio = 0.0 if inner is None else mk.bbox_overlap_ratio(inner, outer)
    return InterferenceVerdict(classify_ratio(ratio, lo, hi), ratio)


def refine_candidates(
    s: CandidateSet,
    present: Iterable[ClassId],
    theta: float = 0.8,
    lo: float = 0.6,
    hi: float = 0.9,
    connectivity: int = 4,
) -> RefinementResult:
    """Run the gate, per-class refinement and classification for one frame.

    The frame verdict is the classification of the smallest per-class ratio,
    which is Interference if any class is, else Clean if any class is, else
    Redundant.
    """
    present = sorted(present)
    primary = select_primary(s, present, theta)
    if primary is None:
        return RefinementResult(primary_index=None)
    refined: dict[ClassId, BinaryMask] = {}
    verdicts: dict[ClassId, InterferenceVerdict] = {}
    for c in present:
        m_s = s.candidates[primary].class_masks[c]
        alts = [s.candidates[k].class_masks[c] for k in range(NUM_BRANCHES) if k != primary]
        m_f = refine_interference(m_s, alts, connectivity)
        refined[c] = m_f
        verdicts[c] = classify_interference(m_f, m_s, lo, hi)
    ratio = min(v.ratio for v in verdicts.values())
    frame = InterferenceVerdict(classify_ratio(ratio, lo, hi), ratio)
    return RefinementResult(primary, refined, frame, verdicts)


def update_scores(state: ScoreState, s: CandidateSet, present: Iterable[ClassId]) -> ScoreState:
    present = sorted(present)
    if not present:
        return state
    eps = state.epsilon
    new = tuple(
        acc + math.log(avg_iou(c, present) + eps) for acc, c in zip(state.cumulative, s.candidates)
    )
    return ScoreState(new, eps)


def select_branch(state: ScoreState) -> int:
    return _argmax(state.cumulative)


def greedy_branch(s: CandidateSet, present: Iterable[ClassId]) -> int:
    """Per-frame argmax of mean predicted IoU (no gate)."""
    present = sorted(present)
    if not present:
        return 0
    return _argmax([avg_iou(c, present) for c in s.candidates])
