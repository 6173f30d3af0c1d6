"""Long-term tracking evaluation.

Ground-truth identities are matched to predicted track IDs frame by frame.
A change of the matched ID is a soft mismatch when the new ID was never
seen before and a hard mismatch when it already belonged to some track.
Frag and IDSW divide the soft and hard counts by the number of ground-truth
detections; completion rates count the identities whose majority track
covers at least X% of their ground-truth detections.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional

import numpy as np

from facetrack import FaceTrackError
from facetrack.services import correction
from facetrack.services.association import CostMatrix, solve_assignment
from facetrack.services.core_model import iou_matrix
from facetrack.services.correction import MergeSet
from facetrack.services.ingest import AssignmentLog, GroundTruth

logger = logging.getLogger(__name__)

DEFAULT_GT_IOU = 0.5
CR_GRID = tuple(range(1, 101))


class MetricError(FaceTrackError):
    pass


# ----------------------------------------------------------------------
# Frame matching
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class FrameMatching:
    """frame -> [(gt identity, predicted track id)], one-to-one within a frame."""

    pairs: dict[int, list[tuple[str, int]]] = field(default_factory=dict)

    def frames(self) -> list[int]:
        return sorted(self.pairs)

    def by_identity(self) -> dict[str, list[tuple[int, int]]]:
        tracks: dict[str, list[tuple[int, int]]] = {}
        for frame in self.frames():
            for identity, track_id in self.pairs[frame]:
                tracks.setdefault(identity, []).append((frame, track_id))
        return tracks


def match_frames(gt: GroundTruth, log: AssignmentLog, iou_threshold: float = DEFAULT_GT_IOU) -> FrameMatching:
    predicted = log.by_frame()
    pairs: dict[int, list[tuple[str, int]]] = {}
    for frame, truths in gt.by_frame().items():
        entries = predicted.get(frame)
        if not entries:
            continue
        scores = iou_matrix([t.box for t in truths], [e.box for e in entries])
        # Inadmissible pairs must not steer the optimum.
        scores[scores < iou_threshold] = 0.0
        result = solve_assignment(CostMatrix(scores))
        matched = [
            (truths[r].identity, entries[c].track_id)
            for r, c in result.matches
            if scores[r, c] >= iou_threshold and scores[r, c] > 0.0
        ]
        if matched:
            pairs[frame] = sorted(matched)
    return FrameMatching(pairs=pairs)


# ----------------------------------------------------------------------
# Mismatch events
# ----------------------------------------------------------------------


class MismatchKind(enum.Enum):
    SOFT = "soft"
    HARD = "hard"


@dataclass(frozen=True)
class MismatchEvent:
    frame: int
    identity: str
    old_id: int
    new_id: int
    kind: MismatchKind


@dataclass
class MismatchEvents:
    by_identity: dict[str, list[MismatchEvent]] = field(default_factory=dict)

    def _count(self, kind: MismatchKind) -> int:
        return sum(1 for events in self.by_identity.values() for e in events if e.kind is kind)

    @property
    def num_soft(self) -> int:
        return self._count(MismatchKind.SOFT)

    @property
    def num_hard(self) -> int:
        return self._count(MismatchKind.HARD)


def classify_mismatches(matching: FrameMatching) -> MismatchEvents:
    events = MismatchEvents()
    current: dict[str, int] = {}
    seen: set[int] = set()
    for frame in matching.frames():
        pairs = matching.pairs[frame]
        for identity, track_id in pairs:
            previous = current.get(identity)
            if previous is not None and previous != track_id:
                taken = track_id in seen or any(i != identity and t == track_id for i, t in pairs)
                kind = MismatchKind.HARD if taken else MismatchKind.SOFT
                events.by_identity.setdefault(identity, []).append(
                    MismatchEvent(frame=frame, identity=identity, old_id=previous, new_id=track_id, kind=kind)
                )
            current[identity] = track_id
        seen.update(t for _, t in pairs)
    return events


def frag(events: MismatchEvents, num_dets: int) -> float:
    if num_dets <= 0:
        raise MetricError("Frag is undefined without ground-truth detections")
    return events.num_soft / num_dets


def idsw(events: MismatchEvents, num_dets: int) -> float:
    if num_dets <= 0:
        raise MetricError("IDSW is undefined without ground-truth detections")
    return events.num_hard / num_dets


# ----------------------------------------------------------------------
# Completion rates
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityCompletion:
    canonical_id: Optional[int]
    matched: int
    total: int

    @property
    def completion(self) -> float:
        return self.matched / self.total

    def reaches(self, percent: int) -> bool:
        return self.matched * 100 >= percent * self.total

    def as_dict(self) -> dict[str, Any]:
        return {
            "canonical_id": self.canonical_id,
            "matched": self.matched,
            "total": self.total,
            "completion": self.completion,
        }


def _majority_id(track: list[tuple[int, int]]) -> tuple[Optional[int], int]:
    counts: dict[int, int] = {}
    first_seen: dict[int, int] = {}
    for frame, track_id in track:
        counts[track_id] = counts.get(track_id, 0) + 1
        first_seen.setdefault(track_id, frame)
    if not counts:
        return None, 0
    best = min(counts, key=lambda t: (-counts[t], first_seen[t]))
    return best, counts[best]


def identity_completions(matching: FrameMatching, gt: GroundTruth) -> dict[str, IdentityCompletion]:
    tracks = matching.by_identity()
    completions: dict[str, IdentityCompletion] = {}
    for identity, total in sorted(gt.counts_by_identity().items()):
        canonical_id, matched = _majority_id(tracks.get(identity, []))
        completions[identity] = IdentityCompletion(canonical_id=canonical_id, matched=matched, total=total)
    return completions


def cr_curve(completions: Mapping[str, IdentityCompletion]) -> tuple[list[float], float]:
    """CR_X for X = 1..100 and their mean."""
    if not completions:
        raise MetricError("completion rates need at least one ground-truth identity")
    n = len(completions)
    cr = [sum(1 for c in completions.values() if c.reaches(x)) / n for x in CR_GRID]
    return cr, float(np.mean(cr))


def completion_rates(
    matching: FrameMatching, gt: GroundTruth
) -> tuple[list[float], float, dict[str, IdentityCompletion]]:
    completions = identity_completions(matching, gt)
    cr, crs = cr_curve(completions)
    return cr, crs, completions


# ----------------------------------------------------------------------
# Reports
# ----------------------------------------------------------------------


@dataclass
class MetricsReport:
    num_dets: int
    num_soft: int
    num_hard: int
    cr: list[float]
    crs: float
    per_identity: dict[str, IdentityCompletion]
    fps: Optional[float] = None

    @property
    def frag(self) -> float:
        return self.num_soft / self.num_dets

    @property
    def idsw(self) -> float:
        return self.num_hard / self.num_dets

    def cr_at(self, percent: int) -> float:
        """CR_X on the 0..100 grid; every identity reaches 0%."""
        return 1.0 if percent == 0 else self.cr[percent - 1]

    def as_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "frag": self.frag,
            "idsw": self.idsw,
            "crs": self.crs,
            "num_dets": self.num_dets,
            "num_soft": self.num_soft,
            "num_hard": self.num_hard,
            "cr": list(self.cr),
            "per_identity": {k: v.as_dict() for k, v in self.per_identity.items()},
        }
        if self.fps is not None:
            data["fps"] = self.fps
        return data

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MetricsReport:
        try:
            per_identity = {
                str(k): IdentityCompletion(
                    canonical_id=None if v["canonical_id"] is None else int(v["canonical_id"]),
                    matched=int(v["matched"]),
                    total=int(v["total"]),
                )
                for k, v in data["per_identity"].items()
            }
            return cls(
                num_dets=int(data["num_dets"]),
                num_soft=int(data["num_soft"]),
                num_hard=int(data["num_hard"]),
                cr=[float(v) for v in data["cr"]],
                crs=float(data["crs"]),
                per_identity=per_identity,
                fps=None if data.get("fps") is None else float(data["fps"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise MetricError(f"malformed metrics report: {exc}") from exc


def evaluate(
    gt: GroundTruth,
    log: AssignmentLog,
    *,
    iou_threshold: float = DEFAULT_GT_IOU,
    merges: Optional[MergeSet] = None,
    fps: Optional[float] = None,
) -> MetricsReport:
    """Score one video's assignment log against its ground truth.

    When ``merges`` is given the log is canonicalised through it first.
    """
    if gt.num_dets == 0:
        raise MetricError("ground truth holds no detections")
    if merges is not None:
        log = correction.apply(log, merges)
    matching = match_frames(gt, log, iou_threshold)
    events = classify_mismatches(matching)
    cr, crs, completions = completion_rates(matching, gt)
    report = MetricsReport(
        num_dets=gt.num_dets,
        num_soft=events.num_soft,
        num_hard=events.num_hard,
        cr=cr,
        crs=crs,
        per_identity=completions,
        fps=fps,
    )
    logger.info(
        "evaluation_finished dets=%s frag=%.5f idsw=%.5f crs=%.4f",
        report.num_dets,
        frag(events, gt.num_dets),
        idsw(events, gt.num_dets),
        report.crs,
    )
    return report


def aggregate(reports: Mapping[str, MetricsReport]) -> MetricsReport:
    """Whole-dataset report: counts are pooled, identities keyed by ``video/identity``."""
    if not reports:
        raise MetricError("nothing to aggregate")
    completions = {
        f"{video}/{identity}": completion
        for video, report in reports.items()
        for identity, completion in report.per_identity.items()
    }
    cr, crs = cr_curve(completions)
    fps_values = [r.fps for r in reports.values() if r.fps is not None]
    return MetricsReport(
        num_dets=sum(r.num_dets for r in reports.values()),
        num_soft=sum(r.num_soft for r in reports.values()),
        num_hard=sum(r.num_hard for r in reports.values()),
        cr=cr,
        crs=crs,
        per_identity=completions,
        fps=float(np.mean(fps_values)) if len(fps_values) == len(reports) else None,
    )
