from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from facetrack.services.core_model import BBox, InvalidValueError, iou_matrix


@dataclass(frozen=True)
class CostMatrix:
    """IOU scores, rows are live tracklet predictions and columns detections."""

    values: np.ndarray

    def __post_init__(self) -> None:
        if self.values.ndim != 2:
            raise InvalidValueError(f"cost matrix must be 2-D, got shape {self.values.shape}")
        if self.values.size and (self.values.min() < 0.0 or self.values.max() > 1.0):
            raise InvalidValueError("cost matrix entries must lie in [0, 1]")

    @classmethod
    def from_boxes(cls, predictions: Sequence[BBox], detections: Sequence[BBox]) -> CostMatrix:
        return cls(iou_matrix(predictions, detections))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape  # type: ignore[return-value]


@dataclass
class AssociationResult:
    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_tracklets: list[int] = field(default_factory=list)
    unmatched_detections: list[int] = field(default_factory=list)

    def total(self, costs: CostMatrix) -> float:
        return float(sum(costs.values[r, c] for r, c in self.matches))


TIE_TOLERANCE = 1e-9


def _best_total(values: np.ndarray, rows: Sequence[int], cols: Sequence[int]) -> float:
    if not rows or not cols:
        return 0.0
    sub = values[np.ix_(rows, cols)]
    row_ind, col_ind = linear_sum_assignment(sub, maximize=True)
    return float(sub[row_ind, col_ind].sum())


def _lexicographic_optimum(values: np.ndarray) -> list[tuple[int, int]]:
    """Among the maximum-total matchings of size min(K, N), the one whose sorted
    (row, col) list is smallest: rows are matched in order to the lowest
    column that keeps the optimum reachable."""
    num_rows, num_cols = values.shape
    free_cols = list(range(num_cols))
    remaining = _best_total(values, list(range(num_rows)), free_cols)
    matches: list[tuple[int, int]] = []
    for row in range(num_rows):
        later_rows = list(range(row + 1, num_rows))
        chosen = None
        for col in free_cols:
            rest = [c for c in free_cols if c != col]
            if values[row, col] + _best_total(values, later_rows, rest) >= remaining - TIE_TOLERANCE:
                chosen = col
                break
        if chosen is None:
            # only reachable when rows outnumber the free columns
            continue
        matches.append((row, chosen))
        remaining -= values[row, chosen]
        free_cols.remove(chosen)
        if not free_cols:
            break
    return matches


def solve_assignment(costs: CostMatrix) -> AssociationResult:
    """Maximum-total-IOU matching of size min(K_t, N_t).

    Rectangular matrices are solved directly, without dummy padding. Ties
    between optimal matchings go to the lowest row index, then the lowest
    column index.
    """
    rows, cols = costs.shape
    if rows == 0 or cols == 0:
        return AssociationResult(
            matches=[],
            unmatched_tracklets=list(range(rows)),
            unmatched_detections=list(range(cols)),
        )
    matches = _lexicographic_optimum(costs.values)
    matched_rows = {r for r, _ in matches}
    matched_cols = {c for _, c in matches}
    return AssociationResult(
        matches=matches,
        unmatched_tracklets=[r for r in range(rows) if r not in matched_rows],
        unmatched_detections=[c for c in range(cols) if c not in matched_cols],
    )


def gate_matches(result: AssociationResult, costs: CostMatrix, iou_threshold: float) -> AssociationResult:
    """Keep matches whose IOU is strictly above the threshold; demote the rest."""
    kept: list[tuple[int, int]] = []
    unmatched_tracklets = list(result.unmatched_tracklets)
    unmatched_detections = list(result.unmatched_detections)
    for row, col in result.matches:
        if costs.values[row, col] > iou_threshold:
            kept.append((row, col))
        else:
            unmatched_tracklets.append(row)
            unmatched_detections.append(col)
    return AssociationResult(
        matches=kept,
        unmatched_tracklets=sorted(unmatched_tracklets),
        unmatched_detections=sorted(unmatched_detections),
    )


def associate(predictions: Sequence[BBox], detections: Sequence[BBox], iou_threshold: float) -> AssociationResult:
    costs = CostMatrix.from_boxes(predictions, detections)
    return gate_matches(solve_assignment(costs), costs, iou_threshold)
