import itertools
import time

import numpy as np
import pytest

from facetrack.services.association import CostMatrix, associate, gate_matches, solve_assignment
from facetrack.services.core_model import BBox, InvalidValueError


def _brute_force_max(values: np.ndarray) -> float:
    rows, cols = values.shape
    if rows <= cols:
        return max(
            sum(values[r, c] for r, c in zip(range(rows), perm))
            for perm in itertools.permutations(range(cols), rows)
        )
    return _brute_force_max(values.T)


def test_solver_total_equals_brute_force(rng):
    solver_time = 0.0
    for _ in range(500):
        rows, cols = rng.integers(1, 8, size=2)
        values = rng.random((rows, cols))
        tick = time.perf_counter()
        result = solve_assignment(CostMatrix(values))
        solver_time += time.perf_counter() - tick
        assert len(result.matches) == min(rows, cols)
        assert result.total(CostMatrix(values)) == pytest.approx(_brute_force_max(values), abs=1e-12)
    assert solver_time < 5.0


def test_solver_is_deterministic(rng):
    values = rng.random((5, 7))
    first = solve_assignment(CostMatrix(values))
    for _ in range(5):
        assert solve_assignment(CostMatrix(values.copy())).matches == first.matches


def test_rectangular_leftovers():
    values = np.array([[0.9, 0.1], [0.2, 0.8], [0.5, 0.4]])
    result = solve_assignment(CostMatrix(values))
    assert result.matches == [(0, 0), (1, 1)]
    assert result.unmatched_tracklets == [2]
    assert result.unmatched_detections == []


def test_empty_dimensions():
    result = solve_assignment(CostMatrix(np.zeros((0, 3))))
    assert result.matches == []
    assert result.unmatched_detections == [0, 1, 2]
    result = solve_assignment(CostMatrix(np.zeros((2, 0))))
    assert result.unmatched_tracklets == [0, 1]


def test_gate_is_strict():
    values = np.array([[0.25, 0.0], [0.0, 0.26]])
    gated = gate_matches(solve_assignment(CostMatrix(values)), CostMatrix(values), 0.25)
    assert gated.matches == [(1, 1)]
    assert gated.unmatched_tracklets == [0]
    assert gated.unmatched_detections == [0]


def test_cost_matrix_validation():
    with pytest.raises(InvalidValueError):
        CostMatrix(np.array([1.0, 0.5]))
    with pytest.raises(InvalidValueError):
        CostMatrix(np.array([[1.5]]))


def test_associate_on_boxes():
    predictions = [BBox(0, 0, 10, 10), BBox(100, 0, 10, 10)]
    detections = [BBox(101, 1, 10, 10), BBox(500, 500, 10, 10), BBox(1, 0, 10, 10)]
    result = associate(predictions, detections, 0.25)
    assert result.matches == [(0, 2), (1, 0)]
    assert result.unmatched_detections == [1]
    assert result.unmatched_tracklets == []


def _matchings(rows: int, cols: int):
    if rows <= cols:
        for perm in itertools.permutations(range(cols), rows):
            yield sorted(zip(range(rows), perm))
    else:
        for perm in itertools.permutations(range(rows), cols):
            yield sorted(zip(perm, range(cols)))


def _lexicographic_best(values: np.ndarray) -> list[tuple[int, int]]:
    scored = [(sum(values[r, c] for r, c in m), m) for m in _matchings(*values.shape)]
    best = max(total for total, _ in scored)
    return min(m for total, m in scored if total >= best - 1e-9)


def test_ties_go_to_lowest_row_then_lowest_column():
    values = np.array([[0.0, 0.5, 1.0], [0.5, 0.5, 1.0], [1.0, 1.0, 0.5]])
    assert solve_assignment(CostMatrix(values)).matches == [(0, 1), (1, 2), (2, 0)]
    assert solve_assignment(CostMatrix(np.zeros((2, 3)))).matches == [(0, 0), (1, 1)]
    assert solve_assignment(CostMatrix(np.ones((3, 2)))).matches == [(0, 0), (1, 1)]


def test_tied_matrices_match_lexicographic_brute_force(rng):
    for _ in range(300):
        rows, cols = rng.integers(1, 5, size=2)
        values = rng.choice([0.0, 0.5, 1.0], size=(rows, cols))
        result = solve_assignment(CostMatrix(values))
        assert result.matches == _lexicographic_best(values)


def test_raising_the_gate_never_adds_matches(rng):
    for _ in range(100):
        values = rng.random((6, 6)) * rng.integers(0, 2, size=(6, 6))
        costs = CostMatrix(values)
        solved = solve_assignment(costs)
        counts = [len(gate_matches(solved, costs, t).matches) for t in np.linspace(0.0, 1.0, 21)]
        assert counts == sorted(counts, reverse=True)
