"""Tests for the shared geometric primitives."""

import numpy as np
import pytest

from centroid_sec.core import (
    AttackContext,
    CentroidState,
    RandomSource,
    WorkingSet,
    anomaly_score,
    as_point,
    relative_displacement,
)


class TestAsPoint:
    def test_converts_lists(self):
        p = as_point([1.0, 2.0])
        assert p.dtype == np.float64
        np.testing.assert_array_equal(p, [1.0, 2.0])

    def test_rejects_2d(self):
        with pytest.raises(ValueError, match="1-D"):
            as_point(np.zeros((2, 2)))

    def test_rejects_nan_and_inf(self):
        with pytest.raises(ValueError, match="non-finite"):
            as_point([np.nan, 0.0])
        with pytest.raises(ValueError, match="non-finite"):
            as_point([np.inf, 0.0])


class TestRandomSource:
    def test_bit_exact_replay(self):
        a = RandomSource(seed=7, stream_id=3).generator().random(100)
        b = RandomSource(seed=7, stream_id=3).generator().random(100)
        np.testing.assert_array_equal(a, b)

    def test_streams_differ(self):
        a = RandomSource(seed=7, stream_id=0).generator().random(100)
        b = RandomSource(seed=7, stream_id=1).generator().random(100)
        assert not np.array_equal(a, b)

    def test_stream_helper(self):
        src = RandomSource(seed=9)
        sibling = src.stream(4)
        assert sibling.seed == 9 and sibling.stream_id == 4


class TestWorkingSet:
    def test_from_points(self):
        ws = WorkingSet.from_points([[0.0, 0.0], [1.0, 1.0]])
        assert len(ws) == 2
        assert ws.dimension == 2
        np.testing.assert_array_equal(ws.timestamps, [0, 1])
        assert ws.next_timestamp == 2

    def test_replace_returns_removed_and_bumps_timestamp(self):
        ws = WorkingSet.from_points([[0.0, 0.0], [1.0, 1.0]])
        removed = ws.replace_point(0, np.array([5.0, 5.0]))
        np.testing.assert_array_equal(removed, [0.0, 0.0])
        np.testing.assert_array_equal(ws.points[0], [5.0, 5.0])
        assert ws.timestamps[0] == 2
        assert ws.next_timestamp == 3

    def test_rejects_empty_and_nonfinite(self):
        with pytest.raises(ValueError):
            WorkingSet.from_points(np.zeros((0, 2)))
        with pytest.raises(ValueError):
            WorkingSet.from_points([[np.nan, 0.0]])

    def test_copy_is_independent(self):
        ws = WorkingSet.from_points([[0.0, 0.0]])
        clone = ws.copy()
        clone.replace_point(0, np.array([1.0, 1.0]))
        np.testing.assert_array_equal(ws.points[0], [0.0, 0.0])


class TestCentroidState:
    def test_from_working_set_center_is_mean(self):
        state = CentroidState.from_working_set([[0.0, 0.0], [2.0, 4.0]], radius=1.0)
        np.testing.assert_allclose(state.center, [1.0, 2.0])
        assert state.window == 2
        assert state.center_drift() == pytest.approx(0.0, abs=1e-15)

    def test_rejects_bad_radius_and_window(self):
        with pytest.raises(ValueError, match="radius"):
            CentroidState(center=np.zeros(2), radius=0.0, window=1)
        with pytest.raises(ValueError, match="window"):
            CentroidState(center=np.zeros(2), radius=1.0, window=0)

    def test_rejects_window_mismatch(self):
        ws = WorkingSet.from_points([[0.0, 0.0], [1.0, 1.0]])
        with pytest.raises(ValueError, match="working set size"):
            CentroidState(center=np.zeros(2), radius=1.0, window=3, working_set=ws)

    def test_copy_is_deep(self):
        state = CentroidState.from_working_set([[0.0, 0.0], [2.0, 4.0]], radius=1.0)
        clone = state.copy()
        clone.center[0] = 99.0
        clone.working_set.points[0, 0] = 99.0
        assert state.center[0] == 1.0
        assert state.working_set.points[0, 0] == 0.0


class TestAttackContext:
    def test_requires_unit_direction(self):
        with pytest.raises(ValueError, match="unit norm"):
            AttackContext(direction=np.array([1.0, 1.0]), initial_center=np.zeros(2))

    def test_from_attack_point(self):
        ctx = AttackContext.from_attack_point(
            attack_point=np.array([3.0, 4.0]), initial_center=np.zeros(2)
        )
        np.testing.assert_allclose(ctx.direction, [0.6, 0.8])
        np.testing.assert_array_equal(ctx.attack_point, [3.0, 4.0])

    def test_from_attack_point_rejects_coincident(self):
        with pytest.raises(ValueError, match="coincides"):
            AttackContext.from_attack_point(np.zeros(2), np.zeros(2))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError, match="dimension mismatch"):
            AttackContext(direction=np.array([1.0]), initial_center=np.zeros(2))


class TestScoring:
    def test_anomaly_score(self):
        state = CentroidState(center=np.array([1.0, 1.0]), radius=2.0, window=5)
        assert anomaly_score(state, np.array([4.0, 5.0])) == pytest.approx(5.0)

    def test_relative_displacement(self):
        state = CentroidState(center=np.array([1.0, 0.0]), radius=2.0, window=5)
        ctx = AttackContext(direction=np.array([1.0, 0.0]),
                            initial_center=np.array([0.5, 0.0]))
        # ((1.0 - 0.5) . a) / r = 0.25
        assert relative_displacement(state, ctx) == pytest.approx(0.25)
