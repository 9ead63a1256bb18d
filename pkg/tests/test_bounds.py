"""Tests for the closed-form bound evaluators.

Frozen expected values were computed independently with exact rational
arithmetic (``fractions.Fraction``) before the implementation was written.
"""

import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from centroid_sec.bounds import (
    MixModel,
    bound_infinite,
    bound_params,
    displacement_finite,
    effort_inverse,
    exact_infinite,
    exact_infinite_trace,
    geometric_series_closed_form,
    limited_moments,
    nu_crit,
    protected_moments,
    voronoi_slope,
)


class TestInfiniteHorizon:
    def test_frozen_values(self):
        # 1/2 + 1/3 and sum(1/(100+k), k=1..10), both via exact rationals.
        assert exact_infinite(2, 1) == pytest.approx(0.8333333333333334, abs=1e-15)
        assert exact_infinite(10, 100) == pytest.approx(0.09485708060435732, abs=1e-15)
        assert exact_infinite(0, 7) == 0.0

    def test_trace_matches_scalar(self):
        trace = exact_infinite_trace(50, 10)
        assert trace[0] == 0.0
        for i in (1, 17, 50):
            assert trace[i] == pytest.approx(exact_infinite(i, 10), abs=1e-14)

    def test_bound_dominates_exact(self):
        for n in (1, 10, 100):
            trace = exact_infinite_trace(1000, n)
            idx = np.arange(1001)
            assert np.all(trace <= bound_infinite(idx, n) + 1e-14)

    def test_effort_inverse_frozen(self):
        # ceil(1000 * (e^0.1 - 1)) = 106
        assert effort_inverse(0.1, 1000) == 106
        assert effort_inverse(0.0, 50) == 0

    def test_effort_inverse_consistent_with_bound(self):
        # Reaching the bound value ln(1 + i/n) costs exactly i iterations.
        for n, i in ((10, 7), (100, 250), (1000, 4)):
            assert effort_inverse(float(bound_infinite(i, n)), n) == i

    def test_validation(self):
        with pytest.raises(ValueError):
            exact_infinite(-1, 10)
        with pytest.raises(ValueError):
            bound_infinite(5, 0)
        with pytest.raises(ValueError):
            effort_inverse(-0.1, 10)


class TestFiniteHorizon:
    def test_linear_in_i(self):
        np.testing.assert_allclose(
            displacement_finite(np.array([0, 50, 100]), 100), [0.0, 0.5, 1.0]
        )

    def test_scalar(self):
        assert displacement_finite(7, 100) == pytest.approx(0.07, abs=1e-15)


class TestMixModel:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"nu": 0.0, "n": 10},
            {"nu": 1.0, "n": 10},
            {"nu": 0.5, "n": 1},
            {"nu": 0.5, "n": 10, "alpha": 1.0},
            {"nu": 0.5, "n": 10, "alpha": -0.1},
            {"nu": 0.5, "n": 10, "eps_second_moment": 1.5},
        ],
    )
    def test_rejects_bad_parameters(self, kwargs):
        with pytest.raises(ValueError):
            MixModel(**kwargs)


class TestLimitedMoments:
    def test_frozen_values(self):
        m = MixModel(nu=0.05, n=1000)
        e, v = limited_moments(1000, m)
        assert e == pytest.approx(0.03228597708521783, rel=1e-13)
        assert v == pytest.approx(0.0011297033770140779, rel=1e-13)

    def test_plateau(self):
        m = MixModel(nu=0.05, n=1000)
        e, _ = limited_moments(10_000_000, m)
        assert e == pytest.approx(0.05263157894736842, rel=1e-12)

    def test_zero_at_origin(self):
        m = MixModel(nu=0.1, n=50)
        e, v = limited_moments(0, m)
        assert e == 0.0
        # At i=0 only the uniform remainder nu^2/((2n-1)(1-nu)^2) is left.
        assert v == pytest.approx(0.01 / (99 * 0.81), rel=1e-12)

    def test_expectation_monotone(self):
        m = MixModel(nu=0.05, n=100)
        e, _ = limited_moments(np.arange(0, 500, 7), m)
        assert np.all(np.diff(e) > 0)

    def test_rejects_alpha(self):
        with pytest.raises(ValueError, match="alpha"):
            limited_moments(10, MixModel(nu=0.05, n=100, alpha=0.01))


class TestProtectedMoments:
    def test_corollary_equality_at_zero_alpha(self):
        """With alpha=0 the protected expectations equal the limited one."""
        m = MixModel(nu=0.05, n=1000, alpha=0.0)
        i = np.arange(0, 50_001, 50)
        e_up, e_lo, v_prot = protected_moments(i, m)
        e_lim, _ = limited_moments(i, m)
        assert np.max(np.abs(e_up - e_lim)) <= 1e-12
        assert np.max(np.abs(e_lo - e_lim)) <= 1e-12

    def test_frozen_values(self):
        m = MixModel(nu=0.14, n=1000, alpha=0.005)
        e_up, e_lo, _ = protected_moments(2000, m)
        assert e_up == pytest.approx(0.13819874542367205, rel=1e-12)
        assert e_lo == pytest.approx(0.1334101541061505, rel=1e-12)

    def test_upper_dominates_lower(self):
        m = MixModel(nu=0.05, n=500, alpha=0.025)
        e_up, e_lo, v = protected_moments(np.arange(1, 20_000, 13), m)
        assert np.all(e_up >= e_lo)
        assert np.all(v >= 0)

    def test_variance_bound_reduces_at_zero_alpha(self):
        m = MixModel(nu=0.05, n=200, alpha=0.0)
        _, _, v_prot = protected_moments(np.arange(0, 3000, 10), m)
        _, v_lim = limited_moments(np.arange(0, 3000, 10), m)
        np.testing.assert_allclose(v_prot, v_lim, rtol=1e-12)


class TestBoundParams:
    def test_decay_ordering(self):
        """d_i <= c_i, hence gamma_i >= 0, for both protection regimes."""
        for alpha in (0.0, 0.01):
            m = MixModel(nu=0.1, n=50, alpha=alpha)
            p = bound_params(np.arange(0, 2000, 3), m)
            assert np.all(p.d_i <= p.c_i + 1e-15)
            assert np.all(p.gamma_i >= -1e-15)
            assert np.all(np.asarray(p.delta_n) >= 0)

    def test_rho_zero_without_protection(self):
        p = bound_params(np.arange(10), MixModel(nu=0.1, n=50, alpha=0.0))
        assert np.all(np.asarray(p.rho_alpha) == 0.0)

    def test_geometric_base(self):
        p = bound_params(1, MixModel(nu=0.2, n=10, alpha=0.0))
        assert p.b == pytest.approx(1.0 - 0.8 / 10, abs=1e-15)
        assert p.c_i == pytest.approx(p.b, rel=1e-14)


class TestCriticalRatio:
    def test_frozen_value(self):
        assert nu_crit(0.179) == pytest.approx(0.15182357930449533, abs=1e-15)

    def test_inverse_relation(self):
        for target in (0.01, 0.18, 1.0, 3.5):
            nu = nu_crit(target)
            assert nu / (1.0 - nu) == pytest.approx(target, rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            nu_crit(-0.1)


class TestVoronoiSlope:
    def test_values(self):
        assert voronoi_slope(100, 2) == pytest.approx(0.1, abs=1e-15)
        assert voronoi_slope(100, 1) == pytest.approx(0.01, abs=1e-15)

    def test_monotone_in_dimension(self):
        slopes = [voronoi_slope(100, d) for d in (1, 2, 5, 10, 50, 100)]
        assert all(a < b for a, b in zip(slopes, slopes[1:]))


class TestGeometricSeries:
    @given(
        p=st.floats(-10, 10, allow_nan=False),
        q=st.floats(0.01, 0.999),
        i=st.integers(0, 300),
    )
    def test_matches_recursion(self, p, q, i):
        s = 0.0
        for _ in range(i):
            s = q * s + p
        assert geometric_series_closed_form(p, q, i) == pytest.approx(
            s, rel=1e-9, abs=1e-9
        )

    def test_degenerate_ratio(self):
        assert geometric_series_closed_form(0.5, 1.0, 7) == pytest.approx(3.5)

    def test_validation(self):
        with pytest.raises(ValueError):
            geometric_series_closed_form(1.0, 0.5, -1)
