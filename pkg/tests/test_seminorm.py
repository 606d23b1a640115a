import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatsup.field import DIRICHLET
from heatsup.seminorm import (
    PSI_SLOPE,
    SeminormParams,
    Verdict,
    compute_Y,
    compute_Y_profile,
    compute_Ybar,
    cutoff_radius,
    expected_Y,
    expected_Ybar,
    gamma22,
    grr_chain_constant,
    grr_constant,
    grr_implication_check,
    holder_seminorm,
    psi,
    psi0,
    rectangle_default,
    time_default,
)


class TestParams:
    def test_defaults_valid(self):
        assert time_default().p0 == 7
        assert rectangle_default().is_rectangle

    def test_rejects_exponent_violations(self):
        with pytest.raises(ValueError):
            SeminormParams(p0=5, gamma0=4.5)  # p0 - 2 > gamma0 fails
        with pytest.raises(ValueError):
            SeminormParams(p0=7, gamma0=4.0)  # gamma0 > 4 fails
        with pytest.raises(ValueError):
            SeminormParams(p0=32, gamma0=5.0, theta=0.25)  # partial rectangle
        with pytest.raises(ValueError):
            SeminormParams(p0=32, gamma0=5.0, theta=0.3, gamma1=0.018, gamma2=0.0265)
        with pytest.raises(ValueError):
            SeminormParams(p0=32, gamma0=5.0, theta=0.25, gamma1=0.02, gamma2=0.0265)


class TestHolderSeminorm:
    def test_linear_oracle(self):
        # f(x) = x, p = 1, gamma = 1/4: integral is int int |x-y|^(1/2) = 8/15
        xs = np.linspace(0.0, 1.0, 2001)
        val = holder_seminorm(xs, xs, p=1, gamma=0.25)
        assert val == pytest.approx(np.sqrt(8.0 / 15.0), rel=1e-3)

    def test_constant_is_zero(self):
        xs = np.linspace(0.0, 1.0, 50)
        assert holder_seminorm(np.full(50, 3.0), xs, p=2, gamma=0.2) == 0.0

    @given(st.floats(0.1, 10.0))
    @settings(max_examples=20, deadline=None)
    def test_homogeneity(self, c):
        xs = np.linspace(0.0, 1.0, 40)
        vals = np.sin(3.0 * xs)
        base = holder_seminorm(vals, xs, p=2, gamma=0.2)
        assert holder_seminorm(c * vals, xs, p=2, gamma=0.2) == pytest.approx(c * base, rel=1e-9)

    def test_bad_args(self):
        xs = np.linspace(0.0, 1.0, 10)
        with pytest.raises(ValueError):
            holder_seminorm(xs, xs, p=0, gamma=0.2)
        with pytest.raises(ValueError):
            holder_seminorm(xs, xs, p=1, gamma=0.0)


class TestYFunctionals:
    def test_zero_trace(self):
        times = np.linspace(0.4, 0.42, 30)
        assert compute_Y(np.zeros(30), times, time_default()) == 0.0

    def test_ramp_oracle(self):
        # trace = t - s0: Y = 2 delta1^13.75 / (12.75 * 13.75) for p0=7, g0=4.5
        d1 = 0.1
        times = 0.4 + np.linspace(0.0, d1, 4001)
        y = compute_Y(times - 0.4, times, time_default())
        assert y == pytest.approx(2.0 * d1**13.75 / (12.75 * 13.75), rel=1e-3)

    def test_monotone_in_r(self):
        rng = np.random.default_rng(3)
        times = 0.4 + np.sort(rng.uniform(0.0, 0.02, 40))
        trace = np.cumsum(rng.standard_normal(40)) * 0.01
        ys = [compute_Y(trace, times, time_default(), r_index=r) for r in range(1, 40)]
        assert all(b >= a - 1e-300 for a, b in zip(ys, ys[1:]))

    def test_profile_matches_pointwise(self):
        rng = np.random.default_rng(4)
        times = 0.4 + np.sort(rng.uniform(0.0, 0.02, 25))
        traces = np.cumsum(rng.standard_normal((3, 25)), axis=1) * 0.01
        prof = compute_Y_profile(traces, times, time_default())
        for n in range(3):
            for r in (1, 7, 24):
                assert prof[n, r] == pytest.approx(
                    compute_Y(traces[n], times, time_default(), r_index=r), rel=1e-10
                )
        assert np.all(prof[:, 0] == 0.0)

    def test_ybar_constant_in_space_reduces_to_Y(self):
        params = rectangle_default()
        times = np.linspace(1e-4, 0.01, 12)
        xs = np.linspace(0.45, 0.48, 6)
        rng = np.random.default_rng(5)
        trace = np.cumsum(rng.standard_normal(12)) * 0.01
        vals = np.broadcast_to(trace[:, None], (12, 6)).copy()
        ybar = compute_Ybar(vals[None], times, xs, params)
        assert ybar[0] == pytest.approx(compute_Y(trace, times, params), rel=1e-10)

    def test_ybar_requires_rectangle_params(self):
        with pytest.raises(ValueError):
            compute_Ybar(np.zeros((1, 4, 3)), np.linspace(0.01, 0.02, 4),
                         np.linspace(0.4, 0.5, 3), time_default())


class TestCutoff:
    def test_plateau_values(self):
        assert psi0(-2.0) == 1.0
        assert psi0(0.5) == 1.0
        assert psi0(0.75) == pytest.approx(0.5)
        assert psi0(1.0) == 0.0
        assert psi0(10.0) == 0.0

    def test_nonincreasing_and_bounded(self):
        x = np.linspace(-1.0, 2.0, 3001)
        v = psi0(x)
        assert np.all(v >= 0.0) and np.all(v <= 1.0)
        assert np.all(np.diff(v) <= 1e-12)

    def test_slope_bound(self):
        x = np.linspace(0.4, 1.1, 200001)
        v = psi0(x)
        slope = np.max(np.abs(np.diff(v))) / (x[1] - x[0])
        assert slope <= PSI_SLOPE + 1e-6
        assert slope == pytest.approx(PSI_SLOPE, rel=1e-3)

    def test_scaled_cutoff(self):
        r = 0.02
        assert psi(0.009, r) == 1.0
        assert psi(0.021, r) == 0.0
        with pytest.raises(ValueError):
            psi(0.1, 0.0)


class TestGrrChain:
    def test_frozen_constants(self):
        assert grr_chain_constant(time_default(), "time") == pytest.approx(151.3614, rel=1e-5)
        assert grr_chain_constant(rectangle_default(), "rectangle") == pytest.approx(
            3721.577, rel=1e-5
        )
        assert grr_constant(time_default(), "time") == pytest.approx(3.0185e-31, rel=1e-3)

    def test_chain_constant_bad_variant(self):
        with pytest.raises(ValueError):
            grr_chain_constant(time_default(), "spacetime")
        with pytest.raises(ValueError):
            grr_chain_constant(time_default(), "rectangle")

    def test_cutoff_radius_frozen_value(self):
        assert cutoff_radius(0.5, 0.02, time_default(), "time") == pytest.approx(
            4.899057e-35, rel=1e-5
        )

    def test_cutoff_radius_scaling_in_a(self):
        p = time_default()
        r1 = cutoff_radius(0.3, 0.02, p, "time")
        r2 = cutoff_radius(0.6, 0.02, p, "time")
        assert r2 / r1 == pytest.approx(2.0 ** (2 * p.p0), rel=1e-9)

    def test_cutoff_radius_never_zero(self):
        # deep in the underflow regime the log-domain clamp keeps R positive
        r = cutoff_radius(1e-8, 1e-4, rectangle_default(), "rectangle")
        assert r > 0.0

    def test_implication_verdicts(self):
        assert grr_implication_check(0.0, 0.0, 0.5, 1e-30) is Verdict.PASS
        assert grr_implication_check(0.9, 0.0, 0.5, 1e-30) is Verdict.FAIL
        assert grr_implication_check(0.9, 1.0, 0.5, 1e-30) is Verdict.VACUOUS

    def test_gamma22_range(self):
        times = 0.4 + np.linspace(0.0, 0.02, 50)
        psi_vals = np.clip(np.linspace(1.2, -0.2, 50), 0.0, 1.0)
        g = gamma22(psi_vals, times)
        assert 0.0 < g < 0.02
        assert gamma22(np.ones(50), times) == pytest.approx(0.02)


class TestExpectedFunctionals:
    def test_expected_y_scaling_exponent(self):
        p = time_default()
        lo = expected_Y(0.01, 0.4, 0.45, DIRICHLET, p)
        hi = expected_Y(0.02, 0.4, 0.45, DIRICHLET, p)
        assert np.log2(hi / lo) == pytest.approx(3.25, abs=0.05)

    def test_expected_y_positive_and_quadrature_converged(self):
        p = time_default()
        a = expected_Y(0.02, 0.4, 0.45, DIRICHLET, p, n_quad=96)
        b = expected_Y(0.02, 0.4, 0.45, DIRICHLET, p, n_quad=192)
        assert a > 0.0
        assert b == pytest.approx(a, rel=5e-3)

    def test_expected_ybar_positive_and_above_time_part(self):
        p = rectangle_default()
        d1 = 0.01
        yb = expected_Ybar(d1, 0.3 * np.sqrt(d1), 0.45, DIRICHLET, p)
        assert yb > 0.0

    def test_expected_ybar_needs_rectangle(self):
        with pytest.raises(ValueError):
            expected_Ybar(0.01, 0.03, 0.45, DIRICHLET, time_default())
