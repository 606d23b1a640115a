import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatsup import green
from heatsup.green import (
    DIRICHLET,
    NEUMANN,
    KernelParams,
    covariance,
    evaluate_green,
    factorized_increment_bound,
    heat_identity_A,
    integrated_kernel,
    kernel_pairing,
    rect_increment_variance,
)

BCS = (DIRICHLET, NEUMANN)


def free_space(t, d):
    return np.exp(-d * d / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)


class TestEvaluateGreen:
    def test_dirichlet_boundary_zero(self):
        assert float(evaluate_green(0.1, 0.0, 0.5, DIRICHLET)) == pytest.approx(0.0, abs=1e-12)

    def test_short_time_matches_image_sum(self):
        # at t = 0.02 the nearest boundary images contribute ~7e-6, so the
        # free-space value alone is correct only to that level
        t = 0.02
        images = sum(
            s * free_space(t, d)
            for s, d in [(1.0, 0.0), (-1.0, 1.0), (-1.0, 1.0), (1.0, 2.0), (1.0, 2.0)]
        )
        assert float(evaluate_green(t, 0.5, 0.5, DIRICHLET)) == pytest.approx(images, abs=1e-10)
        assert abs(float(evaluate_green(t, 0.5, 0.5, DIRICHLET)) - free_space(t, 0.0)) < 2e-5

    @pytest.mark.parametrize("bc", BCS)
    def test_symmetry(self, bc):
        a = float(evaluate_green(0.05, 0.2, 0.8, bc))
        b = float(evaluate_green(0.05, 0.8, 0.2, bc))
        assert a == pytest.approx(b, abs=1e-13)

    @pytest.mark.parametrize("bc", BCS)
    def test_methods_agree_on_grid(self, bc):
        xs = np.linspace(0.05, 0.95, 20)
        for t in np.logspace(-4, 0, 20):
            e = evaluate_green(t, xs[:, None], xs[None, :], bc, KernelParams(method="eigen"))
            i = evaluate_green(t, xs[:, None], xs[None, :], bc, KernelParams(method="image"))
            assert np.max(np.abs(e - i)) < 1e-8

    def test_interior_positive(self):
        xs = np.linspace(0.1, 0.9, 9)
        g = evaluate_green(0.3, xs[:, None], xs[None, :], DIRICHLET)
        assert np.all(g > 0.0)

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            evaluate_green(0.0, 0.5, 0.5, DIRICHLET)

    def test_rejects_position_outside_domain(self):
        with pytest.raises(ValueError):
            evaluate_green(0.1, 1.5, 0.5, DIRICHLET)

    def test_neumann_mass_conservation(self):
        n, w = np.polynomial.legendre.leggauss(96)
        ys = 0.5 * (n + 1.0)
        for t, x in [(0.01, 0.3), (0.1, 0.5), (0.7, 0.85)]:
            mass = float(np.dot(0.5 * w, evaluate_green(t, x, ys, NEUMANN)))
            assert mass == pytest.approx(1.0, abs=1e-9)

    @pytest.mark.parametrize("bc", BCS)
    def test_chapman_kolmogorov(self, bc):
        n, w = np.polynomial.legendre.leggauss(192)
        zs = 0.5 * (n + 1.0)
        t, s, x, y = 0.05, 0.03, 0.3, 0.6
        conv = float(
            np.dot(0.5 * w, evaluate_green(t, x, zs, bc) * evaluate_green(s, zs, y, bc))
        )
        assert conv == pytest.approx(float(evaluate_green(t + s, x, y, bc)), abs=1e-6)


class TestIntegratedKernel:
    def test_zero_at_zero_time(self):
        assert float(integrated_kernel(0.0, 0.3, 0.6, DIRICHLET)) == 0.0

    def test_is_half_time_integral_of_green(self):
        # Phi(a,x,y) = (1/2) int_0^a G(s,x,y) ds; check by quadrature
        a, x, y = 0.3, 0.4, 0.55
        n, w = np.polynomial.legendre.leggauss(160)
        # substitute s = sigma^2 to tame the short-time spike
        sig = 0.5 * np.sqrt(a) * (n + 1.0)
        vals = evaluate_green(sig**2, x, y, DIRICHLET) * 2.0 * sig
        quad = 0.5 * float(np.dot(0.5 * np.sqrt(a) * w, vals))
        assert float(integrated_kernel(a, x, y, DIRICHLET)) == pytest.approx(quad, abs=1e-10)

    @given(
        a=st.floats(1e-6, 2.0),
        x=st.floats(0.05, 0.95),
        y=st.floats(0.05, 0.95),
    )
    @settings(max_examples=60, deadline=None)
    def test_symmetric_and_monotone(self, a, x, y):
        v = float(integrated_kernel(a, x, y, DIRICHLET))
        assert v == pytest.approx(float(integrated_kernel(a, y, x, DIRICHLET)), rel=1e-12)
        assert float(integrated_kernel(2.0 * a, x, y, DIRICHLET)) >= v - 1e-15


class TestCovariance:
    def test_zero_at_time_origin(self):
        assert covariance(0.0, 0.3, 0.0, 0.7, DIRICHLET) == 0.0

    def test_stationary_variance_dirichlet(self):
        # long-time variance at x is x(1-x)/2
        assert covariance(5.0, 0.5, 5.0, 0.5, DIRICHLET) == pytest.approx(0.125, abs=1e-6)

    def test_small_time_whole_line_variance(self):
        t = 1e-3
        assert covariance(t, 0.5, t, 0.5, DIRICHLET) == pytest.approx(
            np.sqrt(t / (2.0 * np.pi)), abs=1e-6
        )

    def test_matches_integrated_kernel_identity(self):
        t, s, x, y = 0.3, 0.2, 0.4, 0.6
        via_phi = float(
            integrated_kernel(t + s, x, y, DIRICHLET)
            - integrated_kernel(t - s, x, y, DIRICHLET)
        )
        assert covariance(t, x, s, y, DIRICHLET) == pytest.approx(via_phi, abs=1e-9)

    @pytest.mark.parametrize("bc", BCS)
    def test_gram_matrix_psd(self, bc):
        rng = np.random.default_rng(3)
        pts = [(float(t), float(x)) for t, x in zip(rng.uniform(0.05, 1, 8), rng.uniform(0.1, 0.9, 8))]
        gram = np.array([[covariance(t, x, s, y, bc) for s, y in pts] for t, x in pts])
        assert np.min(np.linalg.eigvalsh(gram)) > -1e-9


class TestRectIncrementVariance:
    def test_equal_times_vanish(self):
        assert rect_increment_variance(0.3, 0.3, 0.2, 0.7, DIRICHLET) == 0.0

    def test_equal_positions_vanish(self):
        assert rect_increment_variance(0.3, 0.1, 0.5, 0.5, DIRICHLET) == pytest.approx(0.0, abs=1e-12)

    def test_min_law_bound_single_constant(self):
        ts = np.linspace(0.1, 0.5, 5)
        xs = np.linspace(0.2, 0.8, 5)
        ratios = []
        for t in ts:
            for s in ts:
                for x in xs:
                    for y in xs:
                        if t <= s or x <= y:
                            continue
                        v = rect_increment_variance(t, s, x, y, DIRICHLET)
                        ratios.append(v / min(np.sqrt(t - s), x - y))
        assert max(ratios) < 2.0  # one modest constant covers the whole sweep

    def test_factorized_bound(self):
        theta = 0.25
        for t, s, x, y in [(0.45, 0.4, 0.3, 0.5), (0.3, 0.29, 0.7, 0.72)]:
            v = rect_increment_variance(t, s, x, y, DIRICHLET)
            assert v <= 2.0 * factorized_increment_bound(t - s, x - y, theta)

    def test_factorized_bound_rejects_bad_theta(self):
        with pytest.raises(ValueError):
            factorized_increment_bound(0.1, 0.1, 0.3)


class TestHeatIdentity:
    def test_zero_f_gives_zero(self):
        a = heat_identity_A(
            0.3, 0.5, lambda r: 0.0, lambda r: 0.0,
            lambda v: np.sin(np.pi * v), lambda v: -np.pi**2 * np.sin(np.pi * v),
            DIRICHLET,
        )
        assert a == pytest.approx(0.0, abs=1e-12)

    def test_neumann_pair(self):
        a = heat_identity_A(
            0.3, 0.25, lambda r: r, lambda r: 1.0,
            lambda v: np.cos(np.pi * v), lambda v: -np.pi**2 * np.cos(np.pi * v),
            NEUMANN,
        )
        assert a == pytest.approx(0.3 * np.cos(np.pi * 0.25), abs=1e-5)

    def test_dirichlet_pair(self):
        a = heat_identity_A(
            0.5, 0.5, lambda r: -np.expm1(-r), lambda r: np.exp(-r),
            lambda v: np.sin(np.pi * v), lambda v: -np.pi**2 * np.sin(np.pi * v),
            DIRICHLET,
        )
        assert a == pytest.approx(-np.expm1(-0.5), abs=1e-5)


class TestKernelPairing:
    def test_linear_in_integrand(self):
        w1 = lambda r, v: np.sin(np.pi * v) * (1.0 + r)
        w2 = lambda r, v: 0.5 * w1(r, v)
        a = kernel_pairing(0.2, 0.5, w1, DIRICHLET, tol=1e-8)
        b = kernel_pairing(0.2, 0.5, w2, DIRICHLET, tol=1e-8)
        assert b == pytest.approx(0.5 * a, abs=1e-8)

    def test_rejects_nonpositive_time(self):
        with pytest.raises(ValueError):
            kernel_pairing(0.0, 0.5, lambda r, v: v, DIRICHLET)
