import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heatsup import field
from heatsup.field import (
    DIRICHLET,
    NEUMANN,
    SpaceTimeGrid,
    cholesky_factor,
    increment_window_covariance,
    load_noise,
    load_path,
    ou_transition,
    path_rng,
    rectangle_window_covariance,
    sample_finite_difference,
    sample_gaussian_batch,
    sample_spectral,
    save_noise,
    save_path,
    window_offsets,
)
from heatsup.green import covariance, integrated_kernel


class TestGridAndRng:
    def test_grid_spacings(self):
        g = SpaceTimeGrid(t_max=0.5, nt=100, nx=64)
        assert g.dt == pytest.approx(0.005)
        assert g.dx == pytest.approx(1.0 / 64)
        assert g.times.shape == (101,)
        assert g.xs.shape == (65,)

    def test_rng_reproducible_and_stream_separated(self):
        a = path_rng(7, 3, "x").standard_normal(4)
        b = path_rng(7, 3, "x").standard_normal(4)
        c = path_rng(7, 4, "x").standard_normal(4)
        d = path_rng(7, 3, "y").standard_normal(4)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)
        assert not np.array_equal(a, d)


class TestOuTransition:
    def test_zero_rate_brownian_limit(self):
        assert ou_transition(2.0, 0.0, 0.09, 1.0) == pytest.approx(2.0 + 0.3)

    def test_transition_mean(self):
        assert ou_transition(1.0, np.pi**2, 0.01, 0.0) == pytest.approx(0.9060181, abs=1e-6)

    def test_stationary_variance(self):
        lam = 5.0
        out = ou_transition(np.zeros(10**5), lam, 50.0, path_rng(0, 0, "ou").standard_normal(10**5))
        assert np.var(out) == pytest.approx(1.0 / (2.0 * lam), rel=0.02)


class TestSamplers:
    def test_spectral_initial_row_zero(self):
        g = SpaceTimeGrid(t_max=0.1, nt=10, nx=16)
        p = sample_spectral(g, DIRICHLET, seed=1)
        assert np.all(p.values[0] == 0.0)
        assert np.all(p.values[:, 0] == 0.0)
        assert np.all(p.values[:, -1] == 0.0)

    def test_spectral_deterministic(self):
        g = SpaceTimeGrid(t_max=0.1, nt=10, nx=16)
        a = sample_spectral(g, NEUMANN, seed=5)
        b = sample_spectral(g, NEUMANN, seed=5)
        assert np.array_equal(a.values, b.values)

    def test_spectral_variance_oracle(self):
        g = SpaceTimeGrid(t_max=0.1, nt=20, nx=16)
        vals = np.array(
            [sample_spectral(g, DIRICHLET, seed=0, stream=i).values[-1, 8] for i in range(3000)]
        )
        target = covariance(0.1, 0.5, 0.1, 0.5, DIRICHLET)
        se = target * np.sqrt(2.0 / vals.size)
        assert np.var(vals) == pytest.approx(target, abs=3 * se)

    def test_fd_requires_stability(self):
        g = SpaceTimeGrid(t_max=1.0, nt=10, nx=64)
        with pytest.raises(ValueError):
            sample_finite_difference(g, DIRICHLET, seed=0)

    def test_fd_deterministic_and_noise_variance(self):
        g = SpaceTimeGrid(t_max=0.05, nt=500, nx=32)
        p1, n1 = sample_finite_difference(g, DIRICHLET, seed=2)
        p2, n2 = sample_finite_difference(g, DIRICHLET, seed=2)
        assert np.array_equal(p1.values, p2.values)
        assert np.array_equal(n1.values, n2.values)
        z = n1.values / np.sqrt(g.dt * g.dx)
        assert np.var(z) == pytest.approx(1.0, abs=3 * np.sqrt(2.0 / z.size))

    def test_fd_matches_spectral_variance(self):
        g = SpaceTimeGrid(t_max=0.05, nt=800, nx=32)
        vals = np.array(
            [
                sample_finite_difference(g, DIRICHLET, seed=0, stream=i)[0].values[-1, 16]
                for i in range(1500)
            ]
        )
        target = covariance(0.05, 0.5, 0.05, 0.5, DIRICHLET)
        assert np.var(vals) == pytest.approx(target, rel=0.08)

    def test_gaussianity_moments(self):
        g = SpaceTimeGrid(t_max=0.1, nt=20, nx=8)
        vals = np.array(
            [sample_spectral(g, DIRICHLET, seed=3, stream=i, n_modes=64).values[-1, 4] for i in range(4000)]
        )
        z = (vals - vals.mean()) / vals.std()
        n = z.size
        assert abs(np.mean(z**3)) < 5 * np.sqrt(6.0 / n)
        assert abs(np.mean(z**4) - 3.0) < 5 * np.sqrt(24.0 / n)


class TestWindowSampling:
    def test_offsets_sorted_positive_with_dyadic_tail(self):
        off = window_offsets(0.02)
        assert np.all(off > 0.0)
        assert np.all(np.diff(off) > 0.0)
        assert off[0] == pytest.approx(0.02 * 2.0**-70)
        assert off[-1] == pytest.approx(0.02)

    def test_increment_covariance_matches_direct(self):
        s0, y0 = 0.4, 0.45
        off = np.array([0.005, 0.01, 0.02])
        cov = increment_window_covariance(off, s0, y0, DIRICHLET)

        def c(t, s):
            return covariance(t, y0, s, y0, DIRICHLET, tol=1e-10)

        assert cov[0, 0] == pytest.approx(c(s0, s0), abs=1e-7)
        for i, ti in enumerate(s0 + off):
            assert cov[0, i + 1] == pytest.approx(c(s0, ti) - c(s0, s0), abs=1e-7)
            for j, tj in enumerate(s0 + off):
                direct = c(ti, tj) - c(ti, s0) - c(s0, tj) + c(s0, s0)
                assert cov[i + 1, j + 1] == pytest.approx(direct, abs=1e-7)

    def test_increment_covariance_survives_tiny_offsets(self):
        off = window_offsets(0.02)  # down to 2^-70 * delta1 ~ 1.7e-23
        cov = increment_window_covariance(off, 0.4, 0.45, DIRICHLET)
        var = np.diag(cov)[1:]
        assert np.all(var > 0.0)
        # increment variance ~ sqrt(tau / (2 pi)) at tiny tau
        assert var[0] == pytest.approx(np.sqrt(off[0] / (2 * np.pi)), rel=1e-3)

    def test_rectangle_covariance_matches_direct(self):
        times = np.array([0.004, 0.01])
        xs = np.array([0.45, 0.47])
        cov, t_flat, x_flat = rectangle_window_covariance(times, xs, DIRICHLET)
        for i in range(4):
            for j in range(4):
                direct = covariance(t_flat[i], x_flat[i], t_flat[j], x_flat[j], DIRICHLET, tol=1e-10)
                assert cov[i, j] == pytest.approx(direct, abs=1e-7)

    def test_batch_sampling_batch_independent(self):
        off = np.array([0.01, 0.02])
        chol = cholesky_factor(increment_window_covariance(off, 0.4, 0.45, DIRICHLET))
        a = sample_gaussian_batch(chol, 10, seed=1, tag="t", batch=3)
        b = sample_gaussian_batch(chol, 10, seed=1, tag="t", batch=10)
        assert np.array_equal(a, b)

    def test_cholesky_reproduces_covariance(self):
        off = window_offsets(0.01, n_uniform=8, n_dyadic=20)
        cov = increment_window_covariance(off, 0.4, 0.45, DIRICHLET)
        chol = cholesky_factor(cov)
        assert np.max(np.abs(chol @ chol.T - cov)) < 1e-10 * np.max(np.abs(cov))


class TestSerialization:
    @pytest.mark.parametrize("bc", (DIRICHLET, NEUMANN))
    def test_path_round_trip(self, bc, tmp_path):
        g = SpaceTimeGrid(t_max=0.1, nt=5, nx=8)
        p = sample_spectral(g, bc, seed=9, n_modes=32)
        f = tmp_path / "p.bin"
        with open(f, "wb") as fh:
            save_path(p, fh)
        with open(f, "rb") as fh:
            q = load_path(fh)
        assert q.bc == bc
        assert q.seed == 9
        assert np.array_equal(p.values, q.values)
        assert q.grid == g

    def test_noise_round_trip(self):
        g = SpaceTimeGrid(t_max=0.02, nt=100, nx=16)
        _, n = sample_finite_difference(g, DIRICHLET, seed=4)
        buf = io.BytesIO()
        save_noise(n, buf)
        buf.seek(0)
        m = load_noise(buf)
        assert np.array_equal(n.values, m.values)

    def test_path_load_rejects_noise_magic(self):
        g = SpaceTimeGrid(t_max=0.02, nt=10, nx=8)
        _, n = sample_finite_difference(g, DIRICHLET, seed=4)
        buf = io.BytesIO()
        save_noise(n, buf)
        buf.seek(0)
        with pytest.raises(ValueError):
            load_path(buf)


@given(st.integers(0, 2**32 - 1), st.integers(0, 100))
@settings(max_examples=20, deadline=None)
def test_rng_streams_never_collide(seed, stream):
    a = path_rng(seed, stream, "a").standard_normal(3)
    b = path_rng(seed, stream + 1, "a").standard_normal(3)
    assert not np.array_equal(a, b)
