"""Derivative pairings, smooth localizers, and Walsh/divergence integrals.

The derivative kernel of the field at (t, x) is the deterministic function
(r, v) -> 1_{r < t} G(t - r, x, v), so pairings against explicit integrands
are plain quadratures (``green.kernel_pairing``) and the inner product of two
derivative kernels is the field covariance.  Two localizing directions are
used: a smooth space-time plateau u_A1 = (d_r - d_v^2)(f0 g0), and the
path-dependent u_A2 built from the cutoff of the Y functional.  Several of
the pairings vanish structurally (disjoint supports, or a plateau increment
that is exactly zero); those return exact zeros rather than quadrature noise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .green import covariance, kernel_pairing
from .seminorm import SeminormParams, _trapezoid_weights


class PlateauBump:
    """C-infinity plateau: 0 outside [a, d], 1 on [b, c], monotone between.

    The transition profile is the logistic of 1/(1-s) - 1/s, so all
    derivatives vanish at the junctions; value, first and second derivative
    are available in closed form.
    """

    def __init__(self, a: float, b: float, c: float, d: float):
        if not a < b <= c < d:
            raise ValueError(f"need a < b <= c < d, got {(a, b, c, d)}")
        self.a, self.b, self.c, self.d = a, b, c, d

    @staticmethod
    def _h(s, order: int):
        s = np.asarray(s, dtype=float)
        out = np.zeros(s.shape)
        if order == 0:
            out[s >= 1.0] = 1.0
        mid = (s > 0.0) & (s < 1.0)
        sm = s[mid]
        w = 1.0 / (1.0 - sm) - 1.0 / sm
        sig = 1.0 / (1.0 + np.exp(-np.clip(w, -700.0, 700.0)))
        if order == 0:
            out[mid] = sig
        else:
            d_sig = sig * (1.0 - sig)
            w1 = 1.0 / (1.0 - sm) ** 2 + 1.0 / sm**2
            if order == 1:
                out[mid] = d_sig * w1
            else:
                d2_sig = d_sig * (1.0 - 2.0 * sig)
                w2 = 2.0 / (1.0 - sm) ** 3 - 2.0 / sm**3
                out[mid] = d2_sig * w1 * w1 + d_sig * w2
        return out

    def _eval(self, x, order: int):
        x = np.asarray(x, dtype=float)
        rise = (x - self.a) / (self.b - self.a)
        fall = (self.d - x) / (self.d - self.c)
        on_rise = x < self.b
        s = np.where(on_rise, rise, fall)
        out = self._h(s, order)
        if order > 0:
            scale = np.where(
                on_rise, 1.0 / (self.b - self.a), -1.0 / (self.d - self.c)
            )
            out = out * scale**order
        if out.ndim == 0:
            return float(out)
        return out

    def value(self, x):
        return self._eval(x, 0)

    def d1(self, x):
        return self._eval(x, 1)

    def d2(self, x):
        return self._eval(x, 2)


def f0_bump(c1: float, C1: float, t_max: float) -> PlateauBump:
    """Time plateau: supported in [c1/2, (C1 + t_max)/2], equal to 1 on [c1, C1]."""
    if not 0.0 < c1 < C1 < t_max:
        raise ValueError("need 0 < c1 < C1 < t_max")
    return PlateauBump(c1 / 2.0, c1, C1, (C1 + t_max) / 2.0)


def g0_bump(c2: float, C2: float) -> PlateauBump:
    """Space plateau: supported in [c2/2, (C2 + 1)/2], equal to 1 on [c2, C2].

    The support stays inside ]0, 1[ and all derivatives vanish at the
    endpoints, so the bump is compatible with both boundary conditions.
    """
    if not 0.0 < c2 < C2 < 1.0:
        raise ValueError("need 0 < c2 < C2 < 1")
    return PlateauBump(c2 / 2.0, c2, C2, (C2 + 1.0) / 2.0)


def phi_bump(y0: float, scale: float) -> PlateauBump:
    """Space localizer phi0((v - y0)/scale): 1 on [y0, y0 + scale], supported
    on [y0 - scale, y0 + 2 scale]."""
    if scale <= 0.0:
        raise ValueError("scale must be positive")
    return PlateauBump(y0 - scale, y0, y0 + scale, y0 + 2.0 * scale)


def u_A1(f0: PlateauBump, g0: PlateauBump):
    """First localizing direction (d_r - d_v^2)(f0(r) g0(v)) as a callable."""

    def w(r, v):
        return f0.d1(r) * g0.value(v) - f0.value(r) * g0.d2(v)

    return w


def inner_product_H(t: float, x: float, s: float, y: float, bc: str) -> float:
    """<D u(t,x), D u(s,y)> in L^2(time x space).

    By the semigroup identity this equals the field covariance; exposed
    separately so the isometry can be cross-checked by quadrature.
    """
    return covariance(t, x, s, y, bc)


def pair_field_point(t, x, w, bc, tol=1e-7):
    """<D u(t, x), w> = int_0^t int_0^1 G(t-r, x, v) w(r, v) dv dr."""
    return kernel_pairing(t, x, w, bc, tol=tol)


def _g_breaks(g0: PlateauBump):
    return (g0.a, g0.b, g0.c, g0.d)


def pair_DF1_uA1(s0, y0, f0: PlateauBump, g0: PlateauBump, bc, tol=1e-6) -> float:
    """<D F1, u_A1>; equals f0(s0) g0(y0) = 1 when (s0, y0) sits on the plateau."""
    return kernel_pairing(
        s0, y0, u_A1(f0, g0), bc, tol=tol,
        v_breaks=_g_breaks(g0), r_breaks=_g_breaks(f0),
    )


def pair_DF1_uA2(s0: float, window_start: float) -> float:
    """<D F1, u_A2> vanishes structurally: the derivative kernel of F1 lives on
    r < s0 while u_A2 is supported on ]s0, s0 + delta1]."""
    if window_start < s0:
        raise ValueError("u_A2 support may not start before s0")
    return 0.0


def pair_increment_uA1(
    t, s, y0, f0: PlateauBump, g0: PlateauBump, bc, tol=1e-7
) -> float:
    """<D(u(t, y0) - u(s, y0)), u_A1> = f0(t) g0(y0) - f0(s) g0(y0).

    Both terms are evaluated by quadrature; on the plateau of f0 the result
    is zero up to quadrature error.
    """
    w = u_A1(f0, g0)
    br, rbr = _g_breaks(g0), _g_breaks(f0)
    return kernel_pairing(
        t, y0, w, bc, tol=tol, v_breaks=br, r_breaks=rbr
    ) - kernel_pairing(s, y0, w, bc, tol=tol, v_breaks=br, r_breaks=rbr)


def pair_DY_uA1(
    trace: np.ndarray,
    times: np.ndarray,
    params: SeminormParams,
    f0: PlateauBump,
    g0_at_y0: float,
) -> float:
    """<D Y_r, u_A1> by discrete quadrature.

    D Y_r pairs with u_A1 through increments of f0 g0 over the window; each
    cell carries the factor f0(t) - f0(s), which is exactly zero whenever the
    window sits inside the plateau of f0.
    """
    two_p = 2.0 * params.p0
    inc = trace[:, None] - trace[None, :]
    gap = np.abs(times[:, None] - times[None, :])
    fdiff = f0.value(times)[:, None] - f0.value(times)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        mag = np.where(
            gap > 0.0,
            np.abs(inc) ** (two_p - 1.0) * np.sign(inc) / gap ** (params.gamma0 / 2.0),
            0.0,
        )
    w = _trapezoid_weights(times)
    return float(two_p * g0_at_y0 * (w @ (mag * fdiff) @ w))


# ---------------------------------------------------------------------------
# the path-dependent direction u_A2


@dataclass
class AdaptedIntegrand:
    """Grid integrand for Walsh integration.

    values[n, j] is the integrand on the cell [t_n, t_n+1[ x [x_j, x_j+1[,
    evaluated at the left time endpoint.  ``adapted`` certifies that row n
    was built from information available strictly before t_n; the Walsh
    integral refuses integrands without this certificate.
    """

    values: np.ndarray
    adapted: bool = True


def build_uA2(
    psi_values: np.ndarray,
    window_times: np.ndarray,
    cell_xs: np.ndarray,
    phi: PlateauBump,
) -> AdaptedIntegrand:
    """Assemble u_A2(r, v) = phi(v) psi(Y_r) - phi''(v) int_{s0}^r psi(Y_a) da.

    psi_values holds psi(Y_r) on the window times (first entry r = s0 where
    Y = 0 and psi = 1); rows are indexed by the cells of the window grid.
    """
    m = window_times.size
    if psi_values.shape != (m,):
        raise ValueError("psi_values must align with window_times")
    dt = np.diff(window_times)
    running = np.concatenate(
        [[0.0], np.cumsum(0.5 * dt * (psi_values[1:] + psi_values[:-1]))]
    )
    phi_v = phi.value(cell_xs)
    phi_dd = phi.d2(cell_xs)
    vals = (
        psi_values[:-1, None] * phi_v[None, :]
        - running[:-1, None] * phi_dd[None, :]
    )
    return AdaptedIntegrand(values=vals, adapted=True)


def hnorm_sq_uA2(
    integrand: AdaptedIntegrand, window_times: np.ndarray, cell_xs: np.ndarray, dx: float
) -> float:
    """L^2(time x space) squared norm of the grid integrand."""
    dt = np.diff(window_times)
    return float(np.sum(integrand.values**2 * dt[:, None] * dx))


def walsh_integral(noise_values: np.ndarray, integrand: AdaptedIntegrand) -> float:
    """Walsh integral sum_n sum_j integrand[n, j] W[n, j].

    For adapted integrands this coincides with the divergence (Skorohod)
    integral, which is how the divergence of u_A2 is evaluated.  noise cells
    must be N(0, dt dx) and aligned with the integrand cells.
    """
    if not integrand.adapted:
        raise ValueError("Walsh integral requires an adapted integrand")
    if noise_values.shape != integrand.values.shape:
        raise ValueError(
            f"noise {noise_values.shape} and integrand {integrand.values.shape} misaligned"
        )
    return float(np.sum(noise_values * integrand.values))


skorohod_integral = walsh_integral


def gamma_matrix(pair_11: float, pair_12: float, pair_21: float, pair_22: float):
    """Malliavin matrix of (F1, F2) against the directions (u_A1, u_A2)."""
    return np.array([[pair_11, pair_12], [pair_21, pair_22]])
