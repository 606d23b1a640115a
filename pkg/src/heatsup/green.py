"""Heat kernel on the unit interval and exact second moments of the driven field.

Two independent evaluation routes are kept for the kernel: the eigenfunction
series (fast for large times) and the reflection/image series (fast for small
times).  Both converge everywhere; ``method="auto"`` switches at a fixed
crossover time.  Everything downstream (covariances, window samplers) can be
reduced to the time-integrated kernel, which has a closed form in terms of
``erfc``, so no quadrature is hidden inside the second-moment routines.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import erfc

DIRICHLET = "dirichlet"
NEUMANN = "neumann"

# exp(-z) below this exponent is negligible against float64 resolution
_EXP_CUTOFF = 45.0


def _check_bc(bc: str) -> str:
    if bc not in (DIRICHLET, NEUMANN):
        raise ValueError(f"bc must be {DIRICHLET!r} or {NEUMANN!r}, got {bc!r}")
    return bc


@dataclass(frozen=True)
class KernelParams:
    """Evaluation controls for the kernel routines.

    method: "eigen", "image" or "auto".  Auto uses the image series below
    ``crossover`` and the eigen series above it.
    tol: target absolute accuracy of series truncation.
    """

    method: str = "auto"
    crossover: float = 0.05
    tol: float = 1e-12
    max_terms: int = 2_000_000

    def __post_init__(self):
        if self.method not in ("auto", "eigen", "image"):
            raise ValueError(f"unknown kernel method {self.method!r}")
        if not 0.0 < self.crossover:
            raise ValueError("crossover must be positive")


_DEFAULT = KernelParams()


def eigenvalue(n: int | np.ndarray) -> np.ndarray:
    """Eigenvalue of -d^2/dx^2 for mode ``n`` (same indexing for both bc)."""
    n = np.asarray(n, dtype=float)
    return (n * np.pi) ** 2


def eigenfunction(n: int | np.ndarray, x: float | np.ndarray, bc: str) -> np.ndarray:
    """Orthonormal eigenfunction of mode ``n`` at ``x``.

    Dirichlet modes start at n = 1; the Neumann n = 0 mode is the constant 1.
    """
    _check_bc(bc)
    n = np.asarray(n, dtype=float)
    x = np.asarray(x, dtype=float)
    if bc == DIRICHLET:
        if np.any(n < 1):
            raise ValueError("Dirichlet modes are indexed from 1")
        return np.sqrt(2.0) * np.sin(n * np.pi * x)
    return np.where(n == 0, 1.0, np.sqrt(2.0) * np.cos(n * np.pi * x))


def _green_eigen(t, x, y, bc, tol, max_terms):
    t, x, y = np.broadcast_arrays(*map(np.asarray, (t, x, y)))
    tmin = float(np.min(t))
    if tmin <= 0.0:
        raise ValueError("kernel time must be positive")
    # after n_max the terms fall below tol: exp(-(n pi)^2 t) < tol / 2
    n_max = int(np.ceil(np.sqrt(max(-np.log(tol / 2.0), 1.0) / tmin) / np.pi)) + 1
    if n_max > max_terms:
        raise ValueError(
            f"eigen series needs {n_max} terms at t={tmin:g}, cap is {max_terms}"
        )
    n0 = 1 if bc == DIRICHLET else 0
    n = np.arange(n0, n_max + 1, dtype=float)
    shape = (1,) * t.ndim + (-1,)
    lam = eigenvalue(n).reshape(shape)
    en_x = eigenfunction(n, x[..., None], bc)
    en_y = eigenfunction(n, y[..., None], bc)
    return np.sum(en_x * en_y * np.exp(-lam * t[..., None]), axis=-1)


def _gauss(t, z):
    return np.exp(-(z * z) / (4.0 * t)) / np.sqrt(4.0 * np.pi * t)


def _image_range(t_max: float) -> int:
    # images beyond |z| ~ sqrt(4 t cutoff) contribute below float resolution
    reach = np.sqrt(4.0 * t_max * _EXP_CUTOFF)
    return int(np.ceil((reach + 2.0) / 2.0)) + 1


def _green_image(t, x, y, bc):
    t, x, y = np.broadcast_arrays(*map(np.asarray, (t, x, y)))
    if np.any(t <= 0.0):
        raise ValueError("kernel time must be positive")
    sign = -1.0 if bc == DIRICHLET else 1.0
    k_max = _image_range(float(np.max(t)))
    k = 2.0 * np.arange(-k_max, k_max + 1, dtype=float)
    tt = t[..., None]
    out = _gauss(tt, x[..., None] - y[..., None] + k)
    out = out + sign * _gauss(tt, x[..., None] + y[..., None] + k)
    return np.sum(out, axis=-1)


def evaluate_green(t, x, y, bc: str, params: KernelParams | None = None):
    """Green kernel G(t, x, y) of the heat semigroup on [0, 1].

    Broadcasts over array arguments.  ``t`` must be strictly positive and
    ``x``, ``y`` must lie in [0, 1].
    """
    _check_bc(bc)
    p = params or _DEFAULT
    t_arr, x_arr, y_arr = map(np.asarray, (t, x, y))
    if np.any((x_arr < 0.0) | (x_arr > 1.0)) or np.any((y_arr < 0.0) | (y_arr > 1.0)):
        raise ValueError("spatial arguments must lie in [0, 1]")
    if p.method == "eigen":
        out = _green_eigen(t_arr, x_arr, y_arr, bc, p.tol, p.max_terms)
    elif p.method == "image":
        out = _green_image(t_arr, x_arr, y_arr, bc)
    else:
        t_b, x_b, y_b = np.broadcast_arrays(t_arr, x_arr, y_arr)
        out = np.empty(t_b.shape, dtype=float)
        small = t_b < p.crossover
        if np.any(small):
            out[small] = _green_image(t_b[small], x_b[small], y_b[small], bc)
        if np.any(~small):
            out[~small] = _green_eigen(
                t_b[~small], x_b[~small], y_b[~small], bc, p.tol, p.max_terms
            )
    if out.ndim == 0:
        return float(out)
    return out


def _int_gauss(a, d):
    """Closed form of int_0^a exp(-d^2/(4 s)) / sqrt(4 pi s) ds for d >= 0."""
    a = np.asarray(a, dtype=float)
    d = np.asarray(d, dtype=float)
    a, d = np.broadcast_arrays(a, d)
    out = np.zeros(a.shape, dtype=float)
    pos = a > 0.0
    if not np.any(pos):
        return out
    sa = np.sqrt(a, where=pos, out=np.zeros_like(a))
    with np.errstate(divide="ignore", invalid="ignore"):
        w = np.where(pos, d / np.maximum(2.0 * sa, 1e-300), 0.0)
    keep = pos & (w * w < _EXP_CUTOFF)
    out[keep] = (
        sa[keep] / np.sqrt(np.pi) * np.exp(-w[keep] * w[keep])
        - 0.5 * d[keep] * erfc(w[keep])
    )
    return out


def integrated_kernel(a, x, y, bc: str):
    """Half the time integral of the kernel: (1/2) * int_0^a G(s, x, y) ds.

    Evaluated in closed form through the image representation, accurate to
    float resolution uniformly down to a = 0 (where it vanishes).  All second
    moments of the zero-initial-data field reduce to differences of this
    function, e.g. E[u(t,x) u(s,y)] equals the value at t+s minus the value
    at |t-s|.
    """
    _check_bc(bc)
    a_arr, x_arr, y_arr = np.broadcast_arrays(*map(np.asarray, (a, x, y)))
    if np.any(a_arr < 0.0):
        raise ValueError("integration time must be nonnegative")
    sign = -1.0 if bc == DIRICHLET else 1.0
    k_max = _image_range(max(float(np.max(a_arr)), 1e-30))
    k = 2.0 * np.arange(-k_max, k_max + 1, dtype=float)
    aa = a_arr[..., None]
    out = _int_gauss(aa, np.abs(x_arr[..., None] - y_arr[..., None] + k))
    out = out + sign * _int_gauss(aa, np.abs(x_arr[..., None] + y_arr[..., None] + k))
    res = 0.5 * np.sum(out, axis=-1)
    if res.ndim == 0:
        return float(res)
    return res


def covariance(t, x, s, y, bc: str, tol: float = 1e-8, max_terms: int = 4_000_000):
    """E[u(t, x) u(s, y)] for the white-noise driven heat equation, u(0) = 0.

    Closed eigen-series form.  The Neumann zero mode contributes min(s, t).
    Scalar arguments only; use ``integrated_kernel`` differences for bulk
    evaluation.
    """
    _check_bc(bc)
    t, s, x, y = map(float, (t, s, x, y))
    if t < 0.0 or s < 0.0:
        raise ValueError("times must be nonnegative")
    if min(t, s) == 0.0:
        return 0.0
    gap, tmin = abs(t - s), min(t, s)
    # tail of sum_n e_n e_n exp(-lam gap)(...) / (2 lam) after N terms is
    # below 1/(pi^2 N) for gap = 0, much smaller once exp(-lam gap) kicks in
    if gap > 0.0:
        n_gap = np.sqrt(max(-np.log(tol), 1.0) / gap) / np.pi
        n_max = int(np.ceil(min(1.0 / (np.pi**2 * tol), 4.0 * n_gap))) + 1
    else:
        n_max = int(np.ceil(1.0 / (np.pi**2 * tol))) + 1
    if n_max > max_terms:
        n_max = max_terms
    n0 = 1 if bc == DIRICHLET else 0
    total = 0.0
    for lo in range(n0, n_max + 1, 1_000_000):
        hi = min(lo + 1_000_000 - 1, n_max)
        n = np.arange(lo, hi + 1, dtype=float)
        lam = eigenvalue(n)
        en = eigenfunction(n, x, bc) * eigenfunction(n, y, bc)
        with np.errstate(divide="ignore", invalid="ignore"):
            weight = np.where(
                lam > 0.0,
                np.exp(-lam * gap) * -np.expm1(-2.0 * lam * tmin) / (2.0 * lam),
                tmin,
            )
        total += float(np.dot(en, weight))
    return total


def rect_increment_variance(t, s, x, y, bc: str, tol: float = 1e-10):
    """Variance of the rectangular double increment of the field.

    E[(u(t,x) + u(s,y) - u(t,y) - u(s,x))^2], computed exactly through the
    integrated kernel (no series truncation beyond float resolution).
    """
    _check_bc(bc)
    pts = [(t, x, 1.0), (s, y, 1.0), (t, y, -1.0), (s, x, -1.0)]
    total = 0.0
    for ti, xi, ei in pts:
        for tj, xj, ej in pts:
            c = integrated_kernel(ti + tj, xi, xj, bc) - integrated_kernel(
                abs(ti - tj), xi, xj, bc
            )
            total += ei * ej * c
    return max(total, 0.0)


def factorized_increment_bound(dt, dx, theta: float):
    """|t-s|^theta1 |x-y|^theta2 with theta1 = 1/2 - theta, theta2 = 2 theta."""
    if not 0.0 < theta <= 0.25:
        raise ValueError(f"theta must lie in ]0, 1/4], got {theta}")
    return np.abs(dt) ** (0.5 - theta) * np.abs(dx) ** (2.0 * theta)


def _panel_nodes(x: float, sigma: float, breaks, n_per_panel: int):
    """Gauss-Legendre nodes/weights on [0, 1] split at the kernel peak scale."""
    cuts = {0.0, 1.0}
    for c in (x - 10 * sigma, x - 3 * sigma, x + 3 * sigma, x + 10 * sigma):
        if 0.0 < c < 1.0:
            cuts.add(c)
    for c in breaks:
        if 0.0 < c < 1.0:
            cuts.add(c)
    edges = np.array(sorted(cuts))
    base, bw = np.polynomial.legendre.leggauss(n_per_panel)
    lo, hi = edges[:-1], edges[1:]
    mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    v = (mid[:, None] + half[:, None] * base[None, :]).ravel()
    wt = (half[:, None] * bw[None, :]).ravel()
    return v, wt


def kernel_pairing(
    t: float,
    x: float,
    w,
    bc: str,
    tol: float = 1e-7,
    v_breaks=(),
    r_breaks=(),
    params: KernelParams | None = None,
) -> float:
    """Quadrature of int_0^t int_0^1 G(t - r, x, v) w(r, v) dv dr.

    This is the pairing of the derivative kernel of the field at (t, x) with
    a deterministic (or frozen-path) integrand w, which must accept an array
    of v values for fixed r.  The kernel singularity at r -> t is removed by
    the substitution r = t - sigma^2; the spatial integral uses panelled
    Gauss-Legendre with panels tracking the kernel peak width and any caller
    breakpoints.  Pass junction points of non-analytic integrands through
    ``v_breaks`` (spatial) and ``r_breaks`` (temporal).  Outer nodes are
    doubled until two levels agree within tol.
    """
    _check_bc(bc)
    if t <= 0.0:
        raise ValueError("t must be positive")
    p = params or _DEFAULT
    smax = np.sqrt(t)
    cuts = {0.0, smax}
    for rb in r_breaks:
        if 0.0 < rb < t:
            cuts.add(np.sqrt(t - rb))
    edges = np.array(sorted(cuts))
    prev = None
    for n_outer, n_inner in ((32, 16), (64, 24), (128, 32), (256, 48), (384, 64)):
        nodes, weights = np.polynomial.legendre.leggauss(n_outer)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            mid, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
            sig = mid + half * nodes
            for s_i, w_i in zip(sig, weights):
                r = max(t - s_i * s_i, 0.0)
                v, vw = _panel_nodes(x, s_i, v_breaks, n_inner)
                gk = evaluate_green(s_i * s_i, x, v, bc, p)
                total += half * w_i * 2.0 * s_i * float(np.dot(vw, gk * w(r, v)))
        cur = total
        if prev is not None and abs(cur - prev) < 0.5 * tol:
            return cur
        prev = cur
    raise RuntimeError(f"kernel pairing quadrature did not reach tol={tol:g}")


def heat_identity_A(
    t: float,
    x: float,
    f,
    df,
    g,
    d2g,
    bc: str,
    tol: float = 1e-7,
    params: KernelParams | None = None,
) -> float:
    """Quadrature of int_0^t int_0^1 G(t-r, x, v) (f'(r) g(v) - f(r) g''(v)) dv dr.

    For smooth f with f(0) = 0 and g compatible with the boundary condition
    this reproduces f(t) g(x); the quadrature route is kept independent of
    that identity so the two can be compared.
    """

    def integrand(r, v):
        return df(r) * g(v) - f(r) * d2g(v)

    return kernel_pairing(t, x, integrand, bc, tol=tol, params=params)
