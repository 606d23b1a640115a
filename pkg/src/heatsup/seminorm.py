"""Garsia-type seminorms, the Y functionals, and the supremum control chain.

The Y functionals are double (time) and four-fold (time x space) quadratures
of high powers of increments against singular weights.  Powers like
increment^64 underflow long before the increments themselves are small, so
every integrand here is assembled in log domain and exponentiated last.

The chain constants that convert a bound on Y into a bound on the supremum
are computed once from the explicit real-variable lemma
|f(t) - f(s)| <= c int_0^{L} Psi^{-1}(4 B / mu(ball)^2) dp(u)
with Psi(x) = x^(2 p0) and the appropriate metric, and are deliberately not
tuned: the implication check below must never produce a false FAIL.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.special import gammaln

from .green import _check_bc, integrated_kernel

_LOG_FLOOR = -745.0  # exp() underflows to 0 a bit below this


def _exp_floor(logm: np.ndarray) -> np.ndarray:
    """exp with -inf and sub-underflow exponents mapped to exactly 0."""
    with np.errstate(under="ignore"):
        return np.where(logm > _LOG_FLOOR, np.exp(np.maximum(logm, _LOG_FLOOR)), 0.0)


class Verdict(Enum):
    PASS = "pass"
    FAIL = "fail"
    VACUOUS = "vacuous"


@dataclass(frozen=True)
class SeminormParams:
    """Exponents of the Y functionals.

    Constraints: p0 - 2 > gamma0 > 4 always; for the rectangle variant the
    partial exponents must satisfy 1/(2 p0) < gamma_i < theta_i/2 - 1/(2 p0)
    and 2 gamma1 + gamma2 = (gamma0 - 1) / (2 p0).
    """

    p0: int
    gamma0: float
    theta: float | None = None
    gamma1: float | None = None
    gamma2: float | None = None

    def __post_init__(self):
        if not self.p0 - 2 > self.gamma0 > 4.0:
            raise ValueError(
                f"need p0 - 2 > gamma0 > 4, got p0={self.p0}, gamma0={self.gamma0}"
            )
        rect = [self.theta, self.gamma1, self.gamma2]
        if any(v is not None for v in rect):
            if any(v is None for v in rect):
                raise ValueError("rectangle variant needs theta, gamma1 and gamma2")
            if not 0.0 < self.theta <= 0.25:
                raise ValueError(f"theta must lie in ]0, 1/4], got {self.theta}")
            lo = 1.0 / (2.0 * self.p0)
            th1, th2 = 0.5 - self.theta, 2.0 * self.theta
            if not lo < self.gamma1 < th1 / 2.0 - lo:
                raise ValueError(f"gamma1={self.gamma1} outside ]{lo}, {th1 / 2 - lo}[")
            if not lo < self.gamma2 < th2 / 2.0 - lo:
                raise ValueError(f"gamma2={self.gamma2} outside ]{lo}, {th2 / 2 - lo}[")
            target = (self.gamma0 - 1.0) / (2.0 * self.p0)
            if abs(2.0 * self.gamma1 + self.gamma2 - target) > 1e-12:
                raise ValueError(
                    f"2 gamma1 + gamma2 = {2 * self.gamma1 + self.gamma2} "
                    f"must equal (gamma0 - 1)/(2 p0) = {target}"
                )

    @property
    def is_rectangle(self) -> bool:
        return self.theta is not None


def time_default() -> SeminormParams:
    return SeminormParams(p0=7, gamma0=4.5)


def rectangle_default() -> SeminormParams:
    return SeminormParams(p0=32, gamma0=5.0, theta=0.25, gamma1=0.018, gamma2=0.0265)


# ---------------------------------------------------------------------------
# Hoelder seminorm and Y functionals


def _trapezoid_weights(grid: np.ndarray) -> np.ndarray:
    w = np.empty_like(grid)
    w[1:-1] = 0.5 * (grid[2:] - grid[:-2])
    w[0] = 0.5 * (grid[1] - grid[0])
    w[-1] = 0.5 * (grid[-1] - grid[-2])
    return w


def _log_power_kernel(values: np.ndarray, grid: np.ndarray, two_p: float, sing: float):
    """exp(two_p log|diff| - sing log|gap|) over all pairs, 0 on the diagonal."""
    diff = np.abs(values[..., :, None] - values[..., None, :])
    gap = np.abs(grid[:, None] - grid[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        logm = two_p * np.log(diff) - sing * np.log(gap)
    logm = np.where(gap > 0.0, logm, -np.inf)
    return _exp_floor(logm)


def holder_seminorm(values: np.ndarray, xs: np.ndarray, p: int, gamma: float) -> float:
    """Discrete (int int |f(x)-f(y)|^(2p) / |x-y|^(1+2p gamma))^(1/(2p)).

    Trapezoid weights in both variables; diagonal cells contribute zero.
    """
    if p < 1 or gamma <= 0.0:
        raise ValueError("need p >= 1 and gamma > 0")
    values = np.asarray(values, dtype=float)
    xs = np.asarray(xs, dtype=float)
    kern = _log_power_kernel(values, xs, 2.0 * p, 1.0 + 2.0 * p * gamma)
    w = _trapezoid_weights(xs)
    total = float(w @ kern @ w)
    return total ** (1.0 / (2.0 * p))


def compute_Y(
    trace: np.ndarray, times: np.ndarray, params: SeminormParams, r_index: int | None = None
) -> float:
    """Y_r = int int_{window^2} |u(t) - u(s)|^(2 p0) / |t-s|^(gamma0/2) ds dt.

    ``trace`` holds u(t, y0) on the sorted window times, whose first entry is
    the window anchor.  ``r_index`` truncates the window to times[:r_index+1].
    """
    if r_index is None:
        r_index = times.size - 1
    tr, tt = trace[: r_index + 1], times[: r_index + 1]
    kern = _log_power_kernel(tr, tt, 2.0 * params.p0, params.gamma0 / 2.0)
    w = _trapezoid_weights(tt)
    return float(w @ kern @ w)


def compute_Y_profile(
    traces: np.ndarray, times: np.ndarray, params: SeminormParams
) -> np.ndarray:
    """Y_r at every window time, vectorized over a batch of traces.

    traces: shape (n_paths, m).  Returns shape (n_paths, m) with the running
    trapezoid quadrature; entry 0 is zero.
    """
    traces = np.atleast_2d(np.asarray(traces, dtype=float))
    n, m = traces.shape
    kern = _log_power_kernel(traces, times, 2.0 * params.p0, params.gamma0 / 2.0)
    out = np.zeros((n, m))
    dt = np.diff(times)
    # running trapezoid: weights depend on the current right endpoint, so keep
    # prefix sums of interior rows and patch the two boundary rows per step
    for k in range(1, m):
        w = np.zeros(m)
        w[1:k] = 0.5 * (times[2 : k + 1] - times[: k - 1])
        w[0] = 0.5 * dt[0]
        w[k] = 0.5 * dt[k - 1]
        wk = w[: k + 1]
        out[:, k] = np.einsum("i,nij,j->n", wk, kern[:, : k + 1, : k + 1], wk)
    return out


def compute_Ybar(
    values: np.ndarray,
    times: np.ndarray,
    xs: np.ndarray,
    params: SeminormParams,
) -> np.ndarray:
    """Rectangle functional Ybar = Y0 + Y1 over the full window, batched.

    values: shape (n_paths, m, k) of u on times x xs with xs[0] the anchor
    position y0.  Y0 is the time functional of the anchor trace; Y1 is the
    four-fold quadrature of the rectangular increment
    u(t,x) - u(t,y) - u(s,x) + u(s,y) against
    |t-s|^(1+2 p0 gamma1) |x-y|^(1+2 p0 gamma2).
    """
    if not params.is_rectangle:
        raise ValueError("Ybar needs rectangle-variant parameters")
    values = np.asarray(values, dtype=float)
    if values.ndim == 2:
        values = values[None]
    n, m, k = values.shape
    two_p = 2.0 * params.p0
    y0_part = np.array(
        [compute_Y(values[i, :, 0], times, params) for i in range(n)]
    )

    rect = np.abs(
        values[:, :, None, :, None]
        - values[:, :, None, None, :]
        - values[:, None, :, :, None]
        + values[:, None, :, None, :]
    )
    tgap = np.abs(times[:, None] - times[None, :])
    xgap = np.abs(xs[:, None] - xs[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        logm = (
            two_p * np.log(rect)
            - (1.0 + two_p * params.gamma1) * np.log(tgap)[None, :, :, None, None]
            - (1.0 + two_p * params.gamma2) * np.log(xgap)[None, None, None, :, :]
        )
    mask = (tgap[:, :, None, None] > 0.0) & (xgap[None, None, :, :] > 0.0)
    logm = np.where(mask[None], logm, -np.inf)
    kern = _exp_floor(logm)
    wt = _trapezoid_weights(times)
    wx = _trapezoid_weights(xs)
    y1 = np.einsum("a,b,nabcd,c,d->n", wt, wt, kern, wx, wx, optimize=True)
    return y0_part + y1


# ---------------------------------------------------------------------------
# smooth cutoff


def _smoothstep(s):
    """C-infinity monotone step: 0 for s <= 0, 1 for s >= 1."""
    s = np.asarray(s, dtype=float)
    out = np.zeros(s.shape)
    out[s >= 1.0] = 1.0
    mid = (s > 0.0) & (s < 1.0)
    sm = s[mid]
    w = np.clip(1.0 / (1.0 - sm) - 1.0 / sm, -700.0, 700.0)
    out[mid] = 1.0 / (1.0 + np.exp(-w))
    return out


def psi0(x):
    """Cutoff profile: 1 on ]-inf, 1/2], 0 on [1, inf[, C-infinity between."""
    x = np.asarray(x, dtype=float)
    res = _smoothstep(2.0 * (1.0 - x))
    if res.ndim == 0:
        return float(res)
    return res


def psi(x, radius: float):
    """psi0(x / radius); equals 1 for x <= radius/2 and 0 beyond radius."""
    if radius <= 0.0:
        raise ValueError("radius must be positive")
    return psi0(np.asarray(x, dtype=float) / radius)


# max |psi0'|, attained at the middle of the transition where the logistic
# profile has slope 1/4 and its argument has slope 16; gives the derivative
# bound |psi'| <= PSI_SLOPE / radius
PSI_SLOPE = 4.0

# ---------------------------------------------------------------------------
# supremum control (Garsia chain)


def grr_chain_constant(params: SeminormParams, variant: str) -> float:
    """Multiplicative constant of the supremum bound for the given variant.

    variant "time": sup_{[s0, s0+delta1]} |ubar| <= K Y^(1/(2 p0))
    delta1^((gamma0-4)/(4 p0)).  variant "rectangle": same shape in the
    combined scale delta with the constant K0 + Ct * Cs from chaining the
    time lemma with the Banach-valued and spatial lemmas.
    """
    p0, g0 = params.p0, params.gamma0
    k_time = (
        10.0
        * 4.0 ** (1.0 / (2.0 * p0))
        * 16.0 ** (1.0 / p0)
        * (g0 / (g0 - 4.0))
        * 2.0 ** ((g0 - 4.0) / (2.0 * p0))
    )
    if variant == "time":
        return k_time
    if variant != "rectangle":
        raise ValueError(f"unknown variant {variant!r}")
    if not params.is_rectangle:
        raise ValueError("rectangle constant needs rectangle parameters")

    def classic(gamma):
        return (
            8.0
            * 4.0 ** (1.0 / (2.0 * p0))
            * (1.0 + 2.0 * p0 * gamma)
            / (2.0 * p0 * gamma - 1.0)
        )

    return k_time + classic(params.gamma1) * classic(params.gamma2)


def grr_constant(params: SeminormParams, variant: str) -> float:
    """Calibrated c in the radius R = c a^(2 p0) scale^(-(gamma0-4)/...)."""
    return grr_chain_constant(params, variant) ** (-2.0 * params.p0)


def cutoff_radius(a: float, scale: float, params: SeminormParams, variant: str) -> float:
    """Radius R such that Y <= R implies sup <= a (log-domain assembly).

    For variant "time" the scale argument is delta1 and
    R = c a^(2 p0) delta1^(-(gamma0-4)/2); for "rectangle" it is the combined
    delta and R = c a^(2 p0) delta^(4-gamma0).
    """
    if a <= 0.0 or scale <= 0.0:
        raise ValueError("a and scale must be positive")
    c = grr_constant(params, variant)
    expo = (
        -(params.gamma0 - 4.0) / 2.0 if variant == "time" else 4.0 - params.gamma0
    )
    log_r = np.log(c) + 2.0 * params.p0 * np.log(a) + expo * np.log(scale)
    return float(np.exp(max(log_r, _LOG_FLOOR)))


def grr_implication_check(sup_value: float, y_value: float, a: float, radius: float) -> Verdict:
    """Check the implication (Y <= R) => (sup <= a) on one realization."""
    if y_value > radius:
        return Verdict.VACUOUS
    return Verdict.PASS if sup_value <= a else Verdict.FAIL


def gamma22(psi_values: np.ndarray, times: np.ndarray) -> float:
    """Trapezoid of psi(Y_r) over the window times (entry of gamma_A)."""
    return float(np.trapezoid(psi_values, times))


# ---------------------------------------------------------------------------
# exact Gaussian-moment expectations of the Y functionals


def _log_double_factorial_odd(p0: int) -> float:
    # (2 p0 - 1)!! = (2 p0)! / (2^p0 p0!)
    return float(
        gammaln(2 * p0 + 1) - p0 * np.log(2.0) - gammaln(p0 + 1)
    )


def _increment_variance_time(times: np.ndarray, y0: float, bc: str) -> np.ndarray:
    """Var(u(t, y0) - u(s, y0)) over all pairs of times, via the closed form."""
    phi2t = integrated_kernel(2.0 * times, y0, y0, bc)
    cross = integrated_kernel(
        times[:, None] + times[None, :], y0, y0, bc
    ) - integrated_kernel(np.abs(times[:, None] - times[None, :]), y0, y0, bc)
    return phi2t[:, None] + phi2t[None, :] - 2.0 * cross


def expected_Y(
    delta1: float,
    s0: float,
    y0: float,
    bc: str,
    params: SeminormParams,
    n_quad: int = 96,
) -> float:
    """Exact E[Y_{s0+delta1}]: Gaussian moments reduce the expectation to
    (2 p0 - 1)!! int int Var(inc)^(p0) / |t-s|^(gamma0/2), quadratured here.

    For high p0 the corresponding Monte Carlo mean is dominated by the single
    largest sample and is not estimable, so scaling checks use this route.
    """
    _check_bc(bc)
    times = np.linspace(s0, s0 + delta1, n_quad + 1)
    var = _increment_variance_time(times, y0, bc)
    gap = np.abs(times[:, None] - times[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        logm = (
            _log_double_factorial_odd(params.p0)
            + params.p0 * np.log(var)
            - (params.gamma0 / 2.0) * np.log(gap)
        )
    logm = np.where(gap > 0.0, logm, -np.inf)
    kern = _exp_floor(logm)
    w = _trapezoid_weights(times)
    return float(w @ kern @ w)


def expected_Ybar(
    delta1: float,
    delta2: float,
    y0: float,
    bc: str,
    params: SeminormParams,
    n_t: int = 24,
    n_x: int = 16,
) -> float:
    """Exact E[Ybar] over [0, delta1] x [y0, y0 + delta2] by quadrature."""
    _check_bc(bc)
    if not params.is_rectangle:
        raise ValueError("Ybar needs rectangle-variant parameters")
    eps = delta1 / (64.0 * n_t)  # keep window times strictly positive
    times = np.linspace(eps, delta1, n_t + 1)
    xs = np.linspace(y0, y0 + delta2, n_x + 1)
    y0_term = _expected_Y_window(times, y0, bc, params)
    two_p = 2.0 * params.p0
    var = _rect_increment_variance_grid(times, xs, bc)
    tgap = np.abs(times[:, None] - times[None, :])
    xgap = np.abs(xs[:, None] - xs[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        logm = (
            _log_double_factorial_odd(params.p0)
            + params.p0 * np.log(var)
            - (1.0 + two_p * params.gamma1) * np.log(tgap)[:, :, None, None]
            - (1.0 + two_p * params.gamma2) * np.log(xgap)[None, None, :, :]
        )
    mask = (tgap[:, :, None, None] > 0.0) & (xgap[None, None, :, :] > 0.0)
    logm = np.where(mask, logm, -np.inf)
    kern = _exp_floor(logm)
    wt = _trapezoid_weights(times)
    wx = _trapezoid_weights(xs)
    y1_term = float(np.einsum("a,b,abcd,c,d->", wt, wt, kern, wx, wx))
    return y0_term + y1_term


def _rect_increment_variance_grid(times: np.ndarray, xs: np.ndarray, bc: str) -> np.ndarray:
    """Var of the rectangular increment over all (t, s) x (x, y) pairs.

    Exact through the integrated kernel, fully vectorized; shape
    (len(times), len(times), len(xs), len(xs)).
    """

    def time_corr(a, b, x, y):
        # E[u(a, x) u(b, y)] broadcast over (m, m, k, k)
        tsum = (times[:, None] + times[None, :])[:, :, None, None]
        tgap = np.abs(times[:, None] - times[None, :])[:, :, None, None]
        return integrated_kernel(tsum, x, y, bc) - integrated_kernel(tgap, x, y, bc)

    xx = xs[:, None, None, None].transpose(2, 3, 0, 1)  # (1, 1, k, 1)
    yy = xs[None, None, None, :]  # (1, 1, 1, k)
    c_xx = time_corr(None, None, xx, xx)
    c_yy = time_corr(None, None, yy, yy)
    c_xy = time_corr(None, None, xx, yy)
    m = times.size
    diag = np.arange(m)
    spatial = c_xx + c_yy - 2.0 * c_xy  # E[(u(t,x)-u(t,y))(u(s,x)-u(s,y))]
    var = spatial[diag, diag][:, None] + spatial[diag, diag][None, :] - 2.0 * spatial
    return np.maximum(var, 0.0)


def _expected_Y_window(times, y0, bc, params):
    var = _increment_variance_time(times, y0, bc)
    gap = np.abs(times[:, None] - times[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        logm = (
            _log_double_factorial_odd(params.p0)
            + params.p0 * np.log(var)
            - (params.gamma0 / 2.0) * np.log(gap)
        )
    logm = np.where(gap > 0.0, logm, -np.inf)
    kern = _exp_floor(logm)
    w = _trapezoid_weights(times)
    return float(w @ kern @ w)
