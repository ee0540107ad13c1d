"""Empirical rate estimation, finite-difference checks and lemma checks."""

import json
from dataclasses import dataclass

import numpy as np

from .prox_core import DomainError, ParameterError
from .solvers import phi, viscosity_point

__all__ = [
    "RateReport",
    "fit_loglog",
    "check_gradient",
    "check_hessian",
    "check_descent_lemma",
    "check_gradient_lower_bound",
    "check_lemma2",
    "SLOPE_TOL",
    "RATIO_BAND",
]

SLOPE_TOL = 0.2
RATIO_BAND = 10.0
MIN_R2 = 0.95
MIN_POINTS = 10
MAX_DROPPED = 0.1

_POLICY = ("pass = |slope - claimed| <= 0.2, r^2 >= 0.95, tail max/median of "
           "y * x**(-claimed) <= 10 and < 10% dropped points (artifact policy)")


@dataclass
class RateReport:
    series: str
    model: str
    claimed: str
    claimed_slope: float
    fitted_slope: float
    r_squared: float
    ratio_band: float
    tail_fraction: float
    n_used: int
    n_dropped: int
    verdict: str
    policy: str = _POLICY

    def to_dict(self):
        # field order is the serialisation order
        return {k: _plain(v) for k, v in self.__dict__.items()}

    def to_json(self):
        return json.dumps(self.to_dict())


def _plain(v):
    if isinstance(v, (np.floating, float)):
        v = float(v)
        return v if np.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def fit_loglog(xs, ys, tail_fraction=0.5, claimed_slope=-1.0, series="y", model="vs_beta",
               claimed=None):
    """Least-squares slope of log ys against log xs over the tail.

    Non-positive or non-finite entries of the tail are dropped and counted.
    The verdict is ``"pass"`` when the slope is within 0.2 of
    ``claimed_slope``, r^2 >= 0.95, the ratio ys * xs**(-claimed_slope) has
    max/median <= 10 on the tail and fewer than 10% of points were
    dropped; ``"inconclusive"`` with fewer than 10 usable points;
    ``"fail"`` otherwise.

    Raises
    ------
    ParameterError
        Series of different lengths, shorter than 20, or a tail fraction
        outside (0, 1].
    """
    xs = np.asarray(xs, dtype=float).ravel()
    ys = np.asarray(ys, dtype=float).ravel()
    if xs.shape != ys.shape:
        raise ParameterError("xs and ys must have the same length")
    if xs.size < 20:
        raise ParameterError("need at least 20 points")
    if not 0 < tail_fraction <= 1:
        raise ParameterError("tail_fraction must lie in (0, 1]")
    start = int(np.floor((1 - tail_fraction) * xs.size))
    xt, yt = xs[start:], ys[start:]
    ok = np.isfinite(xt) & np.isfinite(yt) & (xt > 0) & (yt > 0)
    n_used = int(np.count_nonzero(ok))
    n_dropped = int(xt.size - n_used)
    if claimed is None:
        claimed = f"O(x^{claimed_slope:g})"
    base = dict(series=series, model=model, claimed=claimed, claimed_slope=float(claimed_slope),
                tail_fraction=float(tail_fraction), n_used=n_used, n_dropped=n_dropped)
    if n_used < MIN_POINTS:
        return RateReport(fitted_slope=np.nan, r_squared=np.nan, ratio_band=np.nan,
                          verdict="inconclusive", **base)
    lx, ly = np.log(xt[ok]), np.log(yt[ok])
    if np.ptp(lx) == 0:
        return RateReport(fitted_slope=np.nan, r_squared=np.nan, ratio_band=np.nan,
                          verdict="inconclusive", **base)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid ** 2) / ss_tot if ss_tot > 0 else 1.0
    # ratio against the claimed envelope, in log space to avoid overflow
    lr = ly - claimed_slope * lx
    band = float(np.exp(lr.max() - np.median(lr)))
    passed = (abs(slope - claimed_slope) <= SLOPE_TOL and r2 >= MIN_R2 and band <= RATIO_BAND
              and n_dropped < MAX_DROPPED * xt.size)
    return RateReport(fitted_slope=float(slope), r_squared=float(r2), ratio_band=band,
                      verdict="pass" if passed else "fail", **base)


def _fd_step(x, h):
    if h is None:
        h = np.finfo(float).eps ** (1 / 3) * (1 + np.linalg.norm(x))
    if not h > 0:
        raise ParameterError("h must be positive")
    return h


def _check_margin(problem, x, h):
    n = problem.dim
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        if not (problem.in_domain(x + e) and problem.in_domain(x - e)):
            raise DomainError("x is closer than h to the boundary of the domain")


def check_gradient(problem, x, h=None):
    """max_i |fd_i - g_i| / max(1, |g|_inf) with central differences of f."""
    x = np.asarray(x, dtype=float)
    h = _fd_step(x, h)
    _check_margin(problem, x, h)
    g = np.asarray(problem.grad(x), dtype=float)
    fd = np.empty_like(g)
    for j in range(problem.dim):
        e = np.zeros(problem.dim)
        e[j] = h
        fd[j] = (float(problem.value(x + e)) - float(problem.value(x - e))) / (2 * h)
    return float(np.max(np.abs(fd - g)) / max(1.0, np.max(np.abs(g))))


def check_hessian(problem, x, h=None):
    """Relative error of ``hess_vec`` on unit vectors against differences of ``grad``."""
    x = np.asarray(x, dtype=float)
    h = _fd_step(x, h)
    _check_margin(problem, x, h)
    n = problem.dim
    H = np.column_stack([problem.hess_vec(x, e) for e in np.eye(n)])
    fd = np.empty((n, n))
    for j in range(n):
        e = np.zeros(n)
        e[j] = h
        fd[:, j] = (problem.grad(x + e) - problem.grad(x - e)) / (2 * h)
    return float(np.max(np.abs(fd - H)) / max(1.0, np.max(np.abs(H))))


def check_descent_lemma(problem, s, pairs):
    """Worst violation of the extended descent inequality

    f(y - s g_y) <= f(x) + <g_y, y - x> - (s/2)|g_y|^2 - (s/2)|g_x - g_y|^2

    over ``pairs`` of points (x, y), for 0 < s <= 1/L.
    """
    L = problem.lipschitz_grad
    if L is None:
        raise ParameterError("problem has no known Lipschitz constant for its gradient")
    if not 0 < s <= 1.0 / L * (1 + 1e-12):
        raise ParameterError("s must lie in (0, 1/L]")
    worst = -np.inf
    for x, y in pairs:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        gx, gy = problem.grad(x), problem.grad(y)
        lhs = float(problem.value(y - s * gy))
        rhs = (float(problem.value(x)) + float(gy @ (y - x)) - s / 2 * float(gy @ gy)
               - s / 2 * float((gx - gy) @ (gx - gy)))
        worst = max(worst, lhs - rhs)
    return float(worst)


def check_gradient_lower_bound(problem, points):
    """Worst violation of f(x) >= min f + |grad f(x)|^2 / (2L)."""
    L = problem.lipschitz_grad
    if L is None or problem.fmin is None:
        raise ParameterError("needs a known Lipschitz constant and minimum value")
    worst = -np.inf
    for x in points:
        x = np.asarray(x, dtype=float)
        g = problem.grad(x)
        worst = max(worst, problem.fmin + float(g @ g) / (2 * L) - float(problem.value(x)))
    return float(worst)


def check_lemma2(problem, schedule, d, k_range):
    """Worst slack of two viscosity-point inequalities over consecutive k.

    (i)   phi_k(y_k) - phi_{k+1}(y_{k+1}) <= ((1-d)/2)(1/b_k - 1/b_{k+1}) |y_{k+1}|^2
    (iii) |y_{k+1} - y_k| <= (bdot_k / b_{k+1}) |y_{k+1}|

    Returns ``(worst_i, worst_iii)``, each the max of LHS - RHS.
    """
    k_lo, k_hi = int(k_range[0]), int(k_range[1])
    if k_hi <= k_lo:
        raise ParameterError("k_range must contain at least two indices")
    ks = np.arange(k_lo, k_hi + 1)
    betas = np.asarray(schedule.beta_k(ks), dtype=float)
    ys = np.array([viscosity_point(problem, b, d) for b in betas])
    phis = np.array([float(phi(problem, b, d, y)) for b, y in zip(betas, ys)])
    norms2 = np.sum(ys * ys, axis=1)
    lhs1 = phis[:-1] - phis[1:]
    rhs1 = (1 - d) / 2 * (1 / betas[:-1] - 1 / betas[1:]) * norms2[1:]
    lhs3 = np.linalg.norm(ys[1:] - ys[:-1], axis=1)
    rhs3 = (betas[1:] - betas[:-1]) / betas[1:] * np.sqrt(norms2[1:])
    return float(np.max(lhs1 - rhs1)), float(np.max(lhs3 - rhs3))
