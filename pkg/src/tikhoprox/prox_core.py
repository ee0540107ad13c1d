"""Objective functions, proximal operators and Moreau envelopes.

Every objective is a :class:`ProxProblem`.  ``value`` is vectorised over
leading axes, so ``problem.value(Z)`` with ``Z`` of shape ``(N, dim)``
returns ``N`` values; this is what the grid oracle relies on.
"""

import numpy as np

__all__ = [
    "ParameterError",
    "ConvergenceError",
    "DomainError",
    "ProxProblem",
    "ZeroProblem",
    "QuadraticProblem",
    "AbsBoxProblem",
    "ShiftedQuadProblem",
    "AbsBoxQuadProblem",
    "LogBarrierQuadProblem",
    "MoreauEnvelope",
    "prox_abs_box",
    "prox_shifted_quad",
    "prox_numeric",
    "brute_force_prox",
    "moreau_value",
    "moreau_grad",
    "moreau_prox_identity_check",
]


class ParameterError(ValueError):
    """Invalid numerical parameter (non-positive step, bad box, ...)."""


class DomainError(ValueError):
    """A point or time lies outside the domain of an object."""


class ConvergenceError(RuntimeError):
    """An inner iterative solver hit its iteration cap."""

    def __init__(self, message, residual=np.nan):
        super().__init__(message)
        self.residual = residual


def _positive(name, value):
    if not value > 0:
        raise ParameterError(f"{name} must be positive, got {value!r}")


class ProxProblem:
    """Base class for an objective with a proximal oracle.

    Subclasses set ``dim`` and override :meth:`value` and :meth:`prox`.
    Differentiable objectives set ``differentiable = True`` and override
    :meth:`grad` (and optionally :meth:`hess_vec`).  Known ground truth
    goes in ``xstar`` (minimum-norm minimiser), ``fmin`` and
    ``lipschitz_grad``; ``None`` means unknown.
    """

    dim = 1
    differentiable = False
    has_hessian = False
    xstar = None
    fmin = None
    lipschitz_grad = None
    argmin_set = "unknown"
    name = "problem"

    def value(self, x):
        raise NotImplementedError

    def prox(self, lam, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError(f"{self.name} has no gradient oracle")

    def hess_vec(self, x, v):
        raise NotImplementedError(f"{self.name} has no Hessian oracle")

    def in_domain(self, x):
        return bool(np.all(np.isfinite(x)))

    def project_inside(self, x, margin=1e-6):
        """Return ``x`` moved at least ``margin`` inside the open domain."""
        return np.asarray(x, dtype=float)

    def hessian(self, x):
        """Dense Hessian from ``hess_vec`` (small dimensions only)."""
        eye = np.eye(self.dim)
        return np.column_stack([self.hess_vec(x, e) for e in eye])

    def __repr__(self):
        return f"{type(self).__name__}(dim={self.dim})"


class ZeroProblem(ProxProblem):
    """f = 0.  Its prox is the identity."""

    differentiable = True
    has_hessian = True
    name = "zero"
    argmin_set = "whole space"
    fmin = 0.0
    lipschitz_grad = None

    def __init__(self, dim=1):
        self.dim = int(dim)
        self.xstar = np.zeros(self.dim)

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape[:-1]) if x.ndim > 1 else 0.0

    def prox(self, lam, x):
        _positive("lam", lam)
        return np.array(x, dtype=float)

    def grad(self, x):
        return np.zeros_like(np.asarray(x, dtype=float))

    def hess_vec(self, x, v):
        return np.zeros_like(np.asarray(v, dtype=float))


class QuadraticProblem(ProxProblem):
    """f(x) = 1/2 (x - b)^T Q (x - b) with Q symmetric positive semidefinite.

    The minimum-norm minimiser is the projection of the origin onto
    ``b + ker Q``.
    """

    differentiable = True
    has_hessian = True
    fmin = 0.0
    name = "quadratic"

    def __init__(self, Q, b=None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        if Q.shape[0] != Q.shape[1]:
            raise ParameterError("Q must be square")
        if not np.allclose(Q, Q.T, atol=1e-12):
            raise ParameterError("Q must be symmetric")
        eigval, eigvec = np.linalg.eigh(Q)
        if eigval[0] < -1e-12 * max(1.0, abs(eigval[-1])):
            raise ParameterError("Q must be positive semidefinite")
        self.Q = Q
        self.dim = Q.shape[0]
        self.b = np.zeros(self.dim) if b is None else np.asarray(b, dtype=float).reshape(self.dim)
        self.lipschitz_grad = float(max(eigval[-1], 0.0)) or None
        kernel = eigvec[:, eigval <= 1e-12 * max(1.0, abs(eigval[-1]))]
        self.xstar = self.b - kernel @ (kernel.T @ self.b)
        self.argmin_set = "b + ker Q" if kernel.shape[1] else "{b}"

    def value(self, x):
        r = np.asarray(x, dtype=float) - self.b
        return 0.5 * np.einsum("...i,ij,...j->...", r, self.Q, r)

    def grad(self, x):
        return self.Q @ (np.asarray(x, dtype=float) - self.b)

    def hess_vec(self, x, v):
        return self.Q @ np.asarray(v, dtype=float)

    def prox(self, lam, x):
        _positive("lam", lam)
        lhs = np.eye(self.dim) + lam * self.Q
        return np.linalg.solve(lhs, np.asarray(x, dtype=float) + lam * (self.Q @ self.b))


def prox_abs_box(x, lam, a):
    """Prox of ``|z| + indicator([-a, a])``: soft threshold, then clamp."""
    _positive("lam", lam)
    _positive("a", a)
    x = np.asarray(x, dtype=float)
    return np.minimum(np.maximum(np.abs(x) - lam, 0.0), a) * np.sign(x)


def prox_shifted_quad(y, lam, v0, flipped_sign=False):
    """Prox of ``(z - v0)**2 / 2``.

    ``flipped_sign=True`` returns ``-(y - lam*v0)/(1 + lam)`` instead of the
    stationarity solution ``(y + lam*v0)/(1 + lam)``; it exists only to
    compare the two formulas.
    """
    _positive("lam", lam)
    y = np.asarray(y, dtype=float)
    if flipped_sign:
        return -(y - lam * v0) / (1.0 + lam)
    # same as (y + lam*v0)/(1 + lam), but exact at y = v0 and overflow-free for huge lam
    return v0 + (y - v0) / (1.0 + lam)


def _box_indicator(x, a):
    return np.where(np.abs(x) <= a, 0.0, np.inf)


class AbsBoxProblem(ProxProblem):
    """One-dimensional ``|x| + indicator([-a, a])``; ``a=inf`` gives ``|x|``."""

    name = "abs_box"
    fmin = 0.0
    argmin_set = "{0}"

    def __init__(self, a=np.inf):
        _positive("a", a)
        self.a = float(a)
        self.dim = 1
        self.xstar = np.zeros(1)

    def value(self, x):
        x = np.asarray(x, dtype=float)[..., 0]
        return np.abs(x) + _box_indicator(x, self.a)

    def prox(self, lam, x):
        return prox_abs_box(np.asarray(x, dtype=float).reshape(1), lam, self.a)

    def in_domain(self, x):
        return bool(np.all(np.abs(np.asarray(x)) <= self.a))


class ShiftedQuadProblem(ProxProblem):
    """One-dimensional ``(x - v0)**2 / 2``."""

    name = "shifted_quad"
    differentiable = True
    has_hessian = True
    fmin = 0.0
    lipschitz_grad = 1.0

    def __init__(self, v0=0.0):
        self.v0 = float(v0)
        self.dim = 1
        self.xstar = np.array([self.v0])
        self.argmin_set = f"{{{self.v0}}}"

    def value(self, x):
        return 0.5 * (np.asarray(x, dtype=float)[..., 0] - self.v0) ** 2

    def grad(self, x):
        return np.asarray(x, dtype=float) - self.v0

    def hess_vec(self, x, v):
        return np.asarray(v, dtype=float).copy()

    def prox(self, lam, x):
        return prox_shifted_quad(np.asarray(x, dtype=float).reshape(1), lam, self.v0)


class AbsBoxQuadProblem(ProxProblem):
    """``f(x, y) = |x| + indicator_[-a,a](x) + (y - v0)**2 / 2``.

    Nonsmooth, proper, lsc and convex; ``argmin f = {(0, v0)}``.
    """

    name = "l1box_quad"
    dim = 2
    fmin = 0.0

    def __init__(self, a=2.0, v0=3.0, flipped_prox=False):
        _positive("a", a)
        self.a = float(a)
        self.v0 = float(v0)
        self.flipped_prox = bool(flipped_prox)
        self.xstar = np.array([0.0, self.v0])
        self.argmin_set = f"{{(0, {self.v0})}}"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        u, w = x[..., 0], x[..., 1]
        return np.abs(u) + _box_indicator(u, self.a) + 0.5 * (w - self.v0) ** 2

    def prox(self, lam, x):
        x = np.asarray(x, dtype=float)
        return np.array([
            prox_abs_box(x[0], lam, self.a),
            prox_shifted_quad(x[1], lam, self.v0, flipped_sign=self.flipped_prox),
        ])

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.isfinite(x)) and abs(x[0]) <= self.a)

    def project_inside(self, x, margin=1e-6):
        x = np.array(x, dtype=float)
        x[0] = np.clip(x[0], -self.a, self.a)
        return x


class LogBarrierQuadProblem(ProxProblem):
    """``f(x) = (x1 + x2)**2 / 2 - ln((x1 + 1)(x2 + 1))`` on ``(-1, inf)^2``.

    Strictly convex with unique minimiser ``((sqrt 3 - 1)/2, (sqrt 3 - 1)/2)``.
    No closed-form prox; :meth:`prox` calls :func:`prox_numeric`.
    """

    name = "logbarrier_quad"
    dim = 2
    differentiable = True
    has_hessian = True
    argmin_set = "{((sqrt3-1)/2, (sqrt3-1)/2)}"

    def __init__(self, prox_tol=1e-10):
        s = (np.sqrt(3.0) - 1.0) / 2.0
        self.xstar = np.array([s, s])
        self.fmin = float(self.value(self.xstar))
        self.prox_tol = prox_tol

    def value(self, x):
        x = np.asarray(x, dtype=float)
        u, w = x[..., 0], x[..., 1]
        inside = (u > -1.0) & (w > -1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            val = 0.5 * (u + w) ** 2 - np.log1p(u) - np.log1p(w)
        return np.where(inside, val, np.inf)

    def grad(self, x):
        x = np.asarray(x, dtype=float)
        s = x[0] + x[1]
        return np.array([s - 1.0 / (x[0] + 1.0), s - 1.0 / (x[1] + 1.0)])

    def hess_vec(self, x, v):
        return self.hessian(x) @ np.asarray(v, dtype=float)

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.array([
            [1.0 + 1.0 / (x[0] + 1.0) ** 2, 1.0],
            [1.0, 1.0 + 1.0 / (x[1] + 1.0) ** 2],
        ])

    def in_domain(self, x):
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.isfinite(x)) and np.all(x > -1.0))

    def project_inside(self, x, margin=1e-6):
        return np.maximum(np.asarray(x, dtype=float), -1.0 + margin)

    def prox(self, lam, x):
        return prox_numeric(self, x, lam, tol=self.prox_tol)


def _jacobian_of_grad(problem, z):
    if problem.has_hessian:
        return problem.hessian(z)
    # central differences of the gradient, symmetrised
    n = problem.dim
    h = 1e-6 * (1.0 + np.abs(z))
    jac = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h[i]
        jac[:, i] = (problem.grad(z + e) - problem.grad(z - e)) / (2.0 * h[i])
    return 0.5 * (jac + jac.T)


def prox_numeric(problem, x, lam, tol=1e-10, max_iter=100):
    """Prox of a differentiable objective by safeguarded Newton.

    Solves ``lam * grad(z) + z - x = 0``.  The step is halved until the
    trial point is inside the open domain and either the subproblem value
    or the residual decreases.

    Parameters
    ----------
    problem : ProxProblem
        Must be differentiable.  A Hessian oracle is used when available,
        otherwise the gradient is differenced.
    x : array_like
        Prox centre.
    lam : float
        Prox parameter, positive.
    tol : float
        Target on the residual norm.  When ``lam`` is so large that the
        residual cannot reach ``tol`` in double precision, the iteration
        also stops once the Newton correction is at rounding level.
    max_iter : int
        Iteration cap; exceeding it raises :class:`ConvergenceError`.

    Returns
    -------
    ndarray
    """
    _positive("lam", lam)
    _positive("tol", tol)
    if not problem.differentiable:
        raise ParameterError(f"{problem.name} has no gradient; prox_numeric needs one")
    x = np.asarray(x, dtype=float).reshape(problem.dim)
    z = problem.project_inside(x.copy(), margin=1e-6)

    def sub_value(p):
        return lam * float(problem.value(p)) + 0.5 * float(np.dot(p - x, p - x))

    def residual(p):
        return lam * problem.grad(p) + p - x

    F = residual(z)
    res = np.linalg.norm(F)
    eye = np.eye(problem.dim)
    for _ in range(max_iter):
        if res <= tol:
            return z
        J = lam * _jacobian_of_grad(problem, z) + eye
        try:
            dz = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError:
            dz = -F
        if np.linalg.norm(dz) <= 4.0 * np.finfo(float).eps * (1.0 + np.linalg.norm(z)):
            return z
        psi = sub_value(z)
        slope = float(np.dot(F, dz))
        t = 1.0
        for _ in range(60):
            trial = z + t * dz
            if problem.in_domain(trial):
                F_trial = residual(trial)
                res_trial = np.linalg.norm(F_trial)
                if np.isfinite(res_trial) and (
                    sub_value(trial) <= psi + 1e-4 * t * slope or res_trial < res
                ):
                    break
            t *= 0.5
        else:
            raise ConvergenceError("prox_numeric line search failed", residual=res)
        z, F, res = trial, F_trial, res_trial
    if res <= tol:
        return z
    raise ConvergenceError(
        f"prox_numeric did not converge in {max_iter} iterations (residual {res:.3e})",
        residual=res,
    )


def brute_force_prox(problem, x, lam, box, n_grid=201, xtol=1e-7, max_levels=40):
    """Grid minimiser of ``f(z) + |z - x|^2 / (2 lam)`` over a box.

    A coarse grid over ``box`` locates the basin; then the grid is
    re-centred on the incumbent with a window of a few pitches and
    refined until the pitch drops below ``xtol``.  Independent of every
    closed-form and Newton prox in this module.

    Parameters
    ----------
    box : sequence of (lo, hi)
        One interval per coordinate; must contain the prox point.
    n_grid : int
        Points per axis at every level (at least 100).
    """
    _positive("lam", lam)
    dim = problem.dim
    if dim > 3:
        raise ParameterError(f"brute_force_prox supports dim <= 3, got {dim}")
    if n_grid < 100:
        raise ParameterError("n_grid must be at least 100 per axis")
    x = np.asarray(x, dtype=float).reshape(dim)
    box = np.asarray(box, dtype=float).reshape(dim, 2)
    if np.any(box[:, 1] <= box[:, 0]):
        raise ParameterError("each box interval needs lo < hi")

    lo, hi = box[:, 0].copy(), box[:, 1].copy()
    best = None
    for _ in range(max_levels):
        axes = [np.linspace(lo[i], hi[i], n_grid) for i in range(dim)]
        mesh = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, dim)
        obj = problem.value(mesh) + np.sum((mesh - x) ** 2, axis=-1) / (2.0 * lam)
        best = mesh[int(np.argmin(obj))]
        pitch = (hi - lo) / (n_grid - 1)
        if np.all(pitch <= xtol):
            break
        lo = np.maximum(best - 3.0 * pitch, box[:, 0])
        hi = np.minimum(best + 3.0 * pitch, box[:, 1])
    return best


class MoreauEnvelope(ProxProblem):
    """Moreau envelope ``f_gamma`` of a base problem.

    Differentiable with a ``1/gamma``-Lipschitz gradient, same minimisers
    and minimum value as the base.  Its own prox uses the closed-form
    envelope identity; :func:`moreau_prox_identity_check` compares that
    against :func:`prox_numeric`.
    """

    differentiable = True
    has_hessian = False

    def __init__(self, base, gamma):
        _positive("gamma", gamma)
        self.base = base
        self.gamma = float(gamma)
        self.dim = base.dim
        self.xstar = base.xstar
        self.fmin = base.fmin
        self.argmin_set = base.argmin_set
        self.lipschitz_grad = 1.0 / self.gamma
        self.name = f"moreau({base.name}, {gamma:g})"

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return moreau_value(self, x)
        flat = x.reshape(-1, self.dim)
        out = np.array([moreau_value(self, row) for row in flat])
        return out.reshape(x.shape[:-1])

    def grad(self, x):
        return moreau_grad(self, x)

    def prox(self, lam, x):
        _positive("lam", lam)
        x = np.asarray(x, dtype=float)
        g = self.gamma
        return (g / (g + lam)) * x + (lam / (g + lam)) * self.base.prox(g + lam, x)


def moreau_value(env, x):
    """Envelope value ``f(p) + |x - p|^2 / (2 gamma)``, ``p = prox_{gamma f}(x)``."""
    x = np.asarray(x, dtype=float)
    p = env.base.prox(env.gamma, x)
    return float(env.base.value(p)) + float(np.dot(x - p, x - p)) / (2.0 * env.gamma)


def moreau_grad(env, x):
    """Envelope gradient ``(x - prox_{gamma f}(x)) / gamma``."""
    x = np.asarray(x, dtype=float)
    return (x - env.base.prox(env.gamma, x)) / env.gamma


def moreau_prox_identity_check(base, gamma, theta, x, tol=1e-12):
    """Residual of ``prox_{theta f_gamma}(x) = (g x + theta prox_{(g+theta) f}(x)) / (g + theta)``.

    The left side is computed numerically on the (smooth) envelope, the
    right side from the base prox.
    """
    _positive("gamma", gamma)
    _positive("theta", theta)
    x = np.asarray(x, dtype=float)
    env = MoreauEnvelope(base, gamma)
    left = prox_numeric(env, x, theta, tol=tol)
    right = (gamma / (gamma + theta)) * x + (theta / (gamma + theta)) * base.prox(gamma + theta, x)
    return float(np.linalg.norm(left - right))
