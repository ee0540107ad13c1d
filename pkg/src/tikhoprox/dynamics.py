"""Continuous-time Tikhonov dynamics and their diagnostics.

The first-order flow is

    x'(t) + beta(t) grad f(x(t)) + c x(t) = 0,

and six fixed comparison systems (two first order, four second order) are
available by name.  Each system also exposes a pair (beta(t), eps(t)) such
that the viscosity curve y(t) = argmin beta f + (eps/2)|.|^2 = prox_{beta/eps f}(0)
is the point its trajectory is expected to track.

Integration is fixed-step classical RK4, with local step halving when a
stage leaves the domain of f.  The large-beta systems are stiff far beyond
what an explicit scheme can handle at desk-scale step sizes, so
``method="auto"`` switches to the implicit Radau IIA solver of scipy when
dt times the spectral radius of the Jacobian exceeds the RK4 stability
limit.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .prox_core import DomainError, ParameterError
from .schedules import BetaSchedule

__all__ = [
    "OdeSystem",
    "Trajectory",
    "IntegrationError",
    "SYSTEMS",
    "integrate",
    "continuous_energy",
    "viscosity_curve",
    "default_mu",
    "value_difference",
]

SYSTEMS = ("flow", "tral", "trae", "trisal", "trisae", "trisg", "trish")
RK4_STABILITY = 2.5
MAX_HALVINGS = 30


class IntegrationError(RuntimeError):
    """Non-finite state during integration; ``t`` is where it appeared."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t


class _OutOfDomain(Exception):
    pass


def default_mu(c):
    """min(c - 1, 1) * 0.9 for c > 1, otherwise None (diagnostic skipped)."""
    return min(c - 1.0, 1.0) * 0.9 if c > 1 else None


@dataclass
class OdeSystem:
    """One of the supported dynamics bound to an objective.

    ``schedule`` and ``c`` are only free for ``kind="flow"``; every other
    kind carries fixed coefficients set by :meth:`named`.
    """

    kind: str
    problem: object
    schedule: BetaSchedule = None
    c: float = None
    damping: object = None
    eps: object = None
    hessian_damping: float = 0.0

    def __post_init__(self):
        if self.kind not in SYSTEMS:
            raise ParameterError(f"unknown system {self.kind!r}")
        if not getattr(self.problem, "differentiable", False):
            raise ParameterError(f"system {self.kind} needs a gradient oracle")
        if self.hessian_damping and not getattr(self.problem, "has_hessian", False):
            raise ParameterError(f"system {self.kind} needs a Hessian oracle")
        if self.kind in ("flow", "tral", "trae"):
            if self.schedule is None or self.c is None or not self.c > 0:
                raise ParameterError("first-order flow needs a schedule and c > 0")

    @classmethod
    def flow(cls, problem, schedule, c):
        return cls("flow", problem, schedule=schedule, c=float(c))

    @classmethod
    def named(cls, kind, problem):
        """Comparison systems with their fixed coefficients."""
        kind = kind.lower()
        five = 5.0
        if kind == "flow":
            raise ParameterError("use OdeSystem.flow for the free first-order system")
        if kind == "tral":
            return cls(kind, problem, schedule=BetaSchedule.polylog(2, 2, scale=2), c=five)
        if kind == "trae":
            return cls(kind, problem, schedule=BetaSchedule.exppow(2, 2, 0.9, scale=2), c=five)
        if kind == "trisal":
            return cls(kind, problem, schedule=BetaSchedule.polylog(2, 2, scale=2),
                       damping=lambda t: five, eps=lambda t: five)
        if kind == "trisae":
            return cls(kind, problem, schedule=BetaSchedule.exppow(2, 2, 0.8, scale=2),
                       damping=lambda t: five, eps=lambda t: five)
        if kind in ("trisg", "trish"):
            return cls(kind, problem, schedule=None,
                       damping=lambda t: five * t ** -0.8, eps=lambda t: t ** -1.6,
                       hessian_damping=2.0 if kind == "trish" else 0.0)
        raise ParameterError(f"unknown system {kind!r}")

    @property
    def order(self):
        return 1 if self.kind in ("flow", "tral", "trae") else 2

    @property
    def t_min(self):
        return self.schedule.t0 if self.schedule is not None else 0.0

    def beta(self, t):
        if self.schedule is None:
            return np.ones_like(np.asarray(t, dtype=float))
        return self.schedule.beta(t)

    def eps_of(self, t):
        """Tikhonov coefficient multiplying x."""
        if self.order == 1:
            return np.full_like(np.asarray(t, dtype=float), self.c)
        return np.asarray(self.eps(np.asarray(t, dtype=float)), dtype=float)

    def rhs(self, t, state):
        n = self.problem.dim
        x = state[:n]
        if not np.all(np.isfinite(state)):
            raise IntegrationError(f"non-finite state at t={t:.6g}", t=t)
        if not self.problem.in_domain(x):
            raise _OutOfDomain
        b = float(self.beta(t))
        g = self.problem.grad(x)
        if self.order == 1:
            return -b * g - self.c * x
        v = state[n:]
        acc = -float(self.damping(t)) * v - b * g - float(self.eps(t)) * x
        if self.hessian_damping:
            acc = acc - self.hessian_damping * self.problem.hess_vec(x, v)
        return np.concatenate([v, acc])

    def jacobian(self, t, state):
        n = self.problem.dim
        x = state[:n]
        H = self.problem.hessian(x)
        b = float(self.beta(t))
        if self.order == 1:
            return -b * H - self.c * np.eye(n)
        J = np.zeros((2 * n, 2 * n))
        J[:n, n:] = np.eye(n)
        J[n:, :n] = -b * H - float(self.eps(t)) * np.eye(n)
        J[n:, n:] = -float(self.damping(t)) * np.eye(n)
        if self.hessian_damping:
            J[n:, n:] -= self.hessian_damping * H
            # derivative of the Hessian term in x, by central differences
            v = state[n:]
            h = 1e-6
            for j in range(n):
                e = np.zeros(n)
                e[j] = h
                J[n:, j] -= self.hessian_damping * (
                    self.problem.hess_vec(x + e, v) - self.problem.hess_vec(x - e, v)
                ) / (2 * h)
        return J

    def stiffness(self, t, state):
        """Spectral radius of the Jacobian at (t, state)."""
        return float(np.max(np.abs(np.linalg.eigvals(self.jacobian(t, state)))))


@dataclass
class Trajectory:
    """Sampled solution plus derived series.

    ``x`` has shape (N, dim); ``v`` is ``None`` for first-order systems.
    ``gap``, ``dist_y``, ``grad_norm`` and ``E`` are filled by
    :func:`integrate`; ``E`` is nan for second-order systems.
    """

    system: OdeSystem
    t: np.ndarray
    x: np.ndarray
    v: np.ndarray = None
    gap: np.ndarray = None
    dist_y: np.ndarray = None
    grad_norm: np.ndarray = None
    E: np.ndarray = None
    y: np.ndarray = None
    method: str = "rk4"
    truncated: bool = False
    notes: list = field(default_factory=list)

    def columns(self):
        cols = {"t": self.t}
        n = self.x.shape[1]
        for i in range(n):
            cols[f"x{i + 1}"] = self.x[:, i]
        if self.v is not None:
            for i in range(n):
                cols[f"v{i + 1}"] = self.v[:, i]
        cols["gap"] = self.gap
        cols["dist_y"] = self.dist_y
        cols["grad_norm"] = self.grad_norm
        cols["E"] = self.E
        return cols


def _rk4_step(f, t, y, h):
    k1 = f(t, y)
    k2 = f(t + h / 2, y + h / 2 * k1)
    k3 = f(t + h / 2, y + h / 2 * k2)
    k4 = f(t + h, y + h * k3)
    return y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def _advance(system, t, y, h, depth=0):
    """RK4 over [t, t+h], splitting into halves while stages leave the domain."""
    try:
        with np.errstate(over="ignore", invalid="ignore"):
            out = _rk4_step(system.rhs, t, y, h)
        if not np.all(np.isfinite(out)):
            raise IntegrationError(f"non-finite state at t={t + h:.6g}", t=t + h)
        if not system.problem.in_domain(out[:system.problem.dim]):
            raise _OutOfDomain
        return out
    except _OutOfDomain:
        if depth >= MAX_HALVINGS:
            raise
        mid = _advance(system, t, y, h / 2, depth + 1)
        return _advance(system, t + h / 2, mid, h / 2, depth + 1)


def _integrate_rk4(system, y0, t0, n_steps, dt, sample_idx):
    ys = np.empty((len(sample_idx), y0.size))
    y = y0.copy()
    want = set(int(i) for i in sample_idx)
    pos = {int(i): j for j, i in enumerate(sample_idx)}
    if 0 in want:
        ys[pos[0]] = y
    for i in range(1, n_steps + 1):
        t = t0 + (i - 1) * dt
        try:
            y = _advance(system, t, y, dt)
        except _OutOfDomain:
            return ys, i - 1, f"left the domain near t={t:.6g} after {MAX_HALVINGS} halvings"
        if not np.all(np.isfinite(y)):
            raise IntegrationError(f"non-finite state at t={t + dt:.6g}", t=t + dt)
        if i in want:
            ys[pos[i]] = y
    return ys, n_steps, None


def _integrate_radau(system, y0, t_eval, rtol, atol):
    def fun(t, y):
        try:
            return system.rhs(t, y)
        except (_OutOfDomain, IntegrationError):
            return np.full_like(y, np.nan)

    sol = solve_ivp(fun, (t_eval[0], t_eval[-1]), y0, method="Radau", t_eval=t_eval,
                    jac=system.jacobian, rtol=rtol, atol=atol)
    if not sol.success:
        raise IntegrationError(f"implicit integration failed: {sol.message}", t=float(sol.t[-1]) if sol.t.size else None)
    return sol.y.T


def integrate(system, x0, v0=None, t0=None, t_end=10.0, dt=1e-3, method="auto",
              n_samples=1001, rtol=None, atol=None, diagnostics=True):
    """Integrate ``system`` from ``t0`` to ``t_end``.

    Parameters
    ----------
    system : OdeSystem
    x0, v0 : array_like
        Initial position (inside the domain) and, for second-order systems,
        initial velocity.
    t0, t_end, dt : float
        Time window and RK4 step.  ``t0`` defaults to the schedule start.
    method : {"auto", "rk4", "radau"}
        ``auto`` uses RK4 unless ``dt`` times the Jacobian spectral radius
        at ``(t_end, x0)`` exceeds 2.5.
    n_samples : int
        Number of stored samples, evenly spaced on the step grid
        (both ends included).
    rtol, atol : float, optional
        Radau tolerances; default 1e-10/1e-12 for first-order systems and
        1e-7/1e-10 for second-order ones, whose fast oscillatory modes
        must be resolved until they have decayed.

    Returns
    -------
    Trajectory
    """
    if not dt > 0:
        raise ParameterError("dt must be positive")
    if t0 is None:
        t0 = max(system.t_min, 2.0) if system.schedule is not None else 2.0
    if t0 < system.t_min:
        raise DomainError(f"t0={t0} precedes the schedule start {system.t_min}")
    if not t_end > t0:
        raise ParameterError("t_end must exceed t0")
    n = system.problem.dim
    x0 = np.asarray(x0, dtype=float).reshape(n)
    if not system.problem.in_domain(x0):
        raise DomainError("x0 lies outside the domain of f")
    if system.order == 2:
        if v0 is None:
            raise ParameterError(f"system {system.kind} is second order and needs v0")
        y0 = np.concatenate([x0, np.asarray(v0, dtype=float).reshape(n)])
    else:
        y0 = x0.copy()

    n_steps = int(round((t_end - t0) / dt))
    if n_steps < 1:
        raise ParameterError("window shorter than one step")
    sample_idx = np.unique(np.round(np.linspace(0, n_steps, min(n_samples, n_steps + 1))).astype(int))
    t_samples = t0 + sample_idx * dt

    if method == "auto":
        with np.errstate(over="ignore"):
            rho = system.stiffness(t0 + n_steps * dt, y0)
        method = "radau" if not (dt * rho <= RK4_STABILITY) else "rk4"
    notes = []
    truncated = False
    if method == "rk4":
        states, reached, msg = _integrate_rk4(system, y0, t0, n_steps, dt, sample_idx)
        if msg is not None:
            keep = sample_idx <= reached
            states, t_samples = states[keep], t_samples[keep]
            truncated = True
            notes.append(msg)
    elif method == "radau":
        if rtol is None:
            rtol = 1e-10 if system.order == 1 else 1e-7
        if atol is None:
            atol = 1e-12 if system.order == 1 else 1e-10
        states = _integrate_radau(system, y0, t_samples, rtol, atol)
    else:
        raise ParameterError(f"unknown method {method!r}")

    traj = Trajectory(
        system=system, t=t_samples, x=states[:, :n],
        v=states[:, n:] if system.order == 2 else None,
        method=method, truncated=truncated, notes=notes,
    )
    if diagnostics:
        _fill_diagnostics(traj)
    return traj


def _fill_diagnostics(traj):
    system = traj.system
    problem = system.problem
    t = traj.t
    N = t.size
    if problem.fmin is not None:
        if problem.xstar is not None:
            traj.gap = value_difference(problem, traj.x, np.broadcast_to(problem.xstar, traj.x.shape))
        else:
            traj.gap = np.asarray(problem.value(traj.x), dtype=float).reshape(N) - problem.fmin
    else:
        traj.gap = np.full(N, np.nan)
    traj.grad_norm = np.array([np.linalg.norm(problem.grad(x)) for x in traj.x])
    with np.errstate(over="ignore"):
        ratio = system.beta(t) / system.eps_of(t)
    if np.all(np.isfinite(ratio)):
        traj.y = np.array([problem.prox(r, np.zeros(problem.dim)) for r in ratio])
        traj.dist_y = np.linalg.norm(traj.x - traj.y, axis=1)
    else:
        traj.dist_y = np.full(N, np.nan)
        traj.notes.append("beta(t) overflows on the window; viscosity curve skipped")
    if system.order == 1 and traj.y is not None:
        traj.E = continuous_energy(traj, system.c, system.schedule)
    else:
        traj.E = np.full(N, np.nan)


CLOSE = 1e-3


def value_difference(problem, x, y):
    """Row-wise f(x) - f(y) for arrays of shape (N, dim).

    Subtracting two O(1) values leaves only ~1e-16 absolute accuracy, which
    swamps differences that are then multiplied by a huge beta(t).  For rows
    with |x - y| <= 1e-3 the trapezoid rule (grad f(x) + grad f(y)).(x - y)/2
    is used instead; its relative error is O(|x - y|).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    y = np.atleast_2d(np.asarray(y, dtype=float))
    out = np.asarray(problem.value(x), dtype=float) - np.asarray(problem.value(y), dtype=float)
    if not getattr(problem, "differentiable", False):
        return out
    diff = x - y
    close = np.linalg.norm(diff, axis=1) <= CLOSE
    for i in np.flatnonzero(close):
        out[i] = 0.5 * float((problem.grad(x[i]) + problem.grad(y[i])) @ diff[i])
    return out


def continuous_energy(traj, c, schedule):
    """E(t) = beta(phi_t(x) - phi_t(y)) + (c/2)|x - y|^2, phi_t = f + c/(2 beta)|.|^2."""
    problem = traj.system.problem
    t = traj.t
    beta = schedule.beta(t)
    if traj.y is not None and traj.system.order == 1 and traj.system.c == c:
        y = traj.y
    else:
        y = viscosity_curve(problem, schedule, c, t)
    x = traj.x
    df = value_difference(problem, x, y)
    dq = np.sum((x - y) * (x + y), axis=1)
    return beta * df + c / 2 * dq + c / 2 * np.sum((x - y) ** 2, axis=1)


def viscosity_curve(problem, schedule, c, t_grid):
    """y(t) = prox_{beta(t)/c f}(0) on ``t_grid``; shape (N, dim)."""
    if not c > 0:
        raise ParameterError("c must be positive")
    t = np.atleast_1d(np.asarray(t_grid, dtype=float))
    beta = schedule.beta(t)
    zero = np.zeros(problem.dim)
    return np.array([problem.prox(b / c, zero) for b in beta])
