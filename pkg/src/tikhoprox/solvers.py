"""Discrete proximal algorithms and their per-iteration diagnostics.

The main scheme is

    x_{k+1} = prox_{beta_k f}(d * x_k),   0 < d < 1,

whose iterates track the viscosity points y_k = prox_{beta_k/(1-d) f}(0).
Two baselines are provided for comparison: an inertial Tikhonov scheme with
polynomial parameters and the fixed-step proximal point method.

The main loops only store iterates.  Viscosity points, energies and the
other diagnostics are computed on first access to :attr:`RunTrace.records`
so timings of the bare algorithms stay honest.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .prox_core import ParameterError, _positive
from .schedules import BetaSchedule

__all__ = [
    "SolverError",
    "SolverConfig",
    "LaszloParams",
    "IterateRecord",
    "RunTrace",
    "TRACE_COLUMNS",
    "run_tikhonov_prox",
    "run_laszlo",
    "run_vanilla_ppa",
    "viscosity_point",
    "phi",
    "discrete_energy",
    "resolve_lambda",
    "default_x0",
]

TRACE_COLUMNS = ("k", "beta_k", "f_val", "gap", "dist_xstar", "dist_y", "step", "subgrad_res", "E_k")


class SolverError(RuntimeError):
    """Failure inside an iteration; ``k`` is the iteration index."""

    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


def default_x0(problem):
    """All-ones vector moved inside the domain of ``problem``."""
    return problem.project_inside(np.ones(problem.dim))


@dataclass
class SolverConfig:
    """Parameters of :func:`run_tikhonov_prox`.

    ``rho`` and ``lambda_energy`` only affect the energy diagnostic.
    ``rho=None`` means (1 - d)/2.  ``k0=None`` takes the schedule's k0.
    """

    d: float
    schedule: BetaSchedule
    max_iter: int
    x0: np.ndarray = None
    k0: int = None
    stop_tol: float = 0.0
    rho: float = None
    lambda_energy: object = "auto"

    def __post_init__(self):
        if not 0 < self.d < 1:
            raise ParameterError("d must lie in (0, 1)")
        if self.rho is None:
            self.rho = (1 - self.d) / 2
        if not 0 < self.rho < 1 - self.d:
            raise ParameterError("rho must lie in (0, 1 - d)")
        if int(self.max_iter) < 1:
            raise ParameterError("max_iter must be >= 1")
        self.max_iter = int(self.max_iter)
        if self.k0 is None:
            self.k0 = self.schedule.k0
        if self.k0 < self.schedule.k0:
            raise ParameterError("k0 precedes the schedule start")
        if self.stop_tol < 0:
            raise ParameterError("stop_tol must be >= 0")
        if self.lambda_energy != "auto":
            _positive("lambda_energy", self.lambda_energy)

    @property
    def mu(self):
        return self.rho / (1 - self.rho)

    def snapshot(self):
        return {
            "algorithm": "tikhoprox",
            "d": self.d,
            "schedule": self.schedule.spec,
            "k0": self.k0,
            "max_iter": self.max_iter,
            "stop_tol": self.stop_tol,
            "rho": self.rho,
            "lambda_energy": self.lambda_energy,
        }


@dataclass
class LaszloParams:
    alpha: float = 2.0
    q: float = 0.8
    p: float = 2.0
    c: float = 5.0
    lam: float = 5.0
    delta: float = 2.0

    def __post_init__(self):
        _positive("alpha", self.alpha)
        _positive("c", self.c)
        _positive("lam", self.lam)
        if not 0 < self.q < 1:
            raise ParameterError("q must lie in (0, 1)")
        if self.p > 2:
            raise ParameterError("p must be <= 2")


@dataclass
class IterateRecord:
    k: int
    x_k: np.ndarray
    beta_k: float
    f_val: float
    gap: float
    dist_xstar: float
    y_k: np.ndarray
    dist_y: float
    step: float
    subgrad_res: float
    E_k: float


@dataclass
class RunTrace:
    """Iterates of one run plus lazily computed diagnostics.

    ``xs[i]`` is x_{k0+i}; there is one more iterate than records because
    step and residual at k need x_{k+1}.  ``z[i]`` is the implied
    subgradient at x_{k0+i+1}.
    """

    algorithm: str
    problem: object
    config: dict
    k0: int
    xs: np.ndarray
    betas: np.ndarray
    z: np.ndarray
    terminated_by: str
    wall_time: float
    schedule: BetaSchedule = None
    fmin_ref: float = None
    _records: list = field(default=None, repr=False)
    _columns: dict = field(default=None, repr=False)

    @property
    def ks(self):
        return np.arange(self.k0, self.k0 + len(self.betas))

    @property
    def x_final(self):
        return self.xs[-1]

    @property
    def fmin(self):
        return self.problem.fmin if self.problem.fmin is not None else self.fmin_ref

    @property
    def viscosity_points(self):
        self._ensure()
        return self._ys

    @property
    def columns(self):
        """Diagnostics as a dict of arrays in CSV column order."""
        self._ensure()
        return self._columns

    @property
    def records(self):
        if self._records is None:
            cols = self.columns
            ys = self._ys
            self._records = [
                IterateRecord(
                    k=int(cols["k"][i]), x_k=self.xs[i], beta_k=cols["beta_k"][i],
                    f_val=cols["f_val"][i], gap=cols["gap"][i], dist_xstar=cols["dist_xstar"][i],
                    y_k=None if ys is None else ys[i], dist_y=cols["dist_y"][i],
                    step=cols["step"][i], subgrad_res=cols["subgrad_res"][i], E_k=cols["E_k"][i],
                )
                for i in range(len(self.betas))
            ]
        return self._records

    def _ensure(self):
        if self._columns is not None:
            return
        n = len(self.betas)
        X = self.xs[:n]
        f_val = np.asarray(self.problem.value(X), dtype=float).reshape(n)
        fmin = self.fmin
        gap = f_val - fmin if fmin is not None else np.full(n, np.nan)
        xstar = self.problem.xstar
        dist_xstar = (np.linalg.norm(X - xstar, axis=1) if xstar is not None
                      else np.full(n, np.nan))
        step = np.linalg.norm(self.xs[1:] - self.xs[:-1], axis=1)
        subgrad = np.linalg.norm(self.z, axis=1)
        if self.algorithm == "tikhoprox":
            d = self.config["d"]
            ys = np.array([viscosity_point(self.problem, b, d) for b in self.betas])
            dist_y = np.linalg.norm(X - ys, axis=1)
            lam = resolve_lambda(self.config["lambda_energy"], d, self.config["rho"], self.betas)
            E = _energy(self.problem, X, ys, self.betas, d, lam)
            self.config["lambda_energy_resolved"] = lam
        else:
            ys = None
            dist_y = np.full(n, np.nan)
            E = np.full(n, np.nan)
        self._ys = ys
        self._columns = {
            "k": self.ks,
            "beta_k": self.betas,
            "f_val": f_val,
            "gap": gap,
            "dist_xstar": dist_xstar,
            "dist_y": dist_y,
            "step": step,
            "subgrad_res": subgrad,
            "E_k": E,
        }

    def summary(self):
        cols = self.columns
        last = len(self.betas) - 1
        xstar = self.problem.xstar
        fmin = self.fmin
        return {
            "algorithm": self.algorithm,
            "problem": self.problem.name,
            "iterations": int(len(self.betas)),
            "terminated_by": self.terminated_by,
            "final_k": int(cols["k"][last] + 1),
            "final_gap": (float(self.problem.value(self.x_final)) - fmin) if fmin is not None else None,
            "final_dist_xstar": float(np.linalg.norm(self.x_final - xstar)) if xstar is not None else None,
            "gap_reference": "fmin" if self.problem.fmin is not None else "best value seen in batch",
            "wall_time": self.wall_time,
        }


def viscosity_point(problem, beta, d):
    """Minimiser of f + ((1-d)/(2 beta)) |.|^2, i.e. prox_{beta/(1-d) f}(0)."""
    _positive("beta", beta)
    if not 0 < d < 1:
        raise ParameterError("d must lie in (0, 1)")
    return np.asarray(problem.prox(beta / (1 - d), np.zeros(problem.dim)), dtype=float)


def phi(problem, beta, d, x):
    """Regularised objective f(x) + ((1-d)/(2 beta)) |x|^2."""
    x = np.asarray(x, dtype=float)
    return np.asarray(problem.value(x)) + (1 - d) / (2 * beta) * np.sum(x * x, axis=-1)


def resolve_lambda(lambda_energy, d, rho, betas):
    """Energy weight; ``"auto"`` gives d((1+mu) max beta_{k+1}/beta_k - 1) + 0.1."""
    if lambda_energy != "auto":
        return float(lambda_energy)
    betas = np.asarray(betas, dtype=float)
    mu = rho / (1 - rho)
    ratio = np.max(betas[1:] / betas[:-1]) if betas.size > 1 else 1.0
    return max(d * ((1 + mu) * ratio - 1) + 0.1, 0.1)


def _energy(problem, X, ys, betas, d, lam):
    # phi_k(x_k) - phi_k(y_k) expanded so the f parts are differenced first
    df = np.asarray(problem.value(X), dtype=float) - np.asarray(problem.value(ys), dtype=float)
    dq = np.sum(X * X, axis=1) - np.sum(ys * ys, axis=1)
    E = betas * df + (1 - d) / 2 * dq
    E[1:] += lam / 2 * np.sum((X[1:] - ys[:-1]) ** 2, axis=1)
    E[0] = np.nan
    return E


def discrete_energy(problem, records, cfg):
    """E_k = beta_k (phi_k(x_k) - phi_k(y_k)) + (lam/2) |x_k - y_{k-1}|^2.

    ``records`` is a sequence of :class:`IterateRecord` for consecutive k.
    The first entry is nan because y_{k-1} is unavailable there.
    """
    X = np.array([r.x_k for r in records], dtype=float)
    ys = np.array([r.y_k for r in records], dtype=float)
    betas = np.array([r.beta_k for r in records], dtype=float)
    lam = resolve_lambda(cfg.lambda_energy, cfg.d, cfg.rho, betas)
    return _energy(problem, X, ys, betas, cfg.d, lam)


def _prox_step(problem, lam, point, k):
    try:
        out = np.asarray(problem.prox(lam, point), dtype=float)
    except (ArithmeticError, RuntimeError, ValueError) as exc:
        raise SolverError(f"prox failed at iteration k={k}: {exc}", k=k) from exc
    if not np.all(np.isfinite(out)):
        raise SolverError(f"prox returned a non-finite point at iteration k={k}", k=k)
    return out


def _beta_checked(schedule, k):
    b = float(schedule.beta_k(k))
    if not np.isfinite(b):
        raise SolverError(f"beta_k overflows at k={k}; shorten the horizon", k=k)
    return b


def run_tikhonov_prox(problem, cfg):
    """Iterate x_{k+1} = prox_{beta_k f}(d x_k) from k = cfg.k0."""
    x = default_x0(problem) if cfg.x0 is None else np.array(cfg.x0, dtype=float).reshape(problem.dim)
    d = cfg.d
    xs = [x]
    betas = []
    zs = []
    terminated = "max_iter"
    start = time.perf_counter()
    for k in range(cfg.k0, cfg.k0 + cfg.max_iter):
        b = _beta_checked(cfg.schedule, k)
        x_new = _prox_step(problem, b, d * x, k)
        betas.append(b)
        zs.append((d * x - x_new) / b)
        xs.append(x_new)
        if cfg.stop_tol > 0 and np.linalg.norm(x_new - x) <= cfg.stop_tol:
            terminated = "stop_tol"
            break
        x = x_new
    wall = time.perf_counter() - start
    return RunTrace(
        algorithm="tikhoprox", problem=problem, config=cfg.snapshot(), k0=cfg.k0,
        xs=np.array(xs), betas=np.array(betas), z=np.array(zs),
        terminated_by=terminated, wall_time=wall, schedule=cfg.schedule,
    )


def run_laszlo(problem, params, x0, x1, max_iter):
    """Inertial proximal scheme with vanishing Tikhonov term.

    For k = 1, 2, ...::

        u_k     = x_k + (1 - alpha/k**q)(x_k - x_{k-1})
        x_{k+1} = prox_{lam_k f}(u_k - (c/k**p) x_k),   lam_k = lam * k**delta
    """
    if not isinstance(params, LaszloParams):
        params = LaszloParams(**params)
    if int(max_iter) < 1:
        raise ParameterError("max_iter must be >= 1")
    x_prev = np.array(x0, dtype=float).reshape(problem.dim)
    x = np.array(x1, dtype=float).reshape(problem.dim)
    xs = [x]
    lams = []
    zs = []
    start = time.perf_counter()
    for k in range(1, int(max_iter) + 1):
        lam_k = params.lam * float(k) ** params.delta
        u = x + (1 - params.alpha / k ** params.q) * (x - x_prev)
        w = u - (params.c / k ** params.p) * x
        x_new = _prox_step(problem, lam_k, w, k)
        lams.append(lam_k)
        zs.append((w - x_new) / lam_k)
        xs.append(x_new)
        x_prev, x = x, x_new
    wall = time.perf_counter() - start
    config = {"algorithm": "laszlo", **params.__dict__, "max_iter": int(max_iter)}
    return RunTrace(
        algorithm="laszlo", problem=problem, config=config, k0=1,
        xs=np.array(xs), betas=np.array(lams), z=np.array(zs),
        terminated_by="max_iter", wall_time=wall,
    )


def run_vanilla_ppa(problem, lam, x0, max_iter, stop_tol=0.0):
    """Fixed-parameter proximal point method x_{k+1} = prox_{lam f}(x_k), k from 0."""
    _positive("lam", lam)
    if int(max_iter) < 1:
        raise ParameterError("max_iter must be >= 1")
    x = np.array(x0, dtype=float).reshape(problem.dim)
    xs = [x]
    zs = []
    terminated = "max_iter"
    start = time.perf_counter()
    for k in range(int(max_iter)):
        x_new = _prox_step(problem, lam, x, k)
        zs.append((x - x_new) / lam)
        xs.append(x_new)
        if stop_tol > 0 and np.linalg.norm(x_new - x) <= stop_tol:
            terminated = "stop_tol"
            break
        x = x_new
    wall = time.perf_counter() - start
    n = len(zs)
    config = {"algorithm": "ppa", "lam": float(lam), "max_iter": int(max_iter), "stop_tol": stop_tol}
    return RunTrace(
        algorithm="ppa", problem=problem, config=config, k0=0,
        xs=np.array(xs), betas=np.full(n, float(lam)), z=np.array(zs),
        terminated_by=terminated, wall_time=wall,
    )
