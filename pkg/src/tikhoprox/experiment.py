"""Problem registry, typed experiment specs and their execution."""

import inspect
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dynamics import SYSTEMS, OdeSystem, integrate
from .prox_core import AbsBoxQuadProblem, LogBarrierQuadProblem, ParameterError, QuadraticProblem
from .schedules import parse_schedule
from .solvers import LaszloParams, SolverConfig, default_x0, run_laszlo, run_tikhonov_prox, run_vanilla_ppa
from .specfile import SpecParseError, parse_spec_file

__all__ = [
    "PROBLEMS",
    "ALGORITHMS",
    "make_problem",
    "quad_nd",
    "ExperimentSpec",
    "ExperimentResult",
    "build_spec",
    "load_spec",
    "run_experiment",
]


def quad_nd(n=10, condition=100.0, seed=0):
    """Convex quadratic 0.5 (x-b)^T Q (x-b) with eigenvalues geomspace(1/condition, 1, n).

    The eigenbasis comes from a QR factorisation of a Gaussian matrix drawn
    with ``seed``; b = linspace(-1, 1, n).  min f = 0 at b and L = 1.
    """
    n = int(n)
    if n < 1:
        raise ParameterError("n must be >= 1")
    if not condition >= 1:
        raise ParameterError("condition must be >= 1")
    rng = np.random.default_rng(int(seed))
    U, _ = np.linalg.qr(rng.standard_normal((n, n)))
    Q = U.T @ np.diag(np.geomspace(1.0 / condition, 1.0, n)) @ U
    Q = 0.5 * (Q + Q.T)
    prob = QuadraticProblem(Q, np.linspace(-1.0, 1.0, n))
    prob.name = "quad_nd"
    prob.lipschitz_grad = 1.0
    return prob


# id -> (constructor, {parameter: type})
PROBLEMS = {
    "l1box_quad": (AbsBoxQuadProblem, {"a": float, "v0": float, "flipped_prox": bool}),
    "logbarrier_quad": (LogBarrierQuadProblem, {"prox_tol": float}),
    "quad_nd": (quad_nd, {"n": int, "condition": float, "seed": int}),
}

ALGORITHMS = ("tikhoprox", "laszlo", "ppa")

_ALGO_KEYS = {
    "tikhoprox": {"schedule", "d", "max_iter", "x0", "k0", "stop_tol", "rho", "lambda_energy"},
    "laszlo": {"alpha", "q", "p", "c", "lam", "delta", "max_iter", "x0", "x1"},
    "ppa": {"lam", "max_iter", "x0", "stop_tol"},
}
_SYSTEM_KEYS = {"schedule", "c", "t0", "t_end", "dt", "x0", "v0", "method", "n_samples"}
_EXPERIMENT_KEYS = {"name", "seed"}


def make_problem(pid, **params):
    if pid not in PROBLEMS:
        raise ParameterError(f"unknown problem id {pid!r} (known: {', '.join(PROBLEMS)})")
    return PROBLEMS[pid][0](**params)


def _parse_bool(text):
    low = text.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int(text):
    v = float(text)
    if v != int(v):
        raise ValueError(f"not an integer: {text!r}")
    return int(v)


def _parse_vector(text):
    return np.array([float(s) for s in text.replace(";", ",").split(",") if s.strip()])


_CASTS = {float: float, int: _parse_int, bool: _parse_bool, "vector": _parse_vector, str: str}

_TYPES = {
    "d": float, "max_iter": int, "x0": "vector", "x1": "vector", "v0": "vector", "k0": int,
    "stop_tol": float, "rho": float, "lambda_energy": str, "alpha": float, "q": float,
    "p": float, "c": float, "lam": float, "delta": float, "schedule": str, "t0": float,
    "t_end": float, "dt": float, "method": str, "n_samples": int, "name": str, "seed": int,
}


@dataclass
class ExperimentSpec:
    name: str
    problem_id: str
    problem_params: dict
    kind: str  # "algorithm" or "system"
    method_id: str
    params: dict
    seed: int = 0
    source: str = "<spec>"
    base_dir: Path = field(default=None, repr=False)

    @property
    def problem_key(self):
        """(id, parameters with defaults filled in), for same-problem checks."""
        ctor = PROBLEMS[self.problem_id][0]
        params = {k: v.default for k, v in inspect.signature(ctor).parameters.items()
                  if v.default is not inspect.Parameter.empty}
        params.update(self.problem_params)
        return self.problem_id, tuple(sorted((k, float(v)) for k, v in params.items()))

    @property
    def horizon(self):
        return self.params.get("max_iter", self.params.get("t_end"))


def _cast(value, typ, source):
    try:
        return _CASTS[typ](value.text)
    except ValueError as exc:
        raise SpecParseError(str(exc), value.line, value.col, source) from None


def _unknown_keys(section, allowed, what, source):
    for key, value in section.items():
        if key not in allowed:
            raise SpecParseError(f"unknown key {key!r} for {what}", value.line, value.col, source)


def build_spec(sections, source="<spec>", base_dir=None):
    """Validate parsed sections and return a typed :class:`ExperimentSpec`."""
    for name in sections:
        if name not in ("problem", "algorithm", "system", "experiment"):
            raise SpecParseError(f"unknown section [{name}]", source=source)
    if "problem" not in sections:
        raise SpecParseError("missing [problem] section", source=source)
    prob = dict(sections["problem"])
    if "id" not in prob:
        raise SpecParseError("[problem] needs an id", source=source)
    pid_val = prob.pop("id")
    pid = pid_val.text
    if pid not in PROBLEMS:
        raise SpecParseError(f"unknown problem id {pid!r} (known: {', '.join(PROBLEMS)})",
                             pid_val.line, pid_val.col, source)
    ptypes = PROBLEMS[pid][1]
    _unknown_keys(prob, ptypes, f"problem {pid}", source)
    pparams = {k: _cast(v, ptypes[k], source) for k, v in prob.items()}

    has_algo, has_sys = "algorithm" in sections, "system" in sections
    if has_algo == has_sys:
        raise SpecParseError("exactly one of [algorithm] or [system] is required", source=source)
    kind = "algorithm" if has_algo else "system"
    sec = dict(sections[kind])
    if "id" not in sec:
        raise SpecParseError(f"[{kind}] needs an id", source=source)
    mid_val = sec.pop("id")
    mid = mid_val.text.lower()
    known = ALGORITHMS if kind == "algorithm" else SYSTEMS
    if mid not in known:
        raise SpecParseError(f"unknown {kind} id {mid_val.text!r} (known: {', '.join(known)})",
                             mid_val.line, mid_val.col, source)
    allowed = _ALGO_KEYS[mid] if kind == "algorithm" else _SYSTEM_KEYS
    _unknown_keys(sec, allowed, f"{kind} {mid}", source)
    params = {k: _cast(v, _TYPES[k], source) for k, v in sec.items()}

    # required keys and horizon
    need = ["max_iter"] if kind == "algorithm" else ["t_end"]
    if mid == "tikhoprox" or mid == "flow":
        need.append("schedule")
    if mid == "flow":
        need.append("c")
    for key in need:
        if key not in params:
            raise SpecParseError(f"[{kind}] {mid} needs {key!r}", source=source)
    horizon_key = need[0]
    if not params[horizon_key] > 0:
        v = sec[horizon_key]
        raise SpecParseError(f"{horizon_key} must be positive", v.line, v.col, source)
    if "schedule" in params:
        try:
            parse_schedule(params["schedule"], base_dir=base_dir)
        except ParameterError as exc:
            v = sec["schedule"]
            raise SpecParseError(str(exc), v.line, v.col, source) from None

    exp = dict(sections.get("experiment", {}))
    _unknown_keys(exp, _EXPERIMENT_KEYS, "[experiment]", source)
    name = exp["name"].text if "name" in exp else (Path(source).stem if source != "<spec>" else mid)
    seed = _cast(exp["seed"], int, source) if "seed" in exp else 0
    return ExperimentSpec(name=name, problem_id=pid, problem_params=pparams, kind=kind,
                          method_id=mid, params=params, seed=seed, source=source, base_dir=base_dir)


def load_spec(path):
    path = Path(path)
    if not path.is_file():
        raise SpecParseError("spec file not found", source=str(path))
    return build_spec(parse_spec_file(path), source=str(path), base_dir=path.parent)


@dataclass
class ExperimentResult:
    spec: ExperimentSpec
    problem: object
    trace: object = None       # RunTrace for algorithms
    trajectory: object = None  # Trajectory for systems
    wall_time: float = 0.0

    def summary(self):
        if self.trace is not None:
            out = self.trace.summary()
        else:
            traj = self.trajectory
            prob = self.problem
            x_end = traj.x[-1]
            out = {
                "system": self.spec.method_id,
                "problem": prob.name,
                "method": traj.method,
                "t_end": float(traj.t[-1]),
                "truncated": traj.truncated,
                "final_gap": float(traj.gap[-1]),
                "final_dist_xstar": float(np.linalg.norm(x_end - prob.xstar)) if prob.xstar is not None else None,
                "gap_reference": "fmin",
                "notes": list(traj.notes),
            }
        out["name"] = self.spec.name
        out["wall_time"] = self.wall_time
        return out


def run_experiment(spec):
    """Execute one spec; returns an :class:`ExperimentResult`."""
    problem = make_problem(spec.problem_id, **spec.problem_params)
    p = dict(spec.params)
    start = time.perf_counter()
    result = ExperimentResult(spec=spec, problem=problem)
    if spec.kind == "algorithm":
        x0 = p.get("x0")
        if x0 is None:
            x0 = default_x0(problem)
        if spec.method_id == "tikhoprox":
            sched = parse_schedule(p["schedule"], base_dir=spec.base_dir)
            lam_e = p.get("lambda_energy", "auto")
            cfg = SolverConfig(
                d=p.get("d", 0.5), schedule=sched, max_iter=p["max_iter"], x0=x0,
                k0=p.get("k0"), stop_tol=p.get("stop_tol", 0.0), rho=p.get("rho"),
                lambda_energy=lam_e if lam_e == "auto" else float(lam_e),
            )
            result.trace = run_tikhonov_prox(problem, cfg)
        elif spec.method_id == "laszlo":
            keys = ("alpha", "q", "p", "c", "lam", "delta")
            params = LaszloParams(**{k: p[k] for k in keys if k in p})
            x1 = p.get("x1", x0)
            result.trace = run_laszlo(problem, params, x0, x1, p["max_iter"])
        else:
            result.trace = run_vanilla_ppa(problem, p.get("lam", 1.0), x0, p["max_iter"],
                                           stop_tol=p.get("stop_tol", 0.0))
        result.trace.columns  # diagnostics are part of the experiment
    else:
        if spec.method_id == "flow":
            system = OdeSystem.flow(problem, parse_schedule(p["schedule"], base_dir=spec.base_dir), p["c"])
        else:
            system = OdeSystem.named(spec.method_id, problem)
        x0 = p.get("x0", np.zeros(problem.dim))
        v0 = p.get("v0", np.zeros(problem.dim) if system.order == 2 else None)
        result.trajectory = integrate(
            system, x0, v0=v0, t0=p.get("t0"), t_end=p["t_end"], dt=p.get("dt", 1e-3),
            method=p.get("method", "auto"), n_samples=p.get("n_samples", 1001),
        )
    result.wall_time = time.perf_counter() - start
    return result

