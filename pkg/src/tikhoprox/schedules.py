"""Rescaling schedules beta(t) / beta_k and checks of their growth hypotheses.

Two closed-form families are supported,

* ``polylog``:  beta(t) = s * t**m * ln(t)**p
* ``exppow``:   beta(t) = s * t**m * exp(gamma * t**r),  0 < r <= 1

plus ``table`` schedules given by explicit values beta_{k0}, beta_{k0+1}, ...
Discrete ratios are evaluated in log space so that exponential schedules can
be examined far beyond the range where beta itself overflows.
"""

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .prox_core import DomainError, ParameterError

__all__ = [
    "BetaSchedule",
    "HypothesisReport",
    "parse_schedule",
    "check_h_beta",
    "check_h_beta_k",
    "check_schedule",
]

KINDS = ("polylog", "exppow", "table")


@dataclass(frozen=True)
class BetaSchedule:
    kind: str
    m: float = 0.0
    p: float = 0.0
    gamma: float = 0.0
    r: float = 1.0
    scale: float = 1.0
    values: tuple = ()
    t0: float = 2.0
    k0: int = 2
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown schedule kind {self.kind!r}")
        if not self.scale > 0:
            raise ParameterError("scale must be positive")
        if self.k0 < 2 and self.kind != "table":
            raise ParameterError("k0 must be at least 2 so that ln k > 0")
        if self.kind == "polylog":
            if self.m < 0 or self.p < 0 or (self.m == 0 and self.p == 0):
                raise ParameterError("polylog needs m, p >= 0 and (m, p) != (0, 0)")
            if self.t0 <= 1:
                raise ParameterError("polylog needs t0 > 1")
        elif self.kind == "exppow":
            if self.m < 0 or not self.gamma > 0 or not 0 < self.r <= 1:
                raise ParameterError("exppow needs m >= 0, gamma > 0, 0 < r <= 1")
            if not self.t0 > 0:
                raise ParameterError("exppow needs t0 > 0")
        else:
            vals = np.asarray(self.values, dtype=float)
            if vals.size < 2:
                raise ParameterError("table schedule needs at least two values")
            if np.any(~np.isfinite(vals)) or np.any(vals <= 0):
                raise ParameterError("table values must be finite and positive")

    # constructors -------------------------------------------------------

    @classmethod
    def polylog(cls, m, p, scale=1.0, t0=2.0, k0=2):
        return cls("polylog", m=float(m), p=float(p), scale=float(scale), t0=float(t0), k0=int(k0))

    @classmethod
    def exppow(cls, m, gamma, r, scale=1.0, t0=2.0, k0=2):
        return cls("exppow", m=float(m), gamma=float(gamma), r=float(r),
                   scale=float(scale), t0=float(t0), k0=int(k0))

    @classmethod
    def table(cls, values, k0=2):
        return cls("table", values=tuple(float(v) for v in values), t0=float(k0), k0=int(k0))

    @property
    def spec(self):
        """Canonical spec string, parseable by :func:`parse_schedule`."""
        if self.label:
            return self.label
        extra = "" if self.scale == 1 else f",scale={self.scale:g}"
        if self.kind == "polylog":
            return f"polylog:m={self.m:g},q={self.p:g}{extra}"
        if self.kind == "exppow":
            return f"exppow:m={self.m:g},gamma={self.gamma:g},r={self.r:g}{extra}"
        return f"table:<{len(self.values)} values>"

    @property
    def k_last(self):
        """Largest k for which beta_k is defined (inf for closed forms)."""
        if self.kind == "table":
            return self.k0 + len(self.values) - 1
        return math.inf

    # continuous view ----------------------------------------------------

    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t0):
            raise DomainError(f"t must be >= t0={self.t0}")
        return t

    def _table_segments(self, t):
        vals = np.asarray(self.values)
        kk = self.k0 + np.arange(vals.size)
        slope = np.diff(vals)
        idx = np.clip(np.floor(t - self.k0).astype(int), 0, vals.size - 2)
        beyond = t >= kk[-1]
        return vals, kk, slope, idx, beyond

    def beta(self, t):
        t = self._check_t(t)
        s = self.scale
        if self.kind == "polylog":
            return s * t ** self.m * np.log(t) ** self.p
        if self.kind == "exppow":
            with np.errstate(over="ignore"):
                return s * t ** self.m * np.exp(self.gamma * t ** self.r)
        vals, kk, slope, idx, beyond = self._table_segments(t)
        out = vals[idx] + slope[idx] * (t - kk[idx])
        return np.where(beyond, vals[-1], out)

    beta_at = beta

    def beta_dot(self, t):
        t = self._check_t(t)
        s, m = self.scale, self.m
        if self.kind == "polylog":
            p = self.p
            lt = np.log(t)
            return s * t ** (m - 1) * lt ** (p - 1) * (m * lt + p)
        if self.kind == "exppow":
            g, r = self.gamma, self.r
            with np.errstate(over="ignore"):
                return s * t ** (m - 1) * np.exp(g * t ** r) * (m + r * g * t ** r)
        vals, kk, slope, idx, beyond = self._table_segments(t)
        return np.where(beyond, 0.0, slope[idx])

    def beta_ddot(self, t):
        t = self._check_t(t)
        s, m = self.scale, self.m
        if self.kind == "polylog":
            p = self.p
            lt = np.log(t)
            poly = m * (m - 1) * lt ** 2 + (2 * m - 1) * p * lt + p * (p - 1)
            return s * t ** (m - 2) * lt ** (p - 2) * poly
        if self.kind == "exppow":
            g, r = self.gamma, self.r
            tr = t ** r
            poly = m * (m - 1) + (2 * m + r - 1) * r * g * tr + (r * g) ** 2 * tr ** 2
            with np.errstate(over="ignore"):
                return s * t ** (m - 2) * np.exp(g * tr) * poly
        return np.zeros_like(t)

    def dot_over_beta(self, t):
        """beta'(t) / beta(t), overflow-free for the closed forms."""
        t = self._check_t(t)
        if self.kind == "polylog":
            return self.m / t + self.p / (t * np.log(t))
        if self.kind == "exppow":
            return self.m / t + self.r * self.gamma * t ** (self.r - 1)
        return self.beta_dot(t) / self.beta(t)

    def ddot_over_dot(self, t):
        """beta''(t) / beta'(t); nan where beta' vanishes."""
        t = self._check_t(t)
        m = self.m
        if self.kind == "polylog":
            p = self.p
            lt = np.log(t)
            poly = m * (m - 1) * lt ** 2 + (2 * m - 1) * p * lt + p * (p - 1)
            return poly / (t * lt * (m * lt + p))
        if self.kind == "exppow":
            g, r = self.gamma, self.r
            tr = t ** r
            poly = m * (m - 1) + (2 * m + r - 1) * r * g * tr + (r * g) ** 2 * tr ** 2
            return poly / (t * (m + r * g * tr))
        bd = self.beta_dot(t)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(bd != 0, self.beta_ddot(t) / bd, np.nan)

    # discrete view ------------------------------------------------------

    def _check_k(self, k):
        k = np.asarray(k)
        if np.any(k < self.k0):
            raise DomainError(f"k must be >= k0={self.k0}")
        if np.any(k > self.k_last):
            raise DomainError(f"k must be <= {self.k_last} for this table")
        return k

    def beta_k(self, k):
        k = self._check_k(k)
        if self.kind == "table":
            return np.asarray(self.values)[np.asarray(k, dtype=int) - self.k0]
        # bit-identical to the continuous view by construction
        return self.beta(np.asarray(k, dtype=float))

    def beta_dot_k(self, k):
        k = np.asarray(k)
        return self.beta_k(k + 1) - self.beta_k(k)

    def log_ratio_k(self, k):
        """ln(beta_{k+1} / beta_k), computed without forming beta."""
        k = self._check_k(k)
        kf = np.asarray(k, dtype=float)
        if self.kind == "polylog":
            l1 = np.log1p(1.0 / kf)
            return self.m * l1 + self.p * np.log1p(l1 / np.log(kf))
        if self.kind == "exppow":
            l1 = np.log1p(1.0 / kf)
            return self.m * l1 + self.gamma * kf ** self.r * np.expm1(self.r * l1)
        self._check_k(np.asarray(k) + 1)
        vals = np.asarray(self.values)
        i = np.asarray(k, dtype=int) - self.k0
        return np.log(vals[i + 1] / vals[i])

    def ratio_k(self, k):
        """beta_{k+1} / beta_k."""
        return np.exp(self.log_ratio_k(k))

    def dot_ratio_k(self, k):
        """betadot_{k+1} / betadot_k; nan where betadot_k = 0."""
        k = np.asarray(k)
        L0 = self.log_ratio_k(k)
        L1 = self.log_ratio_k(k + 1)
        e0 = np.expm1(L0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(e0 != 0, np.exp(L0) * np.expm1(L1) / e0, np.nan)


def _parse_number(text, key):
    try:
        return float(text)
    except ValueError:
        raise ParameterError(f"schedule parameter {key!r} is not a number: {text!r}") from None


def parse_schedule(spec, base_dir=None):
    """Parse ``polylog:m=3,q=3``, ``exppow:m=3,gamma=2,r=0.8`` or ``table:<path>``.

    Optional keys for the closed forms: ``scale``, ``t0``, ``k0``.  The
    log power may be written ``p`` or ``q``.
    """
    if not isinstance(spec, str) or ":" not in spec:
        raise ParameterError(f"malformed schedule spec {spec!r}")
    kind, _, rest = spec.partition(":")
    kind = kind.strip().lower()
    if kind == "table":
        path = Path(rest.strip())
        if base_dir is not None and not path.is_absolute():
            path = Path(base_dir) / path
        if not rest.strip() or not path.is_file():
            raise ParameterError(f"table schedule file not found: {rest.strip()!r}")
        lines = [ln.strip() for ln in path.read_text().splitlines()]
        values = [_parse_number(ln, "table") for ln in lines if ln and not ln.startswith("#")]
        return BetaSchedule.table(values)
    params = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, eq, val = item.partition("=")
        if not eq:
            raise ParameterError(f"malformed schedule parameter {item!r}")
        params[key.strip().lower()] = _parse_number(val.strip(), key.strip())
    if "q" in params:
        params["p"] = params.pop("q")
    common = {k: params.pop(k) for k in ("scale", "t0", "k0") if k in params}
    if "k0" in common:
        common["k0"] = int(common["k0"])
    allowed = {"polylog": {"m", "p"}, "exppow": {"m", "gamma", "r"}}
    if kind not in allowed:
        raise ParameterError(f"unknown schedule kind {kind!r}")
    unknown = set(params) - allowed[kind]
    if unknown:
        raise ParameterError(f"unknown {kind} parameter(s): {', '.join(sorted(unknown))}")
    if kind == "polylog":
        return BetaSchedule.polylog(params.get("m", 0.0), params.get("p", 0.0), **common)
    if "gamma" not in params:
        raise ParameterError("exppow needs gamma")
    return BetaSchedule.exppow(params.get("m", 0.0), params["gamma"], params.get("r", 1.0), **common)


@dataclass
class HypothesisReport:
    """Outcome of the growth-hypothesis checks for one schedule.

    Continuous fields are ``None`` when only the discrete check ran and
    vice versa.  ``h_beta_iii_sup`` is the supremum over the grid tail of
    (1 + b'/b) / (mu + b''/b' - b'/b).
    """

    schedule: str
    c: float = None
    mu: float = None
    t_range: tuple = None
    k_range: tuple = None
    h_beta_i_ok: bool = None
    h_beta_ii_ok: bool = None
    h_beta_ii_margin: float = None
    h_beta_iii_sup: float = None
    h_beta_iii_ok: bool = None
    h_beta_iii_excluded: int = 0
    h_beta_k_i_ok: bool = None
    ell_beta: float = None
    ell_betadot: float = None
    ell_consistent: bool = None
    strong_convergence_regime: bool = None
    notes: list = field(default_factory=list)

    @property
    def passed(self):
        flags = [self.h_beta_i_ok, self.h_beta_ii_ok, self.h_beta_iii_ok,
                 self.h_beta_k_i_ok, self.ell_consistent]
        checked = [f for f in flags if f is not None]
        return bool(checked) and all(checked)

    def to_dict(self):
        d = asdict(self)
        d["passed"] = self.passed
        return d

    def to_json(self):
        return json.dumps(self.to_dict(), default=_json_default)


def _json_default(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    raise TypeError(type(obj))


III_BOUND = 1e6
DENOM_GUARD = 1e-14


def check_h_beta(schedule, c, mu, t_grid, tail_fraction=0.5, report=None):
    """Check the continuous hypotheses on the tail of ``t_grid``.

    (i)   beta > 0 and beta' != 0;
    (ii)  max(beta'/beta, 1) <= c - mu;
    (iii) the quotient (1 + b'/b) / (mu + b''/b' - b'/b) stays bounded.

    All three are limit properties, so they are judged on the last
    ``tail_fraction`` of the grid.  Grid points where the (iii)
    denominator is below 1e-14 in magnitude are excluded and counted.
    """
    if not mu > 0:
        raise ParameterError("mu must be positive")
    if not c > 0:
        raise ParameterError("c must be positive")
    t = np.asarray(t_grid, dtype=float)
    if t.size < 2:
        raise ParameterError("t_grid needs at least two points")
    rep = report or HypothesisReport(schedule=schedule.spec)
    rep.c, rep.mu = float(c), float(mu)
    tail = t[int(np.floor((1 - tail_fraction) * t.size)):]
    rep.t_range = (float(tail[0]), float(tail[-1]))

    bdot = schedule.beta_dot(tail)
    with np.errstate(over="ignore"):
        bval = schedule.beta(tail)
    positive = np.all(bval > 0)
    nonzero = np.all(bdot != 0)
    rep.h_beta_i_ok = bool(positive and nonzero)
    if not nonzero:
        rep.notes.append("beta' vanishes on the tail")

    q1 = schedule.dot_over_beta(tail)
    lhs = np.maximum(q1, 1.0)
    margin = (c - mu) - lhs
    rep.h_beta_ii_margin = float(np.min(margin))
    rep.h_beta_ii_ok = bool(rep.h_beta_ii_margin >= -1e-12 * max(1.0, c))

    q2 = schedule.ddot_over_dot(tail)
    denom = mu + q2 - q1
    usable = np.isfinite(denom) & (np.abs(denom) >= DENOM_GUARD)
    rep.h_beta_iii_excluded = int(np.count_nonzero(~usable))
    if not np.any(usable):
        rep.h_beta_iii_sup = math.inf
        rep.h_beta_iii_ok = False
        rep.notes.append("(iii) quotient undefined on the whole tail")
        return rep
    quotient = (1.0 + q1[usable]) / denom[usable]
    rep.h_beta_iii_sup = float(np.max(quotient))
    # a sign change of the denominator on the tail means the quotient is unbounded
    rep.h_beta_iii_ok = bool(np.all(denom[usable] > 0) and rep.h_beta_iii_sup <= III_BOUND)
    return rep


def check_h_beta_k(schedule, k_max, report=None, n_probe=400):
    """Check the discrete hypothesis and estimate the ratio limit ell.

    ``ell_beta`` and ``ell_betadot`` are averages of beta_{k+1}/beta_k and
    betadot_{k+1}/betadot_k over the ten largest admissible k <= k_max.
    Positivity of betadot_k is probed on a log-spaced sample of k (every
    k for tables).
    """
    k0 = schedule.k0
    k_top = int(min(k_max, schedule.k_last - 2))
    if k_top < k0 + 10:
        raise ParameterError(f"k_max must be >= k0 + 10 (usable k_max here: {k_top})")
    rep = report or HypothesisReport(schedule=schedule.spec)
    rep.k_range = (k0, k_top)
    if schedule.kind == "table":
        probe = np.arange(k0, k_top + 1)
    else:
        probe = np.unique(np.round(np.geomspace(k0, k_top, n_probe)).astype(np.int64))
    rep.h_beta_k_i_ok = bool(np.all(schedule.log_ratio_k(probe) > 0))
    if not rep.h_beta_k_i_ok:
        rep.notes.append("betadot_k vanishes or is negative for some k")

    ks = np.arange(k_top - 9, k_top + 1, dtype=np.int64)
    rep.ell_beta = float(np.mean(schedule.ratio_k(ks)))
    rep.ell_betadot = float(np.mean(schedule.dot_ratio_k(ks)))
    ok = np.isfinite(rep.ell_betadot) and rep.ell_beta > 0 and rep.ell_betadot > 0
    rep.ell_consistent = bool(ok and abs(rep.ell_beta - rep.ell_betadot) <= 1e-2 * max(1.0, rep.ell_beta))
    rep.strong_convergence_regime = bool(
        ok and abs(rep.ell_beta - 1) <= 1e-3 and abs(rep.ell_betadot - 1) <= 1e-3
    )
    return rep


def check_schedule(schedule, c=3.0, mu=1.0, horizon=1e12, n_grid=400):
    """Run the continuous and discrete checks together (used by the CLI)."""
    rep = HypothesisReport(schedule=schedule.spec)
    if schedule.kind == "table":
        t_end = schedule.k_last
        grid = np.linspace(schedule.t0, t_end, max(n_grid, 2))
    else:
        t_end = max(float(horizon), schedule.t0 * 10)
        grid = np.geomspace(schedule.t0, t_end, n_grid)
    check_h_beta(schedule, c, mu, grid, report=rep)
    check_h_beta_k(schedule, horizon, report=rep)
    return rep
