import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tikhoprox.prox_core import DomainError, ParameterError
from tikhoprox.schedules import (
    BetaSchedule,
    HypothesisReport,
    check_h_beta,
    check_h_beta_k,
    check_schedule,
    parse_schedule,
)

SCHEDULES = [
    BetaSchedule.polylog(3, 3),
    BetaSchedule.polylog(2, 2, scale=2),
    BetaSchedule.polylog(0, 1),
    BetaSchedule.polylog(1.5, 0),
    BetaSchedule.exppow(3, 2, 0.8),
    BetaSchedule.exppow(0, 2, 1),
    BetaSchedule.exppow(0, 1, 0.5),
    BetaSchedule.exppow(2, 2, 0.9, scale=2),
]


def test_closed_form_examples():
    lin = BetaSchedule.polylog(1, 0)
    assert (lin.beta(5.0), lin.beta_dot(5.0), lin.beta_ddot(5.0)) == (5.0, 1.0, 0.0)
    pl = BetaSchedule.polylog(2, 2)
    assert pl.beta(math.e) == pytest.approx(math.e ** 2, rel=1e-15)
    assert pl.beta_dot(math.e) == pytest.approx(4 * math.e, rel=1e-15)
    ex = BetaSchedule.exppow(0, 2, 1, t0=1)
    assert ex.beta(1.0) == pytest.approx(math.e ** 2, rel=1e-15)
    assert ex.beta_dot(1.0) == pytest.approx(2 * math.e ** 2, rel=1e-15)


def test_discrete_examples():
    assert BetaSchedule.polylog(0, 1).beta_k(7) == pytest.approx(math.log(7), rel=1e-15)
    assert BetaSchedule.exppow(0, 1, 1).beta_dot_k(3) == pytest.approx(math.e ** 4 - math.e ** 3, rel=1e-14)


@pytest.mark.parametrize("s", SCHEDULES, ids=lambda s: s.spec)
def test_beta_dot_k_is_a_difference_and_matches_continuous(s):
    ks = np.arange(2, 60)
    assert np.array_equal(s.beta_dot_k(ks), s.beta_k(ks + 1) - s.beta_k(ks))
    assert np.array_equal(s.beta_k(ks), s.beta(ks.astype(float)))


@pytest.mark.parametrize("s", SCHEDULES, ids=lambda s: s.spec)
def test_derivatives_match_finite_differences(s):
    t = np.linspace(2.5, 40.0, 50)
    h = 1e-5 * t
    fd1 = (s.beta(t + h) - s.beta(t - h)) / (2 * h)
    fd2 = (s.beta_dot(t + h) - s.beta_dot(t - h)) / (2 * h)
    assert np.max(np.abs(fd1 - s.beta_dot(t)) / np.abs(s.beta_dot(t))) <= 1e-6
    scale2 = np.maximum(np.abs(s.beta_ddot(t)), np.abs(s.beta_dot(t)) * 1e-3)
    assert np.max(np.abs(fd2 - s.beta_ddot(t)) / scale2) <= 1e-6


@pytest.mark.parametrize("s", SCHEDULES, ids=lambda s: s.spec)
def test_ratios_consistent_with_direct_evaluation(s):
    t = np.linspace(3.0, 60.0, 40)
    assert np.allclose(s.dot_over_beta(t), s.beta_dot(t) / s.beta(t), rtol=1e-12)
    dd = s.beta_ddot(t) / s.beta_dot(t)
    assert np.allclose(s.ddot_over_dot(t), dd, rtol=1e-10, atol=1e-14)
    ks = np.arange(2, 80)
    assert np.allclose(s.ratio_k(ks), s.beta_k(ks + 1) / s.beta_k(ks), rtol=1e-12)
    direct = s.beta_dot_k(ks + 1) / s.beta_dot_k(ks)
    assert np.allclose(s.dot_ratio_k(ks), direct, rtol=1e-9)


# exponents below 1e-3 make the increment underflow, which says nothing about the schedule
EXPONENT = st.one_of(st.just(0.0), st.floats(1e-3, 4))


@settings(max_examples=40, deadline=None)
@given(m=EXPONENT, p=EXPONENT, k=st.integers(2, 10 ** 6))
def test_polylog_strictly_increasing(m, p, k):
    if m == 0 and p == 0:
        return
    s = BetaSchedule.polylog(m, p)
    assert s.log_ratio_k(k) > 0


@settings(max_examples=40, deadline=None)
@given(m=st.floats(0, 4), g=st.floats(0.1, 3), r=st.floats(0.05, 1), k=st.integers(2, 10 ** 9))
def test_exppow_strictly_increasing(m, g, r, k):
    assert BetaSchedule.exppow(m, g, r).log_ratio_k(k) > 0


def test_polylog_ratio_expansion_residual_decays():
    s = BetaSchedule.polylog(3, 3)
    ks = np.array([1e2, 1e3, 1e4, 1e5, 1e6])
    resid = s.ratio_k(ks) - (1 + 3 / ks + 3 / (ks * np.log(ks)))
    scaled = np.abs(resid * ks * np.log(ks))
    assert np.all(np.diff(scaled) < 0)
    assert scaled[-1] < 0.1 * scaled[0]


def test_domain_and_parameter_errors():
    s = BetaSchedule.polylog(3, 3)
    with pytest.raises(DomainError):
        s.beta(1.5)
    with pytest.raises(DomainError):
        s.beta_k(1)
    with pytest.raises(ParameterError):
        BetaSchedule.polylog(0, 0)
    with pytest.raises(ParameterError):
        BetaSchedule.exppow(1, 1, 1.5)
    with pytest.raises(ParameterError):
        BetaSchedule.table([1.0])
    with pytest.raises(ParameterError):
        BetaSchedule.table([1.0, -1.0])


def test_parse_schedule_strings(tmp_path):
    s = parse_schedule("polylog:m=3,q=3")
    assert (s.kind, s.m, s.p) == ("polylog", 3.0, 3.0)
    e = parse_schedule("exppow:m=3,gamma=2,r=0.8")
    assert (e.kind, e.m, e.gamma, e.r) == ("exppow", 3.0, 2.0, 0.8)
    assert parse_schedule("polylog:m=2,p=2,scale=2").scale == 2.0
    f = tmp_path / "beta.txt"
    f.write_text("# values\n1\n2\n4\n8\n")
    t = parse_schedule(f"table:{f}")
    assert t.kind == "table" and t.beta_k(4) == 4.0 and t.k_last == 5
    for bad in ("bogus", "nope:m=1", "polylog:m", "polylog:m=x", "exppow:m=1", "polylog:m=1,zeta=2",
                "table:/does/not/exist"):
        with pytest.raises(ParameterError):
            parse_schedule(bad)


def test_table_piecewise_linear_view():
    t = BetaSchedule.table([1.0, 3.0, 4.0])
    assert t.beta(2.5) == 2.0
    assert t.beta_dot(2.5) == 2.0
    assert t.beta(10.0) == 4.0 and t.beta_dot(10.0) == 0.0
    with pytest.raises(DomainError):
        t.beta_k(5)


def test_h_beta_polylog_quotient_near_inverse_mu():
    rep = check_h_beta(BetaSchedule.polylog(2, 2), 3.0, 1.0, np.geomspace(2, 1e8, 400))
    assert rep.h_beta_i_ok and rep.h_beta_ii_ok and rep.h_beta_iii_ok
    assert rep.h_beta_iii_sup == pytest.approx(1.0, abs=0.05)


def test_h_beta_exppow_linear_exponent_quotient():
    rep = check_h_beta(BetaSchedule.exppow(0, 2, 1), 3.0, 1.0, np.geomspace(2, 1e4, 400))
    # b'/b = 2 exactly, so (ii) holds with equality and (iii) -> (1 + gamma)/mu
    assert rep.h_beta_ii_ok
    assert rep.h_beta_ii_margin == pytest.approx(0.0, abs=1e-12)
    assert rep.h_beta_iii_sup == pytest.approx(3.0, rel=1e-12)


def test_h_beta_ii_fails_when_c_too_small():
    rep = check_h_beta(BetaSchedule.exppow(0, 2, 1), 2.5, 1.0, np.geomspace(2, 1e4, 100))
    assert not rep.h_beta_ii_ok and not rep.passed


def test_h_beta_constant_table_fails():
    rep = check_h_beta(BetaSchedule.table([2.0] * 30), 3.0, 1.0, np.linspace(2, 31, 60))
    assert rep.h_beta_i_ok is False
    assert rep.h_beta_iii_excluded > 0
    assert not rep.passed


def test_h_beta_requires_positive_mu():
    with pytest.raises(ParameterError):
        check_h_beta(BetaSchedule.polylog(1, 1), 3.0, 0.0, np.geomspace(2, 10, 20))


def test_h_beta_k_limits():
    pl = check_h_beta_k(BetaSchedule.polylog(3, 3), 10 ** 4)
    assert abs(pl.ell_beta - 1) <= 1e-2 and abs(pl.ell_betadot - 1) <= 1e-2
    assert pl.strong_convergence_regime
    ex = check_h_beta_k(BetaSchedule.exppow(0, 2, 1), 10 ** 4)
    assert ex.ell_beta == pytest.approx(math.e ** 2, rel=1e-2)
    assert ex.ell_betadot == pytest.approx(math.e ** 2, rel=1e-2)
    assert not ex.strong_convergence_regime
    sub = check_h_beta_k(BetaSchedule.exppow(3, 2, 0.8), 10 ** 12)
    assert abs(sub.ell_beta - 1) <= 1e-2 and abs(sub.ell_betadot - 1) <= 1e-2


def test_h_beta_k_sublinear_exponent_limit_is_slow():
    # beta_{k+1}/beta_k ~ 1 + 1.6 k**-0.2, so the limit 1 is only visible at very large k
    s = BetaSchedule.exppow(3, 2, 0.8)
    assert check_h_beta_k(s, 10 ** 4).ell_beta > 1.2
    assert check_h_beta_k(s, 10 ** 12).ell_beta < check_h_beta_k(s, 10 ** 8).ell_beta


def test_h_beta_k_needs_room():
    with pytest.raises(ParameterError):
        check_h_beta_k(BetaSchedule.polylog(1, 1), 5)


def test_strong_convergence_flag_invariant():
    for s in SCHEDULES:
        rep = check_h_beta_k(s, 10 ** 9)
        expected = abs(rep.ell_beta - 1) <= 1e-3 and abs(rep.ell_betadot - 1) <= 1e-3
        assert rep.strong_convergence_regime == expected


def test_report_serialises():
    rep = check_schedule(BetaSchedule.polylog(3, 3))
    d = rep.to_dict()
    assert isinstance(rep, HypothesisReport)
    assert d["passed"] is True and d["schedule"] == "polylog:m=3,q=3"
    assert '"ell_beta"' in rep.to_json()
