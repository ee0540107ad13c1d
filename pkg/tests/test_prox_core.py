import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tikhoprox.prox_core import (
    AbsBoxProblem,
    AbsBoxQuadProblem,
    ConvergenceError,
    LogBarrierQuadProblem,
    MoreauEnvelope,
    ParameterError,
    QuadraticProblem,
    ShiftedQuadProblem,
    ZeroProblem,
    brute_force_prox,
    moreau_grad,
    moreau_prox_identity_check,
    moreau_value,
    prox_abs_box,
    prox_numeric,
    prox_shifted_quad,
)

# grid minimiser of the prox subproblem at (0,0), lam=1 for the log-barrier
# objective, from brute_force_prox over (-0.99, 3)^2 refined to 1e-8 pitch
LOGBARRIER_PROX_00 = np.array([0.26376262, 0.26376262])


# closed-form prox examples


@pytest.mark.parametrize("x, lam, a, expected", [(0.0, 1.0, 2.0, 0.0), (1.3, 0.5, 2.0, 0.8), (10.0, 0.5, 2.0, 2.0)])
def test_prox_abs_box_examples(x, lam, a, expected):
    assert prox_abs_box(x, lam, a) == pytest.approx(expected, abs=1e-15)


def test_prox_abs_box_negative_side_and_errors():
    assert prox_abs_box(-10.0, 0.5, 2.0) == -2.0
    assert prox_abs_box(-0.3, 0.5, 2.0) == 0.0
    with pytest.raises(ParameterError):
        prox_abs_box(1.0, 0.0, 2.0)
    with pytest.raises(ParameterError):
        prox_abs_box(1.0, 1.0, -1.0)


def test_prox_shifted_quad_examples():
    assert prox_shifted_quad(7.5, 3.0, 7.5) == 7.5
    assert prox_shifted_quad(0.0, 1.0, 2.0) == 1.0
    assert prox_shifted_quad(4.0, 1e-14, 0.0) == pytest.approx(4.0, rel=1e-12)
    with pytest.raises(ParameterError):
        prox_shifted_quad(1.0, -1.0, 0.0)


def test_sign_flipped_quadratic_prox_breaks_fixed_point():
    # the alternative sign flips y; at y = v0 it no longer returns v0
    assert prox_shifted_quad(3.0, 1.0, 3.0, flipped_sign=True) == 0.0
    prob = AbsBoxQuadProblem(2.0, 3.0, flipped_prox=True)
    assert prob.prox(1.0, np.array([0.0, 3.0]))[1] != 3.0


# brute-force oracle


def _brute_abs(x, lam, a):
    return brute_force_prox(AbsBoxProblem(a), [x], lam, [(-a - 1.0, a + 1.0)])[0]


def _brute_quad(y, lam, v0):
    lo, hi = min(y, v0) - 1.0, max(y, v0) + 1.0
    return brute_force_prox(ShiftedQuadProblem(v0), [y], lam, [(lo, hi)])[0]


def test_brute_force_matches_prox_abs_box_50_random():
    rng = np.random.default_rng(1)
    for _ in range(50):
        x, lam, a = rng.uniform(-6, 6), rng.uniform(0.05, 4), rng.uniform(0.1, 4)
        assert abs(_brute_abs(x, lam, a) - prox_abs_box(x, lam, a)) <= 1e-6


def test_brute_force_matches_prox_shifted_quad_50_random():
    rng = np.random.default_rng(2)
    for _ in range(50):
        y, lam, v0 = rng.uniform(-6, 6), rng.uniform(0.05, 4), rng.uniform(-5, 5)
        assert abs(_brute_quad(y, lam, v0) - prox_shifted_quad(y, lam, v0)) <= 1e-6


def test_brute_force_refinement_is_self_consistent():
    prob = AbsBoxProblem(2.0)
    coarse = brute_force_prox(prob, [1.3], 0.5, [(-3, 3)], xtol=1e-3)
    fine = brute_force_prox(prob, [1.3], 0.5, [(-3, 3)], xtol=1e-9)
    assert abs(coarse[0] - fine[0]) <= 1e-3
    assert fine[0] == pytest.approx(0.8, abs=1e-8)


def test_brute_force_zero_function_is_identity():
    x = np.array([0.3, -1.7])
    out = brute_force_prox(ZeroProblem(2), x, 2.0, [(-3, 3), (-3, 3)])
    assert np.allclose(out, x, atol=1e-7)


def test_brute_force_rejects_large_dim_and_coarse_grid():
    with pytest.raises(ParameterError):
        brute_force_prox(ZeroProblem(4), np.zeros(4), 1.0, [(-1, 1)] * 4)
    with pytest.raises(ParameterError):
        brute_force_prox(ZeroProblem(1), [0.0], 1.0, [(-1, 1)], n_grid=50)


# numeric prox


def test_prox_numeric_quadratic_closed_form():
    prob = QuadraticProblem(np.eye(2))
    assert np.allclose(prox_numeric(prob, [2.0, 2.0], 1.0), [1.0, 1.0], atol=1e-12)


def test_prox_numeric_small_lambda_is_identity():
    prob = LogBarrierQuadProblem()
    assert np.allclose(prox_numeric(prob, prob.xstar, 1e-12), prob.xstar, atol=1e-10)


def test_prox_numeric_logbarrier_matches_grid():
    prob = LogBarrierQuadProblem()
    z = prox_numeric(prob, [0.0, 0.0], 1.0)
    assert np.allclose(z, LOGBARRIER_PROX_00, atol=1e-4)
    grid = brute_force_prox(prob, [0.0, 0.0], 1.0, [(-0.99, 3.0), (-0.99, 3.0)], xtol=1e-6)
    assert np.allclose(z, grid, atol=1e-4)
    res = np.linalg.norm(1.0 * prob.grad(z) + z)
    assert res <= 1e-10
    assert prob.in_domain(z)


def test_prox_numeric_start_outside_domain_and_huge_lambda():
    prob = LogBarrierQuadProblem()
    z = prox_numeric(prob, [-5.0, 3.0], 0.7)
    assert prob.in_domain(z)
    assert np.linalg.norm(0.7 * prob.grad(z) + z - [-5.0, 3.0]) <= 1e-9
    assert np.allclose(prox_numeric(prob, [0.0, 0.0], 1e20), prob.xstar, atol=1e-12)


def test_prox_numeric_iteration_cap_raises_with_residual():
    prob = LogBarrierQuadProblem()
    with pytest.raises(ConvergenceError) as info:
        prox_numeric(prob, [50.0, -0.5], 10.0, tol=1e-14, max_iter=1)
    assert info.value.residual > 0


def test_prox_numeric_needs_gradient():
    with pytest.raises(ParameterError):
        prox_numeric(AbsBoxQuadProblem(), [0.0, 0.0], 1.0)


# problem invariants


def test_known_minimisers():
    lb = LogBarrierQuadProblem()
    s = (np.sqrt(3) - 1) / 2
    assert np.allclose(lb.xstar, [s, s])
    assert np.linalg.norm(lb.grad(lb.xstar)) <= 1e-12
    ab = AbsBoxQuadProblem(2.0, 3.0)
    assert np.array_equal(ab.xstar, [0.0, 3.0]) and ab.fmin == 0.0
    assert ab.value(ab.xstar) == 0.0
    assert ab.value([2.5, 3.0]) == np.inf


def test_quadratic_minimum_norm_minimiser_on_singular_q():
    prob = QuadraticProblem(np.diag([1.0, 0.0]), [1.0, 2.0])
    assert np.allclose(prob.xstar, [1.0, 0.0])
    assert prob.value(prob.xstar) == 0.0


def _problems():
    return [
        AbsBoxQuadProblem(2.0, 3.0),
        LogBarrierQuadProblem(),
        QuadraticProblem(np.array([[2.0, 0.5], [0.5, 1.0]]), [1.0, -1.0]),
        MoreauEnvelope(AbsBoxQuadProblem(1.5, -2.0), 0.7),
    ]


def _sub(prob, lam, x, z):
    z = np.asarray(z)
    return np.asarray(prob.value(z)) + np.sum((z - x) ** 2, axis=-1) / (2 * lam)


@pytest.mark.parametrize("idx", range(4))
@settings(max_examples=25, deadline=None)
@given(
    x=st.lists(st.floats(-4, 4), min_size=2, max_size=2),
    lam=st.floats(0.01, 50),
)
def test_prox_optimality_against_random_probes(idx, x, lam):
    prob = _problems()[idx]
    x = np.asarray(x)
    p = prob.prox(lam, x)
    rng = np.random.default_rng(0)
    probes = p + rng.normal(scale=[[[1.0]], [[0.1]], [[1e-3]]], size=(3, 34, 2)).reshape(-1, 2)[:100]
    probes = probes[[prob.in_domain(z) for z in probes]]
    ref = float(_sub(prob, lam, x, p))
    vals = _sub(prob, lam, x, probes)
    assert np.all(ref <= vals + 1e-10 * max(1.0, abs(ref)))


@pytest.mark.parametrize("idx", range(4))
@settings(max_examples=25, deadline=None)
@given(
    x=st.lists(st.floats(-4, 4), min_size=2, max_size=2),
    y=st.lists(st.floats(-4, 4), min_size=2, max_size=2),
    lam=st.floats(0.01, 50),
)
def test_prox_firm_nonexpansive(idx, x, y, lam):
    prob = _problems()[idx]
    x, y = np.asarray(x), np.asarray(y)
    px, py = prob.prox(lam, x), prob.prox(lam, y)
    d = px - py
    assert d @ d <= d @ (x - y) + 1e-10


# Moreau envelope


def test_moreau_value_and_grad_quadratic():
    env = MoreauEnvelope(QuadraticProblem(np.eye(2)), 1.0)
    assert moreau_value(env, [2.0, 0.0]) == pytest.approx(1.0, abs=1e-14)
    assert np.allclose(moreau_grad(env, [2.0, 0.0]), [1.0, 0.0], atol=1e-14)


def test_moreau_at_minimiser():
    base = AbsBoxQuadProblem(2.0, 3.0)
    env = MoreauEnvelope(base, 0.8)
    assert moreau_value(env, base.xstar) == pytest.approx(base.fmin, abs=1e-15)
    assert np.allclose(moreau_grad(env, base.xstar), 0.0, atol=1e-15)
    assert env.fmin == base.fmin and env.argmin_set == base.argmin_set
    assert env.lipschitz_grad == pytest.approx(1 / 0.8)


def test_moreau_value_matches_grid_minimisation():
    base = AbsBoxQuadProblem(2.0, 3.0)
    gamma = 0.6
    env = MoreauEnvelope(base, gamma)
    rng = np.random.default_rng(3)
    for x in rng.uniform(-3, 5, size=(5, 2)):
        # envelope is the minimum of f(z) + |z-x|^2/(2 gamma); the grid point's value is an upper bound
        z = brute_force_prox(base, x, gamma, [(-2.0, 2.0), (-4.0, 8.0)], xtol=1e-7)
        direct = float(base.value(z)) + float((z - x) @ (z - x)) / (2 * gamma)
        assert moreau_value(env, x) == pytest.approx(direct, abs=1e-4)


def test_moreau_grad_matches_finite_differences():
    env = MoreauEnvelope(AbsBoxQuadProblem(2.0, 3.0), 0.9)
    rng = np.random.default_rng(4)
    h = 1e-6
    for x in rng.uniform(-4, 6, size=(20, 2)):
        g = moreau_grad(env, x)
        fd = np.array([(moreau_value(env, x + e) - moreau_value(env, x - e)) / (2 * h) for e in h * np.eye(2)])
        assert np.max(np.abs(fd - g)) / max(1.0, np.max(np.abs(g))) <= 1e-5


def test_moreau_gradient_is_lipschitz():
    gamma = 0.5
    env = MoreauEnvelope(AbsBoxQuadProblem(1.0, -1.0), gamma)
    rng = np.random.default_rng(5)
    for x, y in rng.uniform(-5, 5, size=(50, 2, 2)):
        assert np.linalg.norm(env.grad(x) - env.grad(y)) <= np.linalg.norm(x - y) / gamma + 1e-12


def test_moreau_prox_identity_quadratic_and_zero():
    assert moreau_prox_identity_check(QuadraticProblem(np.eye(2)), 1.0, 2.0, [3.0, -1.0]) <= 1e-8
    assert moreau_prox_identity_check(AbsBoxQuadProblem(2.0, 0.0), 1.0, 1.0, [0.0, 0.0]) == 0.0


def test_moreau_prox_identity_random_l1box():
    rng = np.random.default_rng(6)
    base = AbsBoxQuadProblem(2.0, 3.0)
    for _ in range(20):
        gamma, theta = rng.uniform(0.1, 3, size=2)
        x = rng.uniform(-5, 5, size=2)
        assert moreau_prox_identity_check(base, gamma, theta, x) <= 1e-6


@pytest.mark.parametrize("prob", [AbsBoxQuadProblem(2.0, 3.0), LogBarrierQuadProblem(),
                                  QuadraticProblem(np.diag([2.0, 0.0]), [1.0, 5.0])])
def test_prox_at_origin_bounded_and_converges(prob):
    gammas = 10.0 ** np.arange(0, 7)
    pts = [prob.prox(g, np.zeros(2)) for g in gammas]
    xnorm = np.linalg.norm(prob.xstar)
    assert all(np.linalg.norm(p) <= xnorm + 1e-12 for p in pts)
    dist = np.array([np.linalg.norm(p - prob.xstar) for p in pts])
    assert np.all(np.diff(dist) <= 1e-15)
    assert dist[-1] <= 1e-3


def test_envelope_minimum_matches_base_minimum():
    base = AbsBoxQuadProblem(2.0, 3.0)
    env = MoreauEnvelope(base, 0.5)
    u = np.linspace(-1, 1, 41)
    w = np.linspace(2, 4, 41)
    grid = np.stack(np.meshgrid(u, w, indexing="ij"), axis=-1).reshape(-1, 2)
    assert env.value(grid).min() == pytest.approx(base.fmin, abs=1e-12)
