import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcphase.inner import (
    InnerConfig,
    InnerMethod,
    InnerProblem,
    bb_step_size,
    nesterov_momentum_coeff,
    solve_inner,
    solve_inner_bb_nesterov,
    solve_inner_gd,
    solve_inner_nesterov,
)
from dcphase.model import FieldTag

from conftest import QuadraticProblem, make_instance, scalar_objective

SOLVERS = [solve_inner_gd, solve_inner_nesterov, solve_inner_bb_nesterov]
CUBE_ROOT = 0.5 ** (1 / 3)


def test_momentum_examples():
    assert nesterov_momentum_coeff(1.0, 1.0) == 0.0
    assert nesterov_momentum_coeff(4.0, 1.0) == pytest.approx(1 / 3)
    assert nesterov_momentum_coeff(9.0, 1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        nesterov_momentum_coeff(1.0, 0.0)
    with pytest.raises(ValueError):
        nesterov_momentum_coeff(0.5, 1.0)


def test_bb_examples():
    assert bb_step_size([1, 0], [2, 0]) == 2.0
    assert bb_step_size([-0.5, -0.8], [-0.5, -2.4]) == pytest.approx(2.17 / 0.89)
    assert bb_step_size([1, 0], [-1, 0], (1e-8, 1e8)) == 1e-8
    assert bb_step_size([1, 0], [1e9, 0]) == 1e8
    with pytest.raises(ValueError):
        bb_step_size([0, 0], [1, 1])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**31))
def test_bb_is_rayleigh_quotient(seed):
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.normal(size=(5, 5)))[0]
    lam = rng.uniform(0.1, 10, size=5)
    H = Q @ np.diag(lam) @ Q.T
    s = rng.normal(size=5)
    beta = bb_step_size(s, H @ s)
    assert lam.min() * (1 - 1e-12) <= beta <= lam.max() * (1 + 1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        InnerConfig(max_iters=0)
    with pytest.raises(ValueError):
        InnerConfig(bb_clamp=(1.0, 0.5))
    with pytest.raises(ValueError):
        InnerConfig(step_L=0)
    with pytest.raises(ValueError):
        solve_inner_nesterov(QuadraticProblem(np.eye(2)), np.ones(2), InnerConfig(step_L=1.0, nu=0.0))


def scalar_problem():
    obj = scalar_objective()
    return InnerProblem.at(obj, np.array([0.5]))


@pytest.mark.parametrize("solver", SOLVERS)
def test_scalar_surrogate_stationary_point(solver):
    res = solver(scalar_problem(), np.array([0.5]), InnerConfig(max_iters=1000, grad_tol=1e-8, step_L=12.0, nu=4.0))
    assert abs(res.x[0] - CUBE_ROOT) <= 1e-8
    assert res.converged


@pytest.mark.parametrize("solver", SOLVERS)
def test_stationary_start_returns_immediately(solver):
    prob = InnerProblem.at(scalar_objective(), np.array([1.0]))
    res = solver(prob, np.array([1.0]), InnerConfig(step_L=12.0, nu=4.0))
    assert res.iters == 0
    assert res.x[0] == 1.0


def test_gd_monotone_on_quadratic():
    prob = QuadraticProblem(np.diag([1.0, 3.0]))
    x = np.array([2.0, -1.5])
    values = [prob.delta(x)]
    for k in range(1, 30):
        res = solve_inner_gd(prob, np.array([2.0, -1.5]), InnerConfig(max_iters=k, step_L=3.0, grad_tol=1e-30))
        values.append(prob.delta(res.x))
    assert all(b < a for a, b in zip(values, values[1:]))


def test_nesterov_without_momentum_is_gd():
    prob = QuadraticProblem(np.diag([0.5, 1.0]))
    x0 = np.array([1.0, -2.0])
    for k in range(1, 6):
        a = solve_inner_nesterov(prob, x0, InnerConfig(max_iters=k, step_L=1.0, nu=1.0, grad_tol=1e-30))
        b = solve_inner_gd(prob, x0, InnerConfig(max_iters=k, step_L=0.5, grad_tol=1e-30))
        np.testing.assert_array_equal(a.x, b.x)


def test_nesterov_needs_at_most_half_the_gd_iterations():
    prob = QuadraticProblem(np.diag([1.0, 4.0]))
    rng = np.random.default_rng(0)
    for _ in range(20):
        x0 = rng.normal(size=2) * 5
        gd = solve_inner_gd(prob, x0, InnerConfig(max_iters=10_000, step_L=4.0, grad_tol=1e-10))
        nv = solve_inner_nesterov(prob, x0, InnerConfig(max_iters=10_000, step_L=4.0, nu=1.0, grad_tol=1e-10))
        assert gd.converged and nv.converged
        assert nv.iters <= gd.iters / 2


def test_bb_finite_termination_on_2d_quadratic():
    # classical BB: no acceptance test.  A first curvature equal to an
    # eigenvalue removes that component, the next displacement is then an
    # eigenvector and the third quotient is exactly the other eigenvalue.
    prob = QuadraticProblem(np.diag([1.0, 3.0]))
    rng = np.random.default_rng(1)
    for _ in range(20):
        x0 = rng.normal(size=2) * 3
        cfg = InnerConfig(max_iters=3, step_L=1.0, q=0.0, grad_tol=1e-12, nonmonotone_window=None)
        res = solve_inner_bb_nesterov(prob, x0, cfg)
        assert np.linalg.norm(res.x - prob.minimizer) <= 1e-12
        assert res.backtracks == 0


@pytest.mark.parametrize("method", list(InnerMethod))
def test_solve_inner_dispatch(method):
    prob = QuadraticProblem(np.diag([1.0, 2.0]), c=[1.0, 1.0])
    res = solve_inner(prob, np.zeros(2), InnerConfig(method=method, max_iters=500, step_L=2.0, nu=1.0, grad_tol=1e-10))
    np.testing.assert_allclose(res.x, prob.minimizer, atol=1e-9)
    x, iters, gn = res
    assert gn <= 1e-10


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31), st.integers(2, 16))
def test_solvers_agree_on_strongly_convex_instances(seed, n):
    rng = np.random.default_rng(seed)
    Q = np.linalg.qr(rng.normal(size=(n, n)))[0]
    lam = rng.uniform(1.0, 10.0, size=n)
    prob = QuadraticProblem(Q @ np.diag(lam) @ Q.T, rng.normal(size=n))
    x0 = rng.normal(size=n)
    tol = 1e-9
    outs = [s(prob, x0, InnerConfig(max_iters=20_000, grad_tol=tol, step_L=float(lam.max()), nu=float(lam.min())))
            for s in SOLVERS]
    for r in outs:
        assert r.converged
    for r in outs[1:]:
        assert np.linalg.norm(r.x - outs[0].x) <= 10 * tol


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(list(FieldTag)), st.sampled_from(SOLVERS), st.integers(1, 30))
def test_best_iterate_contract_and_monotone_history(seed, field, solver, iters):
    _, ens, obj = make_instance(5, 15, field, seed=seed)
    rng = np.random.default_rng(seed)
    anchor = rng.normal(size=ens.d)
    prob = InnerProblem.at(obj, anchor)
    x0 = anchor + 0.3 * rng.normal(size=ens.d)
    L = obj.estimate_lipschitz_F1(x0, 0.0)
    res = solver(prob, x0, InnerConfig(max_iters=iters, step_L=L, nu=min(obj.strong_convexity_F2(), L) or L))
    assert prob.delta(res.x) <= prob.delta(x0)
    assert res.value == pytest.approx(prob.value(res.x), rel=1e-12, abs=1e-12)
    h = np.array(res.history)
    assert np.all(np.diff(h) <= 0)


def test_inner_problem_delta_consistent_with_value():
    _, ens, obj = make_instance(5, 15, seed=2)
    rng = np.random.default_rng(0)
    prob = InnerProblem.at(obj, rng.normal(size=5))
    x = rng.normal(size=5)
    direct = obj.eval_F1(x) - prob.anchor_grad_F2 @ (x - prob.anchor)
    assert prob.value(x) == pytest.approx(direct, rel=1e-12)
    np.testing.assert_allclose(prob.grad(x), obj.grad_F1(x) - obj.grad_F2(prob.anchor))
