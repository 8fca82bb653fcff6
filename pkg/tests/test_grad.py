import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hsdlayer.grad import (BackwardContext, GradConfig, damp, dxdc_kkt_squared,
                           jacobian, log_barrier_jacobian, solve_barrier,
                           solve_regularized_qp, vjp)
from hsdlayer.errors import NumericalFailure
from hsdlayer.layer import cost_vjp, solve_problem
from hsdlayer.lp import GeneralProblem, StandardFormLP, presolve
from hsdlayer.solver import SolverConfig, solve

from oracles import central_difference, column_cosines, random_lp

CUT = SolverConfig(lambda_cutoff=0.1)


def _prepared(seed, **kw):
    # barrier problems need a strictly feasible point, so no zero entries in x0
    kw.setdefault("zero_frac", 0.0)
    lp, _ = presolve(StandardFormLP(*random_lp(np.random.default_rng(seed), **kw)))
    return lp


def _hsd_jacobian(lp, damping=0.0, formulation="hsd"):
    sol = solve(lp, CUT)
    ctx = BackwardContext(lp, sol.point, damping)
    return jacobian(ctx, GradConfig(formulation=formulation, damping=damping)).dxdc, ctx


def test_damp_examples():
    M = np.array([[2.0, 1.0], [1.0, 3.0]])
    np.testing.assert_array_equal(damp(M, 0.0), M)
    np.testing.assert_array_equal(damp(np.zeros((1, 1)), 1e-3), [[1e-3]])


def test_fully_constrained_hsd_is_zero():
    lp = StandardFormLP(c=[0.7], A=[[1.0]], b=[1.0])
    J, _ = _hsd_jacobian(lp)
    assert np.max(np.abs(J)) <= 1e-8


def test_fully_constrained_kkt_forms_are_zero():
    lp = StandardFormLP(c=[0.7], A=[[1.0]], b=[1.0])
    assert np.max(np.abs(log_barrier_jacobian(lp.A, np.ones(1), 0.1).dxdc)) == 0.0
    assert np.max(np.abs(dxdc_kkt_squared(lp, 0.5).dxdc)) == 0.0


def test_all_active_squared_gives_flagged_zero():
    lp = StandardFormLP(c=[1.0, 1.0], A=[[1.0, 1.0]], b=[1.0])
    jac = dxdc_kkt_squared(lp, 0.5, x=np.zeros(2))
    assert jac.info["empty_inactive"]
    np.testing.assert_array_equal(jac.dxdc, 0.0)


def test_vjp_zero_and_unit():
    lp = _prepared(5)
    J, ctx = _hsd_jacobian(lp, 1e-6)
    np.testing.assert_array_equal(vjp(ctx, np.zeros(lp.k)), 0.0)
    e = np.zeros(lp.k)
    e[2] = 1.0
    np.testing.assert_allclose(vjp(ctx, e), J[2], rtol=1e-12)
    with pytest.raises(ValueError):
        vjp(ctx, np.zeros(lp.k + 1))


def test_hsd_matches_finite_differences_8_vars():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((3, 8))
    b = A @ rng.uniform(0.1, 2, 8)
    c = A.T @ rng.standard_normal(3) + rng.uniform(0.1, 2, 8)
    lp, _ = presolve(StandardFormLP(c, A, b))
    J, _ = _hsd_jacobian(lp)
    F = central_difference(lambda cc: solve(lp.with_cost(cc), CUT).x, lp.c, 1e-4)
    assert np.all(column_cosines(J, F) >= 0.99)


def test_literal_rhs_is_worse():
    lp = _prepared(7)
    F = central_difference(lambda cc: solve(lp.with_cost(cc), CUT).x, lp.c, 1e-4)
    J, _ = _hsd_jacobian(lp)
    L, _ = _hsd_jacobian(lp, formulation="hsd-literal")
    assert np.linalg.norm(J - F) < np.linalg.norm(L - F)


def test_regret_vjp_matches_fd_of_task_loss():
    """grad_x = c_true: d(c_true . x(c_hat)) / d c_hat against differences."""
    rng = np.random.default_rng(3)
    p = GeneralProblem(c=rng.uniform(1, 2, 4), A_ub=rng.uniform(0.5, 1.5, (2, 4)),
                       b_ub=[2.0, 3.0], sense="max")
    c_true = rng.uniform(1, 2, 4)
    out = solve_problem(p, CUT)
    g = cost_vjp(out, c_true, GradConfig(damping=0.0))
    F = central_difference(lambda cc: c_true @ solve_problem(p.with_objective(cc), CUT).x,
                           p.c, 1e-5)
    np.testing.assert_allclose(g, F, rtol=1e-5, atol=1e-7)


def test_kkt_log_defining_system():
    lp = _prepared(9)
    lam = 0.1
    x, _, _ = solve_barrier(lp, lam)
    jac = log_barrier_jacobian(lp.A, x, lam)
    H = np.diag(lam / x ** 2)
    res1 = H @ jac.dxdc - lp.A.T @ jac.dydc + np.eye(lp.k)
    res2 = lp.A @ jac.dxdc
    assert max(np.abs(res1).max(), np.abs(res2).max()) <= 1e-8


def test_barrier_without_interior_fails_cleanly():
    # x1 + x2 = 1, x1 - x2 = 1 pins x2 = 0
    lp = StandardFormLP(c=[1.0, 1.0, 1.0], A=[[1.0, 1.0, 0.0], [1.0, -1.0, 0.0]],
                        b=[1.0, 1.0])
    with pytest.raises(NumericalFailure):
        solve_barrier(lp, 0.1)


def test_kkt_sq_defining_system():
    lp = _prepared(23)
    jac = dxdc_kkt_squared(lp, 0.3)
    K, R, sol = jac.info["saddle"]
    assert np.abs(K @ sol - R).max() <= 1e-8


def test_barrier_solution_is_central():
    lp = _prepared(9)
    x, y, t = solve_barrier(lp, 0.05)
    np.testing.assert_allclose(x * t, 0.05, rtol=1e-10)
    np.testing.assert_allclose(lp.A @ x, lp.b, atol=1e-10)
    np.testing.assert_allclose(lp.A.T @ y + t, lp.c, atol=1e-10)


def test_kkt_log_finite_differences():
    lp = _prepared(13)
    lam = 0.1
    x, _, _ = solve_barrier(lp, lam)
    J = log_barrier_jacobian(lp.A, x, lam).dxdc
    F = central_difference(lambda cc: solve_barrier(lp.with_cost(cc), lam)[0], lp.c, 1e-4)
    assert np.max(np.abs(J - F)) <= 1e-2 * np.max(np.abs(F))


def test_regularized_qp_kkt():
    lp = _prepared(21)
    x, y = solve_regularized_qp(lp, 0.7)
    np.testing.assert_allclose(lp.A @ x, lp.b, atol=1e-10)
    t = lp.c + 1.4 * x - lp.A.T @ y
    assert np.all(x >= 0)
    assert np.all(t >= -1e-9)
    assert np.max(np.abs(x * t)) <= 1e-9


def test_kkt_sq_finite_differences():
    lp = _prepared(17)
    x, _ = solve_regularized_qp(lp, 1.0)
    J = dxdc_kkt_squared(lp, 1.0, x).dxdc
    F = central_difference(lambda cc: solve_regularized_qp(lp.with_cost(cc), 1.0)[0],
                           lp.c, 1e-4)
    scale = max(np.max(np.abs(F)), 1e-8)
    assert np.max(np.abs(J - F)) <= 1e-2 * scale + 1e-8


def test_grad_config_validation():
    with pytest.raises(ValueError):
        GradConfig(formulation="nope")
    with pytest.raises(ValueError):
        GradConfig(damping=-1.0)
    with pytest.raises(ValueError):
        GradConfig(formulation="kkt-sq", lambda_sq=0.0)


def test_backward_needs_interior_point():
    lp = _prepared(1)
    pt = solve(lp, CUT).point
    bad = type(pt)(x=np.zeros(lp.k), y=pt.y, t=pt.t, tau=pt.tau, kappa=pt.kappa, lam=pt.lam)
    with pytest.raises(ValueError):
        BackwardContext(lp, bad)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.01, 1.0))
def test_kkt_jacobians_stay_in_null_space(seed, lam):
    """Both KKT Jacobians keep A x fixed: A J = 0."""
    lp = _prepared(seed)
    x, _, _ = solve_barrier(lp, lam)
    J = log_barrier_jacobian(lp.A, x, lam).dxdc
    assert np.abs(lp.A @ J).max() <= 1e-8 * (1 + np.abs(J).max())
    Jq = dxdc_kkt_squared(lp, lam).dxdc
    assert np.abs(lp.A @ Jq).max() <= 1e-8 * (1 + np.abs(Jq).max())


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_log_barrier_jacobian_is_symmetric_negative_semidefinite(seed):
    """dx/dc is the negated Hessian-inverse on the null space: symmetric, NSD."""
    lp = _prepared(seed)
    x, _, _ = solve_barrier(lp, 0.1)
    J = log_barrier_jacobian(lp.A, x, 0.1).dxdc
    np.testing.assert_allclose(J, J.T, atol=1e-9 * (1 + np.abs(J).max()))
    assert np.max(np.linalg.eigvalsh((J + J.T) / 2)) <= 1e-9 * (1 + np.abs(J).max())
