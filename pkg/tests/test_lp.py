import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hsdlayer.errors import InfeasibleError, RankDeficient, StructuralError
from hsdlayer.lp import (GeneralProblem, StandardFormLP, check_full_row_rank, presolve,
                         to_standard_form)


def test_inequality_gets_slack():
    lp = to_standard_form(GeneralProblem(c=[1.0], A_ub=[[1.0]], b_ub=[3.0]))
    np.testing.assert_array_equal(lp.c, [1.0, 0.0])
    np.testing.assert_array_equal(lp.A, [[1.0, 1.0]])
    np.testing.assert_array_equal(lp.b, [3.0])
    assert lp.slack_range == (1, 2)


def test_equality_passes_through():
    lp = to_standard_form(GeneralProblem(c=[1.0], A_eq=[[1.0]], b_eq=[2.0]))
    np.testing.assert_array_equal(lp.A, [[1.0]])
    assert lp.k == 1
    assert lp.slack_range == (1, 1)


def test_knapsack_max_is_negated():
    lp = to_standard_form(GeneralProblem(c=[10.0, 6.0], A_ub=[[1.0, 1.0]], b_ub=[1.0],
                                         sense="max"))
    np.testing.assert_array_equal(lp.c, [-10.0, -6.0, 0.0])
    np.testing.assert_array_equal(lp.A, [[1.0, 1.0, 1.0]])
    assert lp.sign == -1.0
    assert lp.original_objective([1.0, 0.0, 0.0]) == 10.0


def test_dimension_mismatch_is_structural():
    with pytest.raises(StructuralError):
        GeneralProblem(c=[1.0, 2.0], A_eq=[[1.0]], b_eq=[1.0])
    with pytest.raises(StructuralError):
        GeneralProblem(c=[1.0], A_eq=[[1.0]], b_eq=[1.0, 2.0])
    with pytest.raises(StructuralError):
        StandardFormLP(c=[1.0, 2.0], A=[[1.0]], b=[1.0])


def test_nonfinite_data_rejected():
    with pytest.raises(StructuralError):
        GeneralProblem(c=[np.nan])


def test_duplicate_row_removed():
    lp, rep = presolve(StandardFormLP(c=[1.0, 1.0], A=[[1.0, 1.0], [2.0, 2.0]], b=[1.0, 2.0]))
    assert lp.p == 1
    assert rep.rank_deficient
    assert len(rep.removed_rows) == 1


def test_inconsistent_duplicate_is_infeasible():
    with pytest.raises(InfeasibleError):
        presolve(StandardFormLP(c=[1.0, 1.0], A=[[1.0, 1.0], [1.0, 1.0]], b=[1.0, 2.0]))


def test_zero_row_with_nonzero_rhs_is_infeasible():
    with pytest.raises(InfeasibleError):
        presolve(StandardFormLP(c=[1.0, 1.0], A=[[1.0, 1.0], [0.0, 0.0]], b=[1.0, 1.0]))


def test_well_conditioned_system_unchanged_up_to_scaling():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((4, 8))
    b = rng.standard_normal(4)
    lp, rep = presolve(StandardFormLP(c=np.ones(8), A=A, b=b))
    assert rep.removed_rows == ()
    np.testing.assert_allclose(lp.A / rep.row_scale[:, None], A, rtol=1e-14)
    np.testing.assert_allclose(lp.b / rep.row_scale, b, rtol=1e-14)
    np.testing.assert_allclose(np.abs(lp.A).max(axis=1), 1.0)


def test_full_row_rank_examples():
    assert check_full_row_rank(np.eye(3))
    assert not check_full_row_rank([[1.0, 0.0], [0.0, 0.0]])
    assert not check_full_row_rank([[1.0, 2.0], [2.0, 4.0]])
    assert not check_full_row_rank(np.ones((3, 2)))


def test_nearly_dependent_rows_are_dropped():
    A = np.array([[1.0, 1.0, 0.0], [1.0, 1.0 + 1e-12, 0.0]])
    lp, rep = presolve(StandardFormLP(c=np.ones(3), A=A, b=A @ np.ones(3)))
    assert lp.p == 1
    assert check_full_row_rank(lp.A)


def test_rank_check_rejects_what_presolve_would_keep(monkeypatch):
    import hsdlayer.lp as lpmod
    monkeypatch.setattr(lpmod, "check_full_row_rank", lambda A, rtol: False)
    with pytest.raises(RankDeficient):
        lpmod.presolve(StandardFormLP(c=np.ones(2), A=[[1.0, 0.0]], b=[1.0]))


def test_problem_roundtrip():
    p = GeneralProblem(c=[1.0, 2.0], A_ub=[[1.0, 1.0]], b_ub=[4.0], sense="max",
                       integrality=[1, 0])
    q = GeneralProblem.from_dict(p.to_dict())
    assert q.to_dict() == p.to_dict()


def test_unknown_field_rejected():
    with pytest.raises(StructuralError):
        GeneralProblem.from_dict({"c": [1.0], "bogus": 1})


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 3), st.integers(0, 3), st.integers(0, 2**31 - 1))
def test_standard_form_preserves_feasibility(n, m_eq, m_ub, seed):
    """A feasible x of the general problem extends to a feasible standard-form point."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(0, 1, n)
    A_eq = rng.standard_normal((m_eq, n))
    A_ub = rng.standard_normal((m_ub, n))
    slack = rng.uniform(0, 1, m_ub)
    p = GeneralProblem(c=rng.standard_normal(n), A_eq=A_eq, b_eq=A_eq @ x,
                       A_ub=A_ub, b_ub=A_ub @ x + slack, sense=rng.choice(["min", "max"]))
    lp = to_standard_form(p)
    xs = np.concatenate([x, slack])
    np.testing.assert_allclose(lp.A @ xs, lp.b, atol=1e-12)
    assert lp.original_objective(xs) == pytest.approx(p.objective(x))
    np.testing.assert_array_equal(lp.original_solution(xs), x)
