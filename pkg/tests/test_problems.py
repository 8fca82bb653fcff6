import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hsdlayer.errors import InfeasibleError
from hsdlayer.layer import prepare, solve_problem
from hsdlayer.lp import GeneralProblem
from hsdlayer.problems import (Dataset, KnapsackSpec, SchedulingSpec, ShortestPathSpec, Task,
                               bellman_ford_oracle, brute_force_milp, dijkstra_oracle,
                               gen_knapsack_dataset, gen_scheduling_dataset,
                               gen_shortestpath_dataset, grid_graph, knapsack_oracle,
                               knapsack_to_lp, load_dataset, random_dag, reachable_pairs,
                               save_dataset, scheduling_oracle, scheduling_to_lp,
                               scheduling_variables, shortest_path, shortestpath_to_lp)
from hsdlayer.solver import SolverConfig

from oracles import bellman_ford, knapsack_enumeration

EXACT = SolverConfig(lambda_cutoff=1e-9)


# ---------------------------------------------------------------- knapsack

def test_knapsack_lp_rows():
    p = knapsack_to_lp(KnapsackSpec((1, 1), 1), [10, 6])
    assert p.A_ub.shape == (3, 2)
    np.testing.assert_array_equal(p.A_ub, [[1, 1], [1, 0], [0, 1]])
    np.testing.assert_array_equal(p.b_ub, [1, 1, 1])
    assert p.sense == "max"


def test_knapsack_lp_takes_everything_when_budget_is_loose():
    spec = KnapsackSpec((2, 3, 4), 9)
    out = solve_problem(knapsack_to_lp(spec, [1, 2, 3]), EXACT)
    np.testing.assert_allclose(out.x, 1.0, atol=1e-6)


def test_knapsack_dp_examples():
    assert knapsack_oracle([10, 6], [1, 1], 1) == ((0,), 10.0)
    assert knapsack_oracle([10, 6], [1, 1], 0) == ((), 0.0)


def test_knapsack_dp_fractional_costs():
    chosen, val = knapsack_oracle([3.0, 2.0, 2.0], [0.55, 0.3, 0.3], 0.6)
    assert chosen == (1, 2) and val == 4.0


def test_knapsack_dp_overflow():
    with pytest.raises(OverflowError):
        knapsack_oracle([1.0], [1.0], 1e8)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_knapsack_dp_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 12
    values = rng.uniform(0, 10, n)
    costs = rng.integers(1, 10, n).astype(float)
    budget = float(rng.integers(0, costs.sum()))
    chosen, val = knapsack_oracle(values, costs, budget)
    _, want = knapsack_enumeration(values, costs, budget)
    assert val == pytest.approx(want, rel=1e-12)
    assert costs[list(chosen)].sum() <= budget


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_knapsack_relaxation_bounds_dp(seed):
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.1, 10, 8)
    costs = rng.integers(1, 10, 8).astype(float)
    budget = float(rng.integers(1, costs.sum()))
    lp_val = solve_problem(knapsack_to_lp(KnapsackSpec(costs, budget), values), EXACT).objective
    assert lp_val >= knapsack_oracle(values, costs, budget)[1] - 1e-6


def test_brute_force_agrees_with_dp_on_toy():
    p = knapsack_to_lp(KnapsackSpec((1, 1), 1), [10, 6])
    x, val = brute_force_milp(p)
    np.testing.assert_array_equal(x, [1, 0])
    assert val == 10.0


def test_brute_force_infeasible():
    p = GeneralProblem(c=[1.0, 1.0], A_eq=[[1.0, 1.0]], b_eq=[3.0], integrality=[1, 1])
    with pytest.raises(InfeasibleError):
        brute_force_milp(p)


def test_brute_force_zero_objective_first_feasible():
    p = GeneralProblem(c=[0.0, 0.0, 0.0], A_eq=[[1.0, 1.0, 1.0]], b_eq=[1.0],
                       integrality=[1, 1, 1])
    x, val = brute_force_milp(p)
    np.testing.assert_array_equal(x, [0, 0, 1])
    assert val == 0.0


def test_brute_force_refuses_too_many_binaries():
    p = GeneralProblem(c=np.zeros(30), integrality=np.ones(30))
    with pytest.raises(ValueError):
        brute_force_milp(p)


# ----------------------------------------------------------- shortest path

def test_two_node_lp():
    spec = ShortestPathSpec(2, ((0, 1),))
    p = shortestpath_to_lp(spec, [4.0])
    np.testing.assert_array_equal(p.A_eq, [[1.0]])
    np.testing.assert_array_equal(p.b_eq, [1.0])


def test_triangle_prefers_direct_edge():
    spec = ShortestPathSpec(3, ((0, 1), (1, 2), (0, 2)), source=0, dest=2)
    w = [3.0, 3.0, 5.0]
    out = solve_problem(shortestpath_to_lp(spec, w), EXACT)
    assert out.objective == pytest.approx(5.0, rel=1e-6)
    assert dijkstra_oracle(spec, w) == ([2], 5.0)


def test_single_edge_cost():
    assert dijkstra_oracle(ShortestPathSpec(2, ((0, 1),)), [5.0])[1] == 5.0


def test_zero_weights_tie_break_lexicographic():
    spec = ShortestPathSpec(3, ((0, 2), (0, 1), (1, 2)), source=0, dest=2)
    assert dijkstra_oracle(spec, [0.0, 0.0, 0.0]) == ([0], 0.0)
    spec = ShortestPathSpec(4, ((0, 1), (0, 2), (1, 3), (2, 3)), source=0, dest=3)
    assert dijkstra_oracle(spec, [0.0] * 4) == ([0, 2], 0.0)


def test_unreachable_destination():
    spec = ShortestPathSpec(3, ((0, 1),), source=0, dest=2)
    with pytest.raises(InfeasibleError):
        dijkstra_oracle(spec, [1.0])
    with pytest.raises(InfeasibleError):
        bellman_ford_oracle(spec, [1.0])


def test_dijkstra_rejects_negative_weights():
    with pytest.raises(ValueError):
        dijkstra_oracle(ShortestPathSpec(2, ((0, 1),)), [-1.0])


def test_negative_cycle_detected():
    spec = ShortestPathSpec(3, ((0, 1), (1, 2), (2, 1)), source=0, dest=2)
    with pytest.raises(InfeasibleError):
        bellman_ford_oracle(spec, [1.0, -2.0, 1.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1), st.integers(2, 5), st.integers(2, 5))
def test_dijkstra_matches_bellman_ford_on_grid(seed, rows, cols):
    rng = np.random.default_rng(seed)
    spec = grid_graph(rows, cols)
    w = rng.uniform(0, 5, spec.n_edges)
    path, cost = dijkstra_oracle(spec, w)
    assert cost == pytest.approx(bellman_ford(spec.n_nodes, spec.edges, w, 0, spec.dest))
    # the returned edge list is a path from source to destination
    node = spec.source
    for e in path:
        assert spec.edges[e][0] == node
        node = spec.edges[e][1]
    assert node == spec.dest


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_negative_weights_on_dag_use_bellman_ford(seed):
    rng = np.random.default_rng(seed)
    spec = random_dag(8, 16, rng)
    w = rng.uniform(-2, 3, spec.n_edges)
    _, cost = shortest_path(spec, w)
    assert cost == pytest.approx(bellman_ford(8, spec.edges, w, 0, 7))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_lp_relaxation_is_integral_on_dags(seed):
    rng = np.random.default_rng(seed)
    spec = random_dag(10, 22, rng)
    w = rng.uniform(0.1, 5, spec.n_edges)
    out = solve_problem(shortestpath_to_lp(spec, w), EXACT)
    _, cost = dijkstra_oracle(spec, w)
    assert out.objective == pytest.approx(cost, rel=1e-5)


def test_supply_override_changes_endpoints():
    spec = grid_graph(2, 2)
    b = spec.supply(1, 3)
    task = Task("shortestpath", spec)
    x = task.oracle(np.ones(spec.n_edges), b)
    assert x.sum() == 1.0 and spec.edges[int(np.argmax(x))] == (1, 3)


def test_reachable_pairs_on_chain():
    spec = ShortestPathSpec(3, ((0, 1), (1, 2)))
    assert reachable_pairs(spec) == [(0, 1), (0, 2), (1, 2)]


# -------------------------------------------------------------- scheduling

def _sched(**kw):
    base = dict(duration=(1,), earliest=(0,), latest=(2,), power=(1.0,), usage=((1.0,),),
                capacity=((1.0,),), n_slots=2)
    base.update(kw)
    return SchedulingSpec(**base)


def test_scheduling_single_task():
    spec = _sched()
    assert scheduling_variables(spec) == [(0, 0, 0), (0, 0, 1)]
    p = scheduling_to_lp(spec, [1.0, 2.0])
    assert p.A_eq.shape == (1, 2)
    assert p.A_ub.shape[0] == 0


def test_capacity_zero_machine_eliminated():
    spec = _sched(capacity=((0.0,), (1.0,)))
    assert all(m == 1 for _, m, _ in scheduling_variables(spec))


def test_empty_window_is_infeasible():
    with pytest.raises(InfeasibleError):
        _sched(duration=(3,), latest=(2,))


def test_no_machine_fits():
    with pytest.raises(InfeasibleError):
        scheduling_variables(_sched(usage=((2.0,),)))


def _toy_schedule():
    return SchedulingSpec(duration=(2, 1, 2), earliest=(0, 0, 1), latest=(6, 4, 6),
                          power=(1.0, 2.0, 1.5), usage=((2.0,), (1.0,), (1.0,)),
                          capacity=((2.0,), (2.0,)), n_slots=6)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_scheduling_relaxation_bounds_enumeration(seed):
    spec = _toy_schedule()
    prices = np.random.default_rng(seed).uniform(0.1, 3, 6)
    task = Task("scheduling", spec)
    lp_val = solve_problem(task.problem(prices), EXACT).objective
    _, best = scheduling_oracle(spec, prices)
    assert lp_val <= best + 1e-6


def test_scheduling_oracle_matches_brute_force():
    rng = np.random.default_rng(0)
    spec = SchedulingSpec(duration=(2, 1, 1), earliest=(0, 0, 1), latest=(4, 3, 4),
                          power=(1.0, 2.0, 1.5), usage=((2.0,), (1.0,), (2.0,)),
                          capacity=((2.0,), (2.0,)), n_slots=4)
    for _ in range(5):
        prices = rng.uniform(0.1, 3, 4)
        p = scheduling_to_lp(spec, prices)
        assert p.n_vars <= 20
        x_bf, val_bf = brute_force_milp(p)
        x, val = scheduling_oracle(spec, prices)
        assert val == pytest.approx(val_bf)


def test_scheduling_binding_rows_kept():
    # two tasks that both need the full capacity of the only machine
    spec = SchedulingSpec(duration=(1, 1), earliest=(0, 0), latest=(2, 2), power=(1.0, 1.0),
                          usage=((1.0,), (1.0,)), capacity=((1.0,),), n_slots=2)
    p = scheduling_to_lp(spec, [1.0, 5.0])
    assert p.A_ub.shape[0] == 2
    x, val = scheduling_oracle(spec, [1.0, 5.0])
    assert val == 6.0


# -------------------------------------------------------------- generators

def test_generators_are_deterministic(tmp_path):
    for gen in (gen_shortestpath_dataset, gen_knapsack_dataset, gen_scheduling_dataset):
        paths = []
        for run in range(2):
            ds, task = gen(n_instances=5, seed=3)
            path = tmp_path / f"{gen.__name__}{run}.jsonl"
            save_dataset(ds, task, path)
            paths.append(path)
        assert paths[0].read_bytes() == paths[1].read_bytes()


def test_zero_noise_regeneration_identical_weights():
    a, _ = gen_shortestpath_dataset(n_instances=4, noise=0.0, seed=1)
    b, _ = gen_shortestpath_dataset(n_instances=4, noise=0.0, seed=1)
    for x, y in zip(a.instances, b.instances):
        np.testing.assert_array_equal(x.c, y.c)


def test_zero_noise_weight_is_function_of_features():
    ds, _ = gen_shortestpath_dataset(n_instances=30, graph="grid", rows=3, cols=3,
                                     noise=0.0, seed=2)
    # same feature row must give the same weight within and across instances
    Z = np.vstack([i.z for i in ds.instances])
    C = np.concatenate([i.c for i in ds.instances])
    key = {tuple(z): c for z, c in zip(Z, C)}
    assert all(key[tuple(z)] == c for z, c in zip(Z, C))


def test_full_budget_gives_zero_regret_for_any_prediction():
    ds, task = gen_knapsack_dataset(n_instances=5, budget_fraction=1.0, seed=0)
    rng = np.random.default_rng(0)
    for inst in ds.instances:
        x_hat = task.oracle(rng.uniform(0.1, 1, inst.c.size))
        x_star = task.oracle(inst.c)
        np.testing.assert_array_equal(x_hat, x_star)


def test_dataset_roundtrip_and_split(tmp_path):
    ds, task = gen_shortestpath_dataset(n_instances=6, seed=0)
    path = tmp_path / "d.jsonl"
    save_dataset(ds, task, path)
    ds2, task2 = load_dataset(path)
    assert task2.kind == "shortestpath" and task2.spec == task.spec
    for a, b in zip(ds.instances, ds2.instances):
        np.testing.assert_array_equal(a.z, b.z)
        np.testing.assert_array_equal(a.c, b.c)
        np.testing.assert_array_equal(a.b, b.b)
    tr, te = ds.split([4, 2])
    assert len(tr) == 4 and len(te) == 2
    with pytest.raises(ValueError):
        ds.split([5, 5])


def test_task_problem_matches_prepared_shape():
    ds, task = gen_knapsack_dataset(n_instances=2, n_items=6, seed=0)
    lp, _ = prepare(task.problem(ds[0].c))
    assert lp.k == 6 + 7


def test_random_dag_rejects_bad_edge_counts():
    with pytest.raises(Exception):
        random_dag(5, 2, np.random.default_rng(0))
