import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cosdfl.core import Sense
from cosdfl.errors import ModeMismatch
from cosdfl.problems import (HELD_KARP_MAX_NODES, CallCounter, GridSpec,
                             KnapsackOracle, KnapsackSpec, ShortestPathOracle,
                             TspMode, TspOracle, TspSpec, load_problem,
                             make_grid, make_knapsack, make_tsp,
                             problem_from_name, save_problem, solve_knapsack,
                             solve_shortest_path, solve_tsp)

from brute import (brute_knapsack, brute_shortest_path, brute_tsp,
                   enumerate_grid_paths)


# --- knapsack ---------------------------------------------------------------

def test_knapsack_frozen_example():
    spec = KnapsackSpec(weights=np.array([[2.0, 3.0, 4.0, 5.0]]),
                        capacities=np.array([6.0]))
    x = solve_knapsack(spec, np.array([3.0, 4.0, 5.0, 6.0]))
    assert x.tolist() == [1.0, 0.0, 1.0, 0.0]  # {0,2}: weight 6, value 8
    x = solve_knapsack(spec, np.array([6.0, 5.0, 4.0, 3.0]))
    assert x.tolist() == [1.0, 1.0, 0.0, 0.0]  # {0,1}: weight 5, value 11


def test_knapsack_value_ties_break_lexicographically():
    spec = KnapsackSpec(weights=np.array([[1.0, 1.0]]), capacities=np.array([1.0]))
    x = solve_knapsack(spec, np.array([2.0, 2.0]))
    assert x.tolist() == [0.0, 1.0]  # (0,1) precedes (1,0)


def test_knapsack_ignores_nonpositive_costs():
    spec = KnapsackSpec(weights=np.array([[1.0, 1.0, 1.0]]),
                        capacities=np.array([3.0]))
    x = solve_knapsack(spec, np.array([-1.0, 0.0, 2.0]))
    assert x.tolist() == [0.0, 0.0, 1.0]


def test_knapsack_multidimensional_constraint():
    spec = KnapsackSpec(weights=np.array([[2.0, 3.0], [4.0, 1.0]]),
                        capacities=np.array([5.0, 4.0]))
    # {0,1} violates the second dimension (5 > 4); best single item wins
    x = solve_knapsack(spec, np.array([3.0, 4.0]))
    assert x.tolist() == [0.0, 1.0]


def test_knapsack_rejects_negative_weights():
    with pytest.raises(ValueError):
        KnapsackSpec(weights=np.array([[-1.0]]), capacities=np.array([1.0]))


@settings(max_examples=60)
@given(st.integers(0, 2 ** 32 - 1))
def test_knapsack_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(2, 11))
    q = int(rng.integers(1, 3))
    spec = KnapsackSpec(weights=rng.integers(1, 7, size=(q, d)).astype(float),
                        capacities=rng.integers(d, 3 * d, size=q).astype(float))
    # half-integer costs make exact value ties common, exercising lex order
    costs = rng.integers(0, 9, size=d) / 2.0
    x = solve_knapsack(spec, costs)
    x_brute, v_brute = brute_knapsack(spec.weights, spec.capacities, costs)
    assert float(costs @ x) == pytest.approx(v_brute, abs=1e-12)
    np.testing.assert_array_equal(x, x_brute)


# --- grid shortest path -----------------------------------------------------

def test_grid_arc_indexing_convention():
    spec = GridSpec(rows=2, cols=2)
    assert spec.d == 4
    assert spec.east_index(0, 0) == 0
    assert spec.east_index(1, 0) == 1
    assert spec.south_index(0, 0) == 2
    assert spec.south_index(0, 1) == 3


def test_grid_frozen_example():
    spec = GridSpec(rows=2, cols=2)
    x = solve_shortest_path(spec, np.array([1.0, 5.0, 2.0, 1.0]))
    assert x.tolist() == [1.0, 0.0, 0.0, 1.0]  # east then south, cost 2


def test_grid_tie_breaks_to_lex_smallest_indicator():
    spec = GridSpec(rows=2, cols=2)
    x = solve_shortest_path(spec, np.ones(4))
    assert x.tolist() == [0.0, 1.0, 1.0, 0.0]  # south-then-east precedes


def test_grid_handles_negative_costs():
    spec = GridSpec(rows=2, cols=2)
    x = solve_shortest_path(spec, np.array([-5.0, 1.0, 1.0, -5.0]))
    assert x.tolist() == [1.0, 0.0, 0.0, 1.0]  # cost -10 beats cost 2


def test_grid_path_count():
    assert len(enumerate_grid_paths(3, 3)) == 6
    assert len(enumerate_grid_paths(5, 5)) == 70


@settings(max_examples=60)
@given(st.integers(0, 2 ** 32 - 1))
def test_grid_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    rows = int(rng.integers(2, 5))
    cols = int(rng.integers(2, 5))
    spec = GridSpec(rows=rows, cols=cols)
    costs = rng.integers(-3, 10, size=spec.d).astype(float)
    x = solve_shortest_path(spec, costs)
    x_brute, v_brute = brute_shortest_path(rows, cols, costs)
    assert float(costs @ x) == pytest.approx(v_brute, abs=1e-12)
    np.testing.assert_array_equal(x, x_brute)


# --- tsp ----------------------------------------------------------------------

def test_tsp_frozen_unit_square():
    spec = TspSpec(n_nodes=4)
    # corners of the unit square; the perimeter tour (cost 4) is optimal
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    costs = np.array([np.linalg.norm(pts[i] - pts[j])
                      for i in range(4) for j in range(i + 1, 4)])
    x, exact = solve_tsp(spec, costs)
    assert exact
    assert x.tolist() == [1.0, 0.0, 1.0, 1.0, 0.0, 1.0]
    assert float(costs @ x) == pytest.approx(4.0)
    x_h, exact_h = solve_tsp(TspSpec(n_nodes=4, mode=TspMode.HEURISTIC), costs)
    assert not exact_h
    assert float(costs @ x_h) == pytest.approx(4.0)


def test_tsp_mode_limits():
    with pytest.raises(ModeMismatch):
        TspSpec(n_nodes=HELD_KARP_MAX_NODES + 1, mode=TspMode.EXACT)
    TspSpec(n_nodes=HELD_KARP_MAX_NODES + 1, mode=TspMode.HEURISTIC)
    with pytest.raises(ValueError):
        TspSpec(n_nodes=2)


@settings(max_examples=30)
@given(st.integers(0, 2 ** 32 - 1))
def test_tsp_exact_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, 8))
    spec = TspSpec(n_nodes=n)
    costs = rng.uniform(0.5, 10.0, size=spec.d)
    x, exact = solve_tsp(spec, costs)
    assert exact
    _, v_brute = brute_tsp(n, costs)
    assert float(costs @ x) == pytest.approx(v_brute, abs=1e-9)


@settings(max_examples=20)
@given(st.integers(0, 2 ** 32 - 1))
def test_tsp_heuristic_is_feasible_and_close(seed):
    rng = np.random.default_rng(seed)
    n = 7
    spec = TspSpec(n_nodes=n, mode=TspMode.HEURISTIC)
    # metric instances (random points) keep 2-opt quality predictable
    pts = rng.uniform(0.0, 1.0, size=(n, 2))
    costs = np.array([np.linalg.norm(pts[i] - pts[j])
                      for i in range(n) for j in range(i + 1, n)])
    x, exact = solve_tsp(spec, costs)
    assert not exact
    assert x.sum() == n
    _, v_brute = brute_tsp(n, costs)
    assert float(costs @ x) <= 1.25 * v_brute + 1e-9


# --- oracle wrappers and registry ----------------------------------------------

def test_oracle_counts_solves_and_checks_feasibility():
    oracle = KnapsackOracle(KnapsackSpec(weights=np.array([[1.0, 1.0]]),
                                         capacities=np.array([1.0])))
    assert oracle.counter.count == 0
    oracle.solve(np.array([1.0, 2.0]))
    oracle.solve(np.array([2.0, 1.0]))
    assert oracle.counter.count == 2
    oracle.counter.reset()
    assert oracle.counter.count == 0


def test_call_counter_is_thread_safe():
    counter = CallCounter()

    def bump():
        for _ in range(1000):
            counter.increment()

    threads = [threading.Thread(target=bump) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert counter.count == 8000


def test_problem_from_name_families():
    ks = problem_from_name("ks32", seed=0)
    assert isinstance(ks, KnapsackOracle)
    assert ks.d == 32 and ks.sense is Sense.MAXIMIZE
    assert ks.spec.weights.shape == (2, 32)
    assert np.all((ks.spec.weights >= 3) & (ks.spec.weights <= 8))
    assert np.all(ks.spec.capacities == 20.0)

    sp = problem_from_name("sp5x5", seed=0)
    assert isinstance(sp, ShortestPathOracle)
    assert sp.d == 40 and sp.sense is Sense.MINIMIZE

    small = problem_from_name("tsp8", seed=0)
    assert isinstance(small, TspOracle) and small.exact
    big = problem_from_name("tsp20", seed=0)
    assert not big.exact  # falls back to the heuristic above the DP limit

    with pytest.raises(ValueError):
        problem_from_name("mystery42", seed=0)


def test_problem_seeds_change_knapsack_weights():
    a = problem_from_name("ks16", seed=0)
    b = problem_from_name("ks16", seed=1)
    c = problem_from_name("ks16", seed=0)
    assert not np.array_equal(a.spec.weights, b.spec.weights)
    np.testing.assert_array_equal(a.spec.weights, c.spec.weights)


def test_problem_save_load_roundtrip(tmp_path):
    for name in ("ks8", "sp3x4", "tsp9"):
        problem = problem_from_name(name, seed=3)
        path = tmp_path / f"{name}.json"
        save_problem(problem, path)
        back = load_problem(path)
        assert type(back) is type(problem)
        assert back.d == problem.d
        if isinstance(problem, KnapsackOracle):
            np.testing.assert_array_equal(back.spec.weights, problem.spec.weights)
    custom = problem_from_name(f"custom:{tmp_path / 'ks8.json'}", seed=0)
    assert custom.d == 8


def test_make_helpers():
    assert make_knapsack(d=10, seed=1).d == 10
    assert make_grid(rows=3, cols=7).d == 3 * 6 + 2 * 7
    assert make_tsp(n_nodes=12).exact
    assert not make_tsp(n_nodes=14).exact
