"""Combinatorial problem oracles with deterministic tie-breaking.

Three families are shipped: multi-dimensional 0/1 knapsack (maximize),
shortest path on a directed grid (minimize), and symmetric TSP (minimize).
Each oracle solves exactly for a given cost vector, counts its calls, and
exposes a box-relaxed linear program for sensitivity analysis.

Knapsack and grid solvers break objective ties by returning the
lexicographically smallest decision vector, so repeated solves of tied
instances are reproducible. The exact TSP solver is deterministic via a
fixed dynamic-programming scan order (global lexicographic reconstruction
would need one extra DP per edge, which ties never justify in practice).
"""
from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import Decision, DecisionKind, Sense, as_vector, frozen_array
from .errors import DimensionMismatch, ModeMismatch
from .simplex import LinearProgram


class CallCounter:
    """Thread-safe monotone counter for oracle invocations."""

    def __init__(self) -> None:
        self._count = 0
        self._lock = threading.Lock()

    def increment(self) -> None:
        with self._lock:
            self._count += 1

    @property
    def count(self) -> int:
        with self._lock:
            return self._count

    def reset(self) -> None:
        with self._lock:
            self._count = 0


# --- knapsack ---------------------------------------------------------------

@dataclass(frozen=True)
class KnapsackSpec:
    """0/1 knapsack with q resource dimensions: maximize c'x, Wx <= cap."""

    weights: np.ndarray      # (q, d), non-negative
    capacities: np.ndarray   # (q,), non-negative

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 2:
            raise DimensionMismatch("weights must be a (q, d) matrix")
        cap = as_vector(self.capacities, name="capacities", length=w.shape[0])
        if np.any(w < 0) or np.any(cap < 0):
            raise ValueError("weights and capacities must be non-negative")
        w = w.copy()
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "capacities", frozen_array(cap))

    @property
    def d(self) -> int:
        return self.weights.shape[1]

    @property
    def q(self) -> int:
        return self.weights.shape[0]


def _knapsack_order(spec: KnapsackSpec, costs: np.ndarray) -> tuple[np.ndarray, int]:
    """Profitable items sorted by density on the tightest resource dimension."""
    load = spec.weights.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        pressure = np.where(spec.capacities > 0, load / np.maximum(spec.capacities, 1e-300), np.inf)
    tight = int(np.argmax(pressure))
    profitable = np.flatnonzero(costs > 0.0)
    w_tight = spec.weights[tight, profitable]
    density = np.where(w_tight > 0, costs[profitable] / np.maximum(w_tight, 1e-300), np.inf)
    order = profitable[np.lexsort((profitable, -density))]
    return order, tight


def _fractional_bound(costs, w_tight, order, start, remaining_tight) -> float:
    """Upper bound: fractional fill of the tightest dimension only."""
    bound = 0.0
    room = remaining_tight
    for j in order[start:]:
        w = w_tight[j]
        if w <= room:
            bound += costs[j]
            room -= w
        else:
            if room > 0 and w > 0:
                bound += costs[j] * (room / w)
            break
    return bound


def _knapsack_best_value(spec: KnapsackSpec, costs: np.ndarray) -> float:
    """Branch-and-bound (take-first on density order) for the optimal value."""
    order, tight = _knapsack_order(spec, costs)
    w_tight = spec.weights[tight]
    weights = spec.weights
    cap = spec.capacities
    # greedy incumbent primes the pruning bound
    best = 0.0
    rem = cap.copy()
    for j in order:
        if np.all(weights[:, j] <= rem):
            best += costs[j]
            rem -= weights[:, j]

    n = order.size
    stack = [(0, 0.0, cap.copy())]
    while stack:
        pos, value, rem = stack.pop()
        if value > best:
            best = value
        if pos >= n:
            continue
        bound = value + _fractional_bound(costs, w_tight, order, pos, rem[tight])
        if bound <= best + 1e-12 * max(1.0, abs(best)):
            continue
        j = order[pos]
        # skip branch pushed first so the take branch is explored first
        stack.append((pos + 1, value, rem))
        if np.all(weights[:, j] <= rem):
            stack.append((pos + 1, value + costs[j], rem - weights[:, j]))
    return best


def solve_knapsack(spec: KnapsackSpec, costs: np.ndarray) -> np.ndarray:
    """Optimal 0/1 selection; ties resolved to the lexicographically smallest.

    Two passes: branch-and-bound with a fractional-relaxation bound proves
    the optimal value, then a depth-first walk in index order (zero branch
    first) reconstructs the first -- i.e. lexicographically smallest --
    assignment that attains it. Items with non-positive cost are never taken:
    dropping one keeps feasibility, value, and lexicographic order.
    """
    costs = as_vector(costs, name="costs", length=spec.d)
    best = _knapsack_best_value(spec, costs)
    eps = 1e-9 * max(1.0, abs(best))
    d = spec.d
    x = np.zeros(d)
    if best <= eps:
        return x  # taking nothing is optimal and lexicographically smallest

    order, tight = _knapsack_order(spec, costs)
    w_tight = spec.weights[tight]
    weights = spec.weights
    order_pos = np.full(d, d, dtype=int)
    order_pos[order] = np.arange(order.size)

    def suffix_bound(j: int, rem_tight: float) -> float:
        bound = 0.0
        room = rem_tight
        for idx in order:
            if idx < j:
                continue
            w = w_tight[idx]
            if w <= room:
                bound += costs[idx]
                room -= w
            else:
                if room > 0 and w > 0:
                    bound += costs[idx] * (room / w)
                break
        return bound

    chosen: list[int] = []

    def walk(j: int, value: float, rem: np.ndarray) -> bool:
        if j == d:
            return value >= best - eps
        # zero branch first: prefixes are visited in lexicographic order
        if value + suffix_bound(j + 1, rem[tight]) >= best - eps:
            if walk(j + 1, value, rem):
                return True
        if costs[j] > 0.0 and np.all(weights[:, j] <= rem):
            take_value = value + costs[j]
            if take_value + suffix_bound(j + 1, rem[tight] - w_tight[j]) >= best - eps:
                chosen.append(j)
                if walk(j + 1, take_value, rem - weights[:, j]):
                    return True
                chosen.pop()
        return False

    if not walk(0, 0.0, spec.capacities.copy()):
        # the first pass proved this value is attainable, so the replay
        # cannot come up empty unless the bound arithmetic is inconsistent
        raise RuntimeError("knapsack reconstruction failed to reach the proven optimum")
    x[chosen] = 1.0
    return x


# --- grid shortest path -----------------------------------------------------

@dataclass(frozen=True)
class GridSpec:
    """Directed grid: east/south arcs from top-left to bottom-right."""

    rows: int
    cols: int

    def __post_init__(self):
        if self.rows < 2 or self.cols < 2:
            raise ValueError("grid needs at least 2 rows and 2 columns")

    @property
    def d(self) -> int:
        return self.rows * (self.cols - 1) + (self.rows - 1) * self.cols

    def east_index(self, r: int, c: int) -> int:
        """Arc (r, c) -> (r, c+1); east arcs come first, row-major."""
        return r * (self.cols - 1) + c

    def south_index(self, r: int, c: int) -> int:
        """Arc (r, c) -> (r+1, c); south arcs follow all east arcs, row-major."""
        return self.rows * (self.cols - 1) + r * self.cols + c


def _indicator_lex_less(a: tuple[int, ...], b: tuple[int, ...]) -> bool:
    """Compare arc sets as 0/1 indicator vectors; smaller set of the two wins
    at the first index contained in exactly one of them."""
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i] == b[j]:
            i += 1
            j += 1
        elif a[i] < b[j]:
            return False  # a has a 1 where b has 0 at an earlier index
        else:
            return True
    if j < len(b):
        return True  # b carries an extra (later) index
    return False


def solve_shortest_path(spec: GridSpec, costs: np.ndarray) -> np.ndarray:
    """Cheapest monotone path, ties to the lexicographically smallest arc set.

    Backward dynamic program in reverse topological order. Each node stores
    its optimal cost-to-sink and the tie-broken suffix arc set; prepending
    the (fresh) connecting arc preserves the indicator ordering, so local
    tie-breaking yields the global lexicographic minimum.
    """
    costs = as_vector(costs, name="costs", length=spec.d)
    R, C = spec.rows, spec.cols
    cost_to_go: dict[tuple[int, int], float] = {(R - 1, C - 1): 0.0}
    suffix: dict[tuple[int, int], tuple[int, ...]] = {(R - 1, C - 1): ()}
    for r in range(R - 1, -1, -1):
        for c in range(C - 1, -1, -1):
            if (r, c) == (R - 1, C - 1):
                continue
            best_cost = None
            best_set: tuple[int, ...] | None = None
            arcs = []
            if c + 1 < C:
                arcs.append((spec.east_index(r, c), (r, c + 1)))
            if r + 1 < R:
                arcs.append((spec.south_index(r, c), (r + 1, c)))
            for idx, nxt in arcs:
                cand_cost = costs[idx] + cost_to_go[nxt]
                cand_set = tuple(sorted((idx,) + suffix[nxt]))
                if (best_cost is None or cand_cost < best_cost or
                        (cand_cost == best_cost and _indicator_lex_less(cand_set, best_set))):
                    best_cost, best_set = cand_cost, cand_set
            cost_to_go[(r, c)] = best_cost
            suffix[(r, c)] = best_set
    x = np.zeros(spec.d)
    x[list(suffix[(0, 0)])] = 1.0
    return x


# --- travelling salesperson -------------------------------------------------

class TspMode(Enum):
    EXACT = "exact"
    HEURISTIC = "heuristic"


HELD_KARP_MAX_NODES = 13


@dataclass(frozen=True)
class TspSpec:
    """Symmetric TSP on a complete graph; costs index edges (i, j), i < j."""

    n_nodes: int
    mode: TspMode = TspMode.EXACT

    def __post_init__(self):
        if self.n_nodes < 3:
            raise ValueError("a tour needs at least 3 nodes")
        if self.mode is TspMode.EXACT and self.n_nodes > HELD_KARP_MAX_NODES:
            raise ModeMismatch(
                f"exact mode supports at most {HELD_KARP_MAX_NODES} nodes, "
                f"got {self.n_nodes}; use heuristic mode")

    @property
    def d(self) -> int:
        return self.n_nodes * (self.n_nodes - 1) // 2

    def edge_index(self, i: int, j: int) -> int:
        if i > j:
            i, j = j, i
        return i * self.n_nodes - i * (i + 1) // 2 + (j - i - 1)


def _edge_matrix(spec: TspSpec, costs: np.ndarray) -> np.ndarray:
    n = spec.n_nodes
    dist = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            dist[i, j] = dist[j, i] = costs[spec.edge_index(i, j)]
    return dist


def _tour_to_indicator(spec: TspSpec, tour: list[int]) -> np.ndarray:
    x = np.zeros(spec.d)
    for a, b in zip(tour, tour[1:] + tour[:1]):
        x[spec.edge_index(a, b)] = 1.0
    return x


def _held_karp(spec: TspSpec, dist: np.ndarray) -> list[int]:
    """Exact bitmask DP anchored at node 0; argmin scans use fixed order."""
    n = spec.n_nodes
    m = n - 1  # nodes 1..n-1 in mask coordinates
    full = 1 << m
    dp = np.full((full, m), np.inf)
    parent = np.full((full, m), -1, dtype=int)
    for i in range(m):
        dp[1 << i, i] = dist[0, i + 1]
    for mask in range(1, full):
        if mask & (mask - 1) == 0:
            continue
        members = [i for i in range(m) if mask & (1 << i)]
        for last in members:
            prev_mask = mask ^ (1 << last)
            cand = dp[prev_mask] + dist[1:, last + 1]
            cand[last] = np.inf
            keep = (prev_mask & (1 << np.arange(m))) != 0
            cand = np.where(keep, cand, np.inf)
            best = int(np.argmin(cand))
            dp[mask, last] = cand[best]
            parent[mask, last] = best
    closing = dp[full - 1] + dist[1:, 0]
    last = int(np.argmin(closing))
    tour = [0]
    mask = full - 1
    chain = []
    while last >= 0:
        chain.append(last + 1)
        nxt = parent[mask, last]
        mask ^= 1 << last
        last = nxt
    tour.extend(reversed(chain))
    return tour


def _nearest_neighbor_2opt(spec: TspSpec, dist: np.ndarray) -> list[int]:
    """Deterministic heuristic: best of all nearest-neighbor starts, then
    first-improvement 2-opt until locally optimal."""
    n = spec.n_nodes

    def tour_cost(tour: list[int]) -> float:
        return float(sum(dist[a, b] for a, b in zip(tour, tour[1:] + tour[:1])))

    best_tour: list[int] | None = None
    best_cost = np.inf
    for start in range(n):
        tour = [start]
        seen = {start}
        while len(tour) < n:
            here = tour[-1]
            nxt = min((dist[here, j], j) for j in range(n) if j not in seen)[1]
            tour.append(nxt)
            seen.add(nxt)
        cost = tour_cost(tour)
        if cost < best_cost - 1e-12:
            best_tour, best_cost = tour, cost
    tour = best_tour
    improved = True
    while improved:
        improved = False
        for i in range(n - 1):
            for j in range(i + 2, n):
                if i == 0 and j == n - 1:
                    continue  # reversing the whole tour changes nothing
                a, b = tour[i], tour[i + 1]
                c, e = tour[j], tour[(j + 1) % n]
                delta = dist[a, c] + dist[b, e] - dist[a, b] - dist[c, e]
                if delta < -1e-10:
                    tour[i + 1:j + 1] = reversed(tour[i + 1:j + 1])
                    improved = True
        # rescan from the top until a full sweep finds nothing
    # canonical orientation: start at node 0
    k = tour.index(0)
    return tour[k:] + tour[:k]


def solve_tsp(spec: TspSpec, costs: np.ndarray) -> tuple[np.ndarray, bool]:
    """Tour edge indicator plus a flag for whether the solve was exact."""
    costs = as_vector(costs, name="costs", length=spec.d)
    dist = _edge_matrix(spec, costs)
    if spec.mode is TspMode.EXACT:
        return _tour_to_indicator(spec, _held_karp(spec, dist)), True
    return _tour_to_indicator(spec, _nearest_neighbor_2opt(spec, dist)), False


# --- oracle wrappers --------------------------------------------------------

class ProblemOracle:
    """Base oracle: counts solves, checks feasibility, exposes the relaxation."""

    name: str = "problem"
    sense: Sense
    exact: bool = True

    def __init__(self) -> None:
        self.counter = CallCounter()

    @property
    def d(self) -> int:
        raise NotImplementedError

    def solve(self, costs: np.ndarray) -> Decision:
        self.counter.increment()
        decision = self._solve(np.asarray(costs, dtype=float))
        if __debug__:
            self._check_feasible(decision)
        return decision

    def _solve(self, costs: np.ndarray) -> Decision:
        raise NotImplementedError

    def _check_feasible(self, decision: Decision) -> None:
        pass

    def lp_form(self) -> LinearProgram:
        raise NotImplementedError


class KnapsackOracle(ProblemOracle):
    sense = Sense.MAXIMIZE

    def __init__(self, spec: KnapsackSpec, name: str = "knapsack") -> None:
        super().__init__()
        self.spec = spec
        self.name = name

    @property
    def d(self) -> int:
        return self.spec.d

    def _solve(self, costs: np.ndarray) -> Decision:
        return Decision(solve_knapsack(self.spec, costs))

    def _check_feasible(self, decision: Decision) -> None:
        used = self.spec.weights @ decision.values
        assert np.all(used <= self.spec.capacities + 1e-9), "knapsack capacity violated"

    def lp_form(self) -> LinearProgram:
        return LinearProgram(
            constraint_matrix=self.spec.weights,
            rhs=self.spec.capacities,
            objective=np.zeros(self.d),
            sense=Sense.MAXIMIZE,
            lower=np.zeros(self.d),
            upper=np.ones(self.d),
        )


class ShortestPathOracle(ProblemOracle):
    sense = Sense.MINIMIZE

    def __init__(self, spec: GridSpec, name: str = "shortest-path") -> None:
        super().__init__()
        self.spec = spec
        self.name = name

    @property
    def d(self) -> int:
        return self.spec.d

    def _solve(self, costs: np.ndarray) -> Decision:
        return Decision(solve_shortest_path(self.spec, costs))

    def _check_feasible(self, decision: Decision) -> None:
        spec = self.spec
        x = decision.values
        # unit flow out of the source, conservation elsewhere
        for r in range(spec.rows):
            for c in range(spec.cols):
                flow = 0.0
                if c + 1 < spec.cols:
                    flow += x[spec.east_index(r, c)]
                if r + 1 < spec.rows:
                    flow += x[spec.south_index(r, c)]
                if c > 0:
                    flow -= x[spec.east_index(r, c - 1)]
                if r > 0:
                    flow -= x[spec.south_index(r - 1, c)]
                expected = 1.0 if (r, c) == (0, 0) else (
                    -1.0 if (r, c) == (spec.rows - 1, spec.cols - 1) else 0.0)
                assert abs(flow - expected) <= 1e-9, "path flow conservation violated"

    def lp_form(self) -> LinearProgram:
        """Arc-flow relaxation: conservation rows as <=/>= pairs, sink dropped."""
        spec = self.spec
        d = spec.d
        rows = []
        rhs = []
        for r in range(spec.rows):
            for c in range(spec.cols):
                if (r, c) == (spec.rows - 1, spec.cols - 1):
                    continue  # redundant given the other balances
                row = np.zeros(d)
                if c + 1 < spec.cols:
                    row[spec.east_index(r, c)] = 1.0
                if r + 1 < spec.rows:
                    row[spec.south_index(r, c)] = 1.0
                if c > 0:
                    row[spec.east_index(r, c - 1)] = -1.0
                if r > 0:
                    row[spec.south_index(r - 1, c)] = -1.0
                supply = 1.0 if (r, c) == (0, 0) else 0.0
                rows.extend([row, -row])
                rhs.extend([supply, -supply])
        return LinearProgram(
            constraint_matrix=np.vstack(rows),
            rhs=np.array(rhs),
            objective=np.zeros(d),
            sense=Sense.MINIMIZE,
            lower=np.zeros(d),
            upper=np.ones(d),
        )


class TspOracle(ProblemOracle):
    sense = Sense.MINIMIZE

    def __init__(self, spec: TspSpec, name: str = "tsp") -> None:
        super().__init__()
        self.spec = spec
        self.name = name
        self.exact = spec.mode is TspMode.EXACT

    @property
    def d(self) -> int:
        return self.spec.d

    def _solve(self, costs: np.ndarray) -> Decision:
        x, _ = solve_tsp(self.spec, costs)
        return Decision(x)

    def _check_feasible(self, decision: Decision) -> None:
        spec = self.spec
        x = decision.values
        assert x.sum() == spec.n_nodes, "tour must use exactly n edges"
        for v in range(spec.n_nodes):
            degree = sum(x[spec.edge_index(v, u)] for u in range(spec.n_nodes) if u != v)
            assert degree == 2.0, "every node must have tour degree 2"

    def lp_form(self) -> LinearProgram:
        """Degree-2 relaxation: each node touches exactly two fractional edges."""
        spec = self.spec
        d = spec.d
        rows = []
        rhs = []
        for v in range(spec.n_nodes):
            row = np.zeros(d)
            for u in range(spec.n_nodes):
                if u != v:
                    row[spec.edge_index(v, u)] = 1.0
            rows.extend([row, -row])
            rhs.extend([2.0, -2.0])
        return LinearProgram(
            constraint_matrix=np.vstack(rows),
            rhs=np.array(rhs),
            objective=np.zeros(d),
            sense=Sense.MINIMIZE,
            lower=np.zeros(d),
            upper=np.ones(d),
        )


# --- registry ---------------------------------------------------------------

KNAPSACK_WEIGHT_CHOICES = np.arange(3, 9)  # integer weights drawn from {3..8}
KNAPSACK_CAPACITY = 20.0
KNAPSACK_DIMS = 2


def make_knapsack(d: int, seed: int, q: int = KNAPSACK_DIMS,
                  capacity: float = KNAPSACK_CAPACITY) -> KnapsackOracle:
    rng = np.random.default_rng(seed)
    weights = rng.choice(KNAPSACK_WEIGHT_CHOICES, size=(q, d)).astype(float)
    spec = KnapsackSpec(weights=weights, capacities=np.full(q, capacity))
    return KnapsackOracle(spec, name=f"ks{d}")


def make_grid(rows: int, cols: int) -> ShortestPathOracle:
    return ShortestPathOracle(GridSpec(rows, cols), name=f"sp{rows}x{cols}")


def make_tsp(n_nodes: int) -> TspOracle:
    mode = TspMode.EXACT if n_nodes <= HELD_KARP_MAX_NODES else TspMode.HEURISTIC
    return TspOracle(TspSpec(n_nodes, mode), name=f"tsp{n_nodes}")


_KS_RE = re.compile(r"^ks(\d+)$")
_SP_RE = re.compile(r"^sp(\d+)x(\d+)$")
_TSP_RE = re.compile(r"^tsp(\d+)$")


def problem_from_name(name: str, seed: int = 0) -> ProblemOracle:
    """Build an oracle from a short name (ks32, sp5x5, tsp20, custom:<file>).

    The seed only matters for knapsack, whose weights are sampled once per
    problem instance.
    """
    if name.startswith("custom:"):
        return load_problem(name.split(":", 1)[1], seed=seed)
    if (m := _KS_RE.match(name)):
        return make_knapsack(int(m.group(1)), seed=seed)
    if (m := _SP_RE.match(name)):
        return make_grid(int(m.group(1)), int(m.group(2)))
    if (m := _TSP_RE.match(name)):
        return make_tsp(int(m.group(1)))
    raise ValueError(f"unknown problem name {name!r}; "
                     "expected ks<d>, sp<r>x<c>, tsp<n>, or custom:<file>")


def problem_to_dict(problem: ProblemOracle, seed: int = 0) -> dict:
    if isinstance(problem, KnapsackOracle):
        return {"family": "knapsack", "seed": seed,
                "params": {"weights": problem.spec.weights.tolist(),
                           "capacities": problem.spec.capacities.tolist()}}
    if isinstance(problem, ShortestPathOracle):
        return {"family": "shortest-path", "seed": seed,
                "params": {"rows": problem.spec.rows, "cols": problem.spec.cols}}
    if isinstance(problem, TspOracle):
        return {"family": "tsp", "seed": seed,
                "params": {"n_nodes": problem.spec.n_nodes,
                           "mode": problem.spec.mode.value}}
    raise ValueError(f"cannot serialize problem of type {type(problem).__name__}")


def problem_from_dict(payload: dict, seed: int = 0) -> ProblemOracle:
    family = payload["family"]
    params = payload.get("params", {})
    if family == "knapsack":
        if "weights" in params:
            spec = KnapsackSpec(np.asarray(params["weights"], dtype=float),
                                np.asarray(params["capacities"], dtype=float))
            return KnapsackOracle(spec, name=f"ks{spec.d}")
        return make_knapsack(int(params["d"]), seed=int(payload.get("seed", seed)),
                             q=int(params.get("q", KNAPSACK_DIMS)),
                             capacity=float(params.get("capacity", KNAPSACK_CAPACITY)))
    if family == "shortest-path":
        return make_grid(int(params["rows"]), int(params["cols"]))
    if family == "tsp":
        n = int(params["n_nodes"])
        mode = TspMode(params.get("mode", "exact" if n <= HELD_KARP_MAX_NODES else "heuristic"))
        return TspOracle(TspSpec(n, mode), name=f"tsp{n}")
    raise ValueError(f"unknown problem family {family!r}")


def save_problem(problem: ProblemOracle, path, seed: int = 0) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(problem_to_dict(problem, seed=seed), fh)


def load_problem(path, seed: int = 0) -> ProblemOracle:
    with open(path, "r", encoding="utf-8") as fh:
        return problem_from_dict(json.load(fh), seed=seed)
