"""Experiment orchestration: grids over (loss, seed), accounting, reports.

Each grid cell is fully self-contained: it builds its own problem oracle and
dataset from the cell seed, precomputes exactly the caches its loss needs
(counting the solver calls spent), trains, and evaluates test regret. Solver
calls are attributed to four phases:

  precompute_n_star     optimal decisions filled in for train/val instances
  precompute_ranges     one relaxed LP solve per instance needing ranges
  instance_cost_solves  regret evaluations behind per-instance weights
  training_solves       oracle calls made by the loss during epochs

Test-set evaluation happens after the pipeline and is excluded from these
counters (it is identical for every loss). Reports merge in (loss, seed)
order regardless of worker scheduling, so re-running a config reproduces
results exactly; wall-clock columns can be zeroed via ``deterministic_output``
to make the CSV byte-identical across runs.
"""
from __future__ import annotations

import csv
import itertools
import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .core import Dataset, Sense, normalized_regret, total_regret
from .datagen import GenSpec, generate
from .errors import CosdflError
from .instance_costs import (apply_instance_costs, baseline_regrets,
                             compute_instance_costs)
from .losses import LossSpec, normalize, parse_loss
from .model import LinearModel, Optimizer, TrainConfig, init_model, train
from .problems import ProblemOracle, problem_from_name
from .simplex import LinearProgram, SolveStatus, cost_ranging, relax, solve_lp

THREADS_ENV = "COSDFL_THREADS"
PARETO_TIME_BAND_S = 30.0


# --- cache attachment --------------------------------------------------------

def attach_decisions(dataset: Dataset, problem: ProblemOracle,
                     splits: tuple[str, ...] = ("train", "val")) -> Dataset:
    """Fill in missing optimal decisions; one solve per uncached instance."""
    updates = {}
    for split in splits:
        for i in dataset.split.part(split):
            inst = dataset.instances[i]
            if inst.optimal_decision is None:
                updates[i] = inst.with_decision(problem.solve(inst.true_costs))
    return dataset.with_replaced(updates)


def attach_ranges(dataset: Dataset, problem: ProblemOracle,
                  splits: tuple[str, ...] = ("train", "val"),
                  normalized: bool = False) -> tuple[Dataset, int]:
    """Attach objective-coefficient ranges from the problem's LP relaxation.

    With ``normalized`` the ranging objective is the unit-norm cost vector,
    which is what scale-invariant losses must mask against. Returns the
    updated dataset and the number of LP solves spent.
    """
    lp = relax(problem)
    updates = {}
    solves = 0
    for split in splits:
        for i in dataset.split.part(split):
            inst = dataset.instances[i]
            if inst.sensitivity_ranges is not None:
                continue
            objective = normalize(inst.true_costs) if normalized else inst.true_costs
            solution = solve_lp(lp.with_objective(objective))
            solves += 1
            if solution.status is not SolveStatus.OPTIMAL:
                raise CosdflError(f"relaxation solve for instance {i} returned "
                                  f"{solution.status.value}")
            updates[i] = inst.with_ranges(cost_ranging(lp.with_objective(objective),
                                                       solution))
    return dataset.with_replaced(updates), solves


# --- configuration and reports ------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    problem: str
    losses: tuple[str, ...]
    seeds: tuple[int, ...]
    n_train: int = 200
    n_val: int = 50
    n_test: int = 150
    k: int = 5
    deg: int = 6
    noise_width: float = 0.5
    learning_rate: float = 0.005
    epochs: int = 50
    batch_size: int = 32
    optimizer: str = "adam"
    normalize_against: str = "mse"
    deterministic_output: bool = False
    threads: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "losses", tuple(self.losses))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        for loss in self.losses:
            parse_loss(loss)  # fail fast on typos

    def gen_spec(self, seed: int) -> GenSpec:
        return GenSpec(n_train=self.n_train, n_val=self.n_val, n_test=self.n_test,
                       k=self.k, deg=self.deg, noise_width=self.noise_width,
                       seed=seed)

    def train_config(self, seed: int) -> TrainConfig:
        return TrainConfig(learning_rate=self.learning_rate, epochs=self.epochs,
                           batch_size=self.batch_size,
                           optimizer=Optimizer(self.optimizer), seed=seed)

    def to_dict(self) -> dict:
        return {
            "problem": self.problem, "losses": list(self.losses),
            "seeds": list(self.seeds), "n_train": self.n_train,
            "n_val": self.n_val, "n_test": self.n_test, "k": self.k,
            "deg": self.deg, "noise_width": self.noise_width,
            "learning_rate": self.learning_rate, "epochs": self.epochs,
            "batch_size": self.batch_size, "optimizer": self.optimizer,
            "normalize_against": self.normalize_against,
            "deterministic_output": self.deterministic_output,
            "threads": self.threads,
        }

    @staticmethod
    def from_dict(payload: dict) -> "ExperimentConfig":
        return ExperimentConfig(**payload)


@dataclass
class SolveCounts:
    precompute_n_star: int = 0
    precompute_ranges: int = 0
    instance_cost_solves: int = 0
    training_solves: int = 0

    @property
    def pre_total(self) -> int:
        """Everything spent before the epochs start."""
        return self.precompute_n_star + self.precompute_ranges + self.instance_cost_solves

    def to_dict(self) -> dict:
        return {"precompute_n_star": self.precompute_n_star,
                "precompute_ranges": self.precompute_ranges,
                "instance_cost_solves": self.instance_cost_solves,
                "training_solves": self.training_solves}


@dataclass
class RunReport:
    problem: str
    loss: str
    seed: int
    regret_abs: float
    regret_norm: float | None
    time_s: float
    counts: SolveCounts
    exact: bool
    best_val_loss: float = float("nan")
    error: str | None = None


# --- single grid cell ----------------------------------------------------------

def prepare_dataset(problem: ProblemOracle, dataset: Dataset, spec: LossSpec,
                    train_cfg: TrainConfig, k: int,
                    counts: SolveCounts | None = None):
    """Attach every cache the loss needs, spending and attributing solver calls.

    Fills optimal decisions and sensitivity ranges where required, and for
    instance-weighted or regret-weighted specs trains the corresponding
    baseline model and derives the per-instance weights. Returns the prepared
    dataset, the counts object, and the weight report (or None).
    """
    counter = problem.counter
    if counts is None:
        counts = SolveCounts()
    report = None

    # decisions: masks and spo+ need them on everything touched in epochs and
    # validation; instance weighting needs them on train for regret evaluation
    decision_splits = []
    if spec.requires_decisions or spec.requires_instance_cost or spec.requires_baseline_regret:
        decision_splits.append("train")
    if spec.requires_decisions:
        decision_splits.append("val")
    if decision_splits:
        before = counter.count
        dataset = attach_decisions(dataset, problem, tuple(decision_splits))
        counts.precompute_n_star += counter.count - before

    if spec.requires_ranges:
        dataset, lp_solves = attach_ranges(dataset, problem, ("train", "val"),
                                           normalized=spec.scale_invariant)
        counts.precompute_ranges += lp_solves

    if spec.requires_instance_cost:
        base_spec = replace(spec, instance_costs=False)
        base_trace = train(init_model(k, problem.d, seed=train_cfg.seed), dataset,
                           base_spec, train_cfg, sense=problem.sense)
        before = counter.count
        report = compute_instance_costs(problem, base_trace.best_model, dataset, base_spec)
        dataset = apply_instance_costs(dataset, report.costs)
        counts.instance_cost_solves += counter.count - before
    elif spec.requires_baseline_regret:
        base_spec = LossSpec(base=spec.base)
        base_trace = train(init_model(k, problem.d, seed=train_cfg.seed), dataset,
                           base_spec, train_cfg, sense=problem.sense)
        before = counter.count
        regs = baseline_regrets(problem, base_trace.best_model, dataset)
        dataset = apply_instance_costs(dataset, regs)
        counts.instance_cost_solves += counter.count - before
    return dataset, counts, report


def run_single(config: ExperimentConfig, loss: str, seed: int) -> RunReport:
    """One (loss, seed) cell: generate, precompute, train, evaluate."""
    problem = problem_from_name(config.problem, seed=seed)
    spec = parse_loss(loss)
    counter = problem.counter
    dataset = generate(config.gen_spec(seed), problem, cache_decisions=False)
    counter.reset()  # generation is not part of the pipeline accounting
    train_cfg = config.train_config(seed)
    t0 = time.perf_counter()

    dataset, counts, _ = prepare_dataset(problem, dataset, spec, train_cfg, config.k)

    before = counter.count
    trace = train(init_model(config.k, problem.d, seed=seed), dataset, spec,
                  train_cfg, problem=problem if spec.spo_plus else None,
                  sense=problem.sense)
    counts.training_solves = counter.count - before

    regret_abs = total_regret(problem, trace.best_model, dataset, split="test")
    elapsed = time.perf_counter() - t0
    return RunReport(problem=config.problem, loss=loss, seed=seed,
                     regret_abs=regret_abs, regret_norm=None, time_s=elapsed,
                     counts=counts, exact=problem.exact,
                     best_val_loss=trace.best_val_loss)


# --- the grid -------------------------------------------------------------------

def _worker_count(config: ExperimentConfig, n_cells: int) -> int:
    if config.threads is not None:
        workers = config.threads
    else:
        workers = int(os.environ.get(THREADS_ENV, "1"))
    return max(1, min(workers, n_cells))


def run_experiment(config: ExperimentConfig) -> list[RunReport]:
    """Run the full grid; reports come back sorted by (loss, seed).

    Failures in individual cells are captured on the report rather than
    aborting the grid. Normalized regret divides each run's absolute regret
    by the same-seed run of ``config.normalize_against`` when that loss is
    part of the grid.
    """
    cells = list(itertools.product(config.losses, config.seeds))

    def cell(args) -> RunReport:
        loss, seed = args
        try:
            return run_single(config, loss, seed)
        except Exception as exc:  # noqa: BLE001 - reported, not swallowed
            return RunReport(problem=config.problem, loss=loss, seed=seed,
                             regret_abs=float("nan"), regret_norm=None,
                             time_s=float("nan"), counts=SolveCounts(),
                             exact=False, error=f"{type(exc).__name__}: {exc}")

    workers = _worker_count(config, len(cells))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(cell, cells))
    else:
        reports = [cell(c) for c in cells]
    reports.sort(key=lambda r: (r.loss, r.seed))

    baseline = {r.seed: r.regret_abs for r in reports
                if r.loss == config.normalize_against and r.error is None}
    for r in reports:
        if r.error is not None or r.seed not in baseline:
            continue
        base = baseline[r.seed]
        if base <= 0.0:
            r.regret_norm = 1.0 if r.regret_abs <= 0.0 else float("inf")
        else:
            r.regret_norm = r.regret_abs / base
    return reports


def mean_normalized_regret(reports: list[RunReport], loss: str) -> float:
    values = [r.regret_norm for r in reports if r.loss == loss and r.error is None
              and r.regret_norm is not None]
    if not values:
        return float("nan")
    return float(np.mean(values))


# --- output files ----------------------------------------------------------------

RESULTS_COLUMNS = ("problem", "loss", "seed", "regret_abs", "regret_norm",
                   "time_s", "solves_pre", "solves_train", "exact")


def write_results(reports: list[RunReport], out_dir,
                  deterministic_output: bool = False) -> Path:
    """Write results.csv (schema above) plus runs.json with full breakdowns."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "results.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(RESULTS_COLUMNS)
        for r in reports:
            time_s = 0.0 if deterministic_output else r.time_s
            writer.writerow([
                r.problem, r.loss, r.seed,
                repr(r.regret_abs),
                "" if r.regret_norm is None else repr(r.regret_norm),
                f"{time_s:.3f}",
                r.counts.pre_total, r.counts.training_solves,
                str(bool(r.exact)).lower(),
            ])
    with open(out / "runs.json", "w", encoding="utf-8") as fh:
        json.dump([{
            "problem": r.problem, "loss": r.loss, "seed": r.seed,
            "regret_abs": r.regret_abs, "regret_norm": r.regret_norm,
            "time_s": None if deterministic_output else r.time_s,
            "counts": r.counts.to_dict(), "exact": r.exact,
            "best_val_loss": r.best_val_loss, "error": r.error,
        } for r in reports], fh, indent=2)
    return path


def aggregate_rows(reports: list[RunReport]) -> list[dict]:
    rows = []
    for loss in sorted({r.loss for r in reports}):
        group = [r for r in reports if r.loss == loss and r.error is None]
        if not group:
            rows.append({"loss": loss, "n": 0})
            continue
        norms = [r.regret_norm for r in group if r.regret_norm is not None]
        rows.append({
            "loss": loss,
            "n": len(group),
            "regret_abs_mean": float(np.mean([r.regret_abs for r in group])),
            "regret_norm_mean": float(np.mean(norms)) if norms else None,
            "regret_norm_std": float(np.std(norms)) if norms else None,
            "time_s_mean": float(np.mean([r.time_s for r in group])),
            "exact": all(r.exact for r in group),
        })
    return rows


# --- pareto -----------------------------------------------------------------------

def pareto_flags(points: list[tuple[float, float]],
                 band_seconds: float = PARETO_TIME_BAND_S) -> list[bool]:
    """Flag (regret, runtime) points not dominated by any other point.

    Point j dominates i when it is no worse on both axes (runtimes within
    ``band_seconds`` count as equal) and strictly better on at least one:
    lower regret, or faster by more than the band.
    """
    flags = []
    for i, (reg_i, t_i) in enumerate(points):
        dominated = False
        for j, (reg_j, t_j) in enumerate(points):
            if i == j:
                continue
            if (reg_j <= reg_i and t_j <= t_i + band_seconds
                    and (reg_j < reg_i or t_j < t_i - band_seconds)):
                dominated = True
                break
        flags.append(not dominated)
    return flags


def emit_pareto(reports: list[RunReport], out_dir=None,
                band_seconds: float = PARETO_TIME_BAND_S) -> list[dict]:
    """Per-loss mean (regret, runtime) points with Pareto-optimality flags."""
    rows = [r for r in aggregate_rows(reports) if r.get("n", 0) > 0]
    points = [(row["regret_abs_mean"], row["time_s_mean"]) for row in rows]
    flags = pareto_flags(points, band_seconds)
    for row, flag in zip(rows, flags):
        row["pareto_optimal"] = flag
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "pareto.csv", "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["loss", "regret_abs_mean", "time_s_mean", "pareto_optimal"])
            for row in rows:
                writer.writerow([row["loss"], repr(row["regret_abs_mean"]),
                                 f"{row['time_s_mean']:.3f}",
                                 str(row["pareto_optimal"]).lower()])
    return rows


# --- component monotonicity --------------------------------------------------------

COMPONENT_ORDERS = tuple(itertools.permutations(("c", "o", "s")))


def _subset_name(base: str, subset: frozenset[str]) -> str:
    parts = [base] + [c for c in ("c", "o", "s") if c in subset]
    return "+".join(parts)


@dataclass(frozen=True)
class MonotonicityStep:
    order: str
    loss: str
    mean_norm: float
    previous_norm: float
    regression: bool


@dataclass(frozen=True)
class MonotonicityReport:
    base: str
    subset_means: dict[str, float]
    steps: tuple[MonotonicityStep, ...]
    tolerance: float

    @property
    def regressions(self) -> tuple[MonotonicityStep, ...]:
        return tuple(s for s in self.steps if s.regression)


def component_subset_losses(base: str) -> list[str]:
    """The eight loss names formed by adding subsets of c, o, s to a base."""
    subsets = [frozenset(s) for r in range(4)
               for s in itertools.combinations(("c", "o", "s"), r)]
    return [_subset_name(base, s) for s in subsets]


def build_monotonicity(subset_means: dict[str, float], base: str = "mse",
                       tolerance: float = 0.05) -> MonotonicityReport:
    """Walk every component addition order over precomputed subset means.

    ``subset_means`` must hold the mean normalized regret of all eight
    subsets of {c, o, s} over ``base``. Each subset is shared across the six
    orders, so the final value of every order is identical by construction.
    A step regresses when its mean exceeds the previous prefix's by more
    than the tolerance fraction.
    """
    steps = []
    for order in COMPONENT_ORDERS:
        prefix: frozenset[str] = frozenset()
        prev = subset_means[_subset_name(base, prefix)]
        for component in order:
            prefix = prefix | {component}
            name = _subset_name(base, prefix)
            mean = subset_means[name]
            steps.append(MonotonicityStep(
                order=">".join(order), loss=name, mean_norm=mean,
                previous_norm=prev, regression=bool(mean > prev * (1.0 + tolerance))))
            prev = mean
    return MonotonicityReport(base=base, subset_means=dict(subset_means),
                              steps=tuple(steps), tolerance=tolerance)


def monotonicity_report(config: ExperimentConfig, base: str = "mse",
                        tolerance: float = 0.05) -> tuple[MonotonicityReport, list[RunReport]]:
    """Run all component subsets and check every addition order."""
    losses = component_subset_losses(base)
    grid = replace(config, losses=tuple(losses), normalize_against=base)
    reports = run_experiment(grid)
    means = {loss: mean_normalized_regret(reports, loss) for loss in losses}
    return build_monotonicity(means, base=base, tolerance=tolerance), reports


def write_monotonicity(report: MonotonicityReport, out_dir) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "monotonicity.csv"
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["order", "loss", "mean_norm", "previous_norm", "regression"])
        for s in report.steps:
            writer.writerow([s.order, s.loss, repr(s.mean_norm),
                             repr(s.previous_norm), str(s.regression).lower()])
    return path


# --- LP ranging soundness (used by the sensitivity-check subcommand) ---------------

@dataclass(frozen=True)
class RangingFailure:
    trial: int
    coordinate: int
    point: float
    gap: float


def sensitivity_soundness_check(n_lps: int = 200, max_size: int = 8,
                                seed: int = 0) -> tuple[int, list[RangingFailure]]:
    """Solve random box-bounded LPs and verify their cost ranges.

    For every coordinate, the objective is re-solved at each finite range
    endpoint (and the midpoint when both are finite); the original decision
    vector must still be optimal there, i.e. its perturbed objective must
    match the re-solved optimum to 1e-7 relative tolerance. Returns the
    number of point checks performed and the list of failures.
    """
    rng = np.random.default_rng(seed)
    checks = 0
    failures: list[RangingFailure] = []
    for trial in range(n_lps):
        m = int(rng.integers(1, max_size + 1))
        d = int(rng.integers(1, max_size + 1))
        a = rng.uniform(0.1, 2.0, size=(m, d))
        b = rng.uniform(1.0, 6.0, size=m)
        c = rng.normal(0.0, 2.0, size=d)
        sense = Sense.MAXIMIZE if rng.random() < 0.5 else Sense.MINIMIZE
        upper = np.where(rng.random(d) < 0.5, rng.uniform(0.5, 3.0, size=d), np.inf)
        lp = LinearProgram(a, b, c, sense, np.zeros(d), upper)
        solution = solve_lp(lp)
        assert solution.status is SolveStatus.OPTIMAL, "random box LP must be solvable"
        ranges = cost_ranging(lp, solution)
        for j in range(d):
            points = []
            lo, hi = ranges.lower[j], ranges.upper[j]
            if np.isfinite(lo):
                points.append(lo)
            if np.isfinite(hi):
                points.append(hi)
            if np.isfinite(lo) and np.isfinite(hi):
                points.append(0.5 * (lo + hi))
            for point in points:
                perturbed = c.copy()
                perturbed[j] = point
                re_solved = solve_lp(lp.with_objective(perturbed))
                checks += 1
                original_value = float(perturbed @ solution.decision.values)
                gap = abs(original_value - re_solved.objective_value)
                if gap > 1e-7 * max(1.0, abs(re_solved.objective_value)):
                    failures.append(RangingFailure(trial, j, float(point), gap))
    return checks, failures
