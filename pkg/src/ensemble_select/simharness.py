"""Synthetic instances, simulated query streams and budget sweeps.

A sweep plans every (instance, budget, method) cell, pushes the instance's
queries through the runtime, and reports mean accuracy and spend per
(budget, method). Each cell draws its randomness from (seed, instance,
budget, method), and rows are sorted before writing, so a sweep file is
byte-identical across reruns with the same seed.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from ensemble_select._seeding import derive_seed, make_rng
from ensemble_select.catalog import ClassProfile, SelectionProblem
from ensemble_select.correctness import (
    MonteCarloEvaluator,
    PAEstimate,
    required_samples,
)
from ensemble_select.errors import ValidationError
from ensemble_select.runtime import SimulatedBackend, adaptive_run, full_run
from ensemble_select.selection import (
    Diagnostics,
    SelectionPlan,
    _greedy_indices,
    best_feasible_single,
    surrogate_greedy,
)

DEFAULT_BUDGETS = (1e-5, 5e-5, 1e-4, 5e-4, 1e-3)
METHODS = ("thrift", "surgreedy_full", "greedy", "best_single", "random_feasible")
SWEEP_HEADER = ("budget", "method", "accuracy", "mean_spent", "mean_saved", "instances", "queries")


@dataclass(frozen=True)
class InstanceSpec:
    seed: int = 0
    l_range: tuple[int, int] = (4, 8)
    k_range: tuple[int, int] = (2, 4)
    p_range: tuple[float, float] = (0.55, 0.9)
    cost_range: tuple[float, float] = (5e-6, 2e-4)
    n_queries: int = 200
    instances: int = 6

    def __post_init__(self):
        for name in ("l_range", "k_range", "p_range", "cost_range"):
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValidationError(f"{name} is empty: {lo} > {hi}")
            object.__setattr__(self, name, (lo, hi))
        if self.l_range[0] < 1 or self.k_range[0] < 2:
            raise ValidationError("need at least 1 model and 2 classes")
        if not (0 < self.p_range[0] and self.p_range[1] < 1):
            raise ValidationError("p_range must lie inside (0, 1)")
        if self.cost_range[0] <= 0:
            raise ValidationError("costs must be positive")
        if self.n_queries < 0 or self.instances < 0:
            raise ValidationError("counts must be non-negative")

    @classmethod
    def from_json(cls, path) -> "InstanceSpec":
        raw = json.loads(Path(path).read_text())
        unknown = set(raw) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown instance spec keys: {sorted(unknown)}")
        for key in ("l_range", "k_range", "p_range", "cost_range"):
            if key in raw:
                raw[key] = tuple(raw[key])
        return cls(**raw)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


@dataclass(frozen=True)
class Instance:
    profile: ClassProfile
    truths: dict[str, int] = field(hash=False)
    index: int = 0

    def problem(self, budget: float) -> SelectionProblem:
        return SelectionProblem(self.profile, budget)

    @property
    def query_ids(self) -> list[str]:
        return list(self.truths)


@dataclass(frozen=True)
class SweepRow:
    budget: float
    method: str
    accuracy: float
    mean_spent: float
    mean_saved: float
    instances: int
    queries: int


def gen_instance(spec: InstanceSpec, index: int = 0) -> Instance:
    rng = make_rng(spec.seed, "instance", index)
    L = int(rng.integers(spec.l_range[0], spec.l_range[1] + 1))
    K = int(rng.integers(spec.k_range[0], spec.k_range[1] + 1))
    probs = rng.uniform(*spec.p_range, size=L)
    costs = rng.uniform(*spec.cost_range, size=L)
    profile = ClassProfile.from_lists(K, probs, costs, [f"m{i}" for i in range(L)])
    truths = {f"q{j}": int(t) for j, t in enumerate(rng.integers(0, K, size=spec.n_queries))}
    return Instance(profile, truths, index)


def gen_instances(spec: InstanceSpec) -> list[Instance]:
    return [gen_instance(spec, i) for i in range(spec.instances)]


def _fixed_plan(problem: SelectionProblem, chosen: Sequence[int], pa: MonteCarloEvaluator,
                star: int) -> SelectionPlan:
    prof = problem.profile
    est = pa.estimate(chosen) if chosen else PAEstimate(0.0, "monte_carlo", pa.samples, pa.seed)
    diag = Diagnostics((), (), prof.model_ids[star], float(prof.probs[star]), 0.0, 0.0, 0.0, 0.0)
    return SelectionPlan(prof.ids_for(chosen), prof.total_cost(chosen), problem.budget, est, diag)


def plan_for_method(method: str, problem: SelectionProblem, epsilon: float, delta: float,
                    seed: int) -> SelectionPlan | None:
    """Plan for one sweep method, or None when nothing is affordable."""
    prof = problem.profile
    star = best_feasible_single(problem)
    if star is None:
        return None
    theta = required_samples(epsilon, delta, float(prof.probs[star]), len(prof))
    pa = MonteCarloEvaluator(prof, theta, seed)
    if method in ("thrift", "surgreedy_full"):
        return surrogate_greedy(problem, pa)
    if method == "greedy":
        chosen = _greedy_indices(problem, pa)
    elif method == "best_single":
        chosen = [star]
    elif method == "random_feasible":
        rng = make_rng(seed, "random_feasible")
        chosen = []
        for i in rng.permutation(len(prof)):
            if prof.total_cost(chosen + [int(i)]) <= problem.budget:
                chosen.append(int(i))
    else:
        raise ValidationError(f"unknown method {method!r}")
    return _fixed_plan(problem, chosen, pa, star)


@dataclass
class _Cell:
    correct: int = 0
    spent: list = field(default_factory=list)
    saved: list = field(default_factory=list)
    instances: int = 0


def run_sweep(instances: Iterable[Instance], budgets: Sequence[float],
              methods: Sequence[str] = METHODS, seed: int = 0, epsilon: float = 0.1,
              delta: float = 0.01) -> list[SweepRow]:
    """Accuracy and spend per (budget, method) across all instances.

    Raises ``AssertionError`` if any query spends more than its budget.
    Thrift and the full-plan variant share one plan per cell, so their
    accuracies are directly comparable.
    """
    if not budgets:
        raise ValidationError("budget list is empty")
    for m in methods:
        if m not in METHODS:
            raise ValidationError(f"unknown method {m!r}")
    cells: dict[tuple[float, str], _Cell] = {}
    instances = list(instances)
    for inst in instances:
        backend = SimulatedBackend(inst.profile, inst.truths, seed=_cell_seed(seed, inst.index))
        for bi, budget in enumerate(budgets):
            problem = inst.problem(budget)
            plan_seed = _cell_seed(seed, inst.index, bi)
            shared = plan_for_method("thrift", problem, epsilon, delta, plan_seed)
            for method in methods:
                cell = cells.setdefault((budget, method), _Cell())
                cell.instances += 1
                if method in ("thrift", "surgreedy_full"):
                    plan = shared
                else:
                    plan = plan_for_method(method, problem, epsilon, delta, plan_seed)
                # thrift and surgreedy_full share tie-breaking streams so their
                # predictions agree query by query
                shared_run = method in ("thrift", "surgreedy_full")
                run_seed = _cell_seed(seed, inst.index, bi, "shared" if shared_run else method)
                _simulate(cell, inst, plan, backend, method, run_seed, budget)
    rows = []
    for (budget, method), c in cells.items():
        n = len(c.spent)
        rows.append(SweepRow(budget, method, c.correct / n if n else 0.0,
                             math.fsum(c.spent) / n if n else 0.0,
                             math.fsum(c.saved) / n if n else 0.0, c.instances, n))
    rows.sort(key=lambda r: (r.budget, METHODS.index(r.method)))
    return rows


def _cell_seed(*parts) -> int:
    return derive_seed("sweep", *parts)


def _simulate(cell: _Cell, inst: Instance, plan, backend, method, run_seed, budget) -> None:
    if plan is None or not plan.chosen:
        # nothing affordable: a uniform guess from the cell's stream
        rng = make_rng(run_seed, "guess")
        guesses = rng.integers(0, inst.profile.class_count, size=len(inst.truths))
        for g, t in zip(guesses, inst.truths.values()):
            cell.correct += int(g == t)
            cell.spent.append(0.0)
            cell.saved.append(0.0)
        return
    runner = adaptive_run if method == "thrift" else full_run
    for q, t in inst.truths.items():
        rec = runner(plan, inst.profile, backend, q, run_seed)
        if rec.spent > budget:
            raise AssertionError(f"query {q} spent {rec.spent} over budget {budget}")
        cell.correct += int(rec.prediction == t)
        cell.spent.append(rec.spent)
        cell.saved.append(rec.saved)


def _fmt(x: float) -> str:
    return f"{x:.10g}"


def write_sweep_csv(rows: Iterable[SweepRow], path_or_fh) -> None:
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_HEADER)
        for r in rows:
            w.writerow([_fmt(r.budget), r.method, _fmt(r.accuracy), _fmt(r.mean_spent),
                        _fmt(r.mean_saved), r.instances, r.queries])

    if hasattr(path_or_fh, "write"):
        emit(path_or_fh)
    else:
        with open(path_or_fh, "w", newline="") as fh:
            emit(fh)
