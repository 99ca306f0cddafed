"""Budget-constrained subset selection.

``greedy`` repeatedly adds the model with the best marginal-gain-per-dollar
under a given set function. ``surrogate_greedy`` runs it twice, once on the
correctness probability and once on the submodular surrogate, and keeps the
best of those two sets and the strongest affordable single model. Its
diagnostics carry the instance-dependent approximation ratio.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable

from ensemble_select.catalog import SelectionProblem
from ensemble_select.correctness import (
    ExactEvaluator,
    MonteCarloEvaluator,
    PAEstimate,
    SurrogateEvaluator,
    required_samples,
)
from ensemble_select.errors import InfeasibleError, ParseError, ValidationError

KHULLER_FACTOR = 1.0 - 1.0 / math.sqrt(math.e)

SetFunction = Callable[[tuple[int, ...]], float]


@dataclass(frozen=True)
class Diagnostics:
    s1: tuple[str, ...]
    s2: tuple[str, ...]
    best_single: str | None
    p_star: float
    pa_s1: float
    pa_s2: float
    gamma_s2: float
    guarantee_ratio: float


@dataclass(frozen=True)
class SelectionPlan:
    chosen: tuple[str, ...]
    planned_cost: float
    budget: float
    pa_estimate: PAEstimate
    diagnostics: Diagnostics

    def __post_init__(self):
        if self.planned_cost > self.budget:
            raise ValidationError("plan exceeds its budget")
        if len(set(self.chosen)) != len(self.chosen):
            raise ValidationError("plan repeats a model")


def _greedy_indices(problem: SelectionProblem, objective: SetFunction) -> list[int]:
    prof = problem.profile
    costs = prof.costs
    probs = prof.probs
    pool = list(range(len(prof)))
    chosen: list[int] = []
    spent = 0.0
    f_cur = objective(())
    while pool and spent < problem.budget:
        ratios = [(objective(tuple(sorted(chosen + [i]))) - f_cur) / costs[i] for i in pool]
        best = max(ratios)
        # exact float equality defines a tie; then largest p/b, then lowest index
        tied = [i for i, r in zip(pool, ratios) if r == best]
        pick = max(tied, key=lambda i: (probs[i] / costs[i], -i))
        pool.remove(pick)
        if math.fsum([spent, costs[pick]]) > problem.budget:
            continue
        chosen.append(pick)
        spent = math.fsum(costs[i] for i in chosen)
        f_cur = objective(tuple(sorted(chosen)))
    return chosen


def greedy(problem: SelectionProblem, objective: SetFunction) -> tuple[str, ...]:
    """Marginal-gain-per-cost greedy; returns model ids in selection order.

    A model that no longer fits the remaining budget is dropped from the
    pool for good. The result may be empty.
    """
    return problem.profile.ids_for(_greedy_indices(problem, objective))


def best_feasible_single(problem: SelectionProblem) -> int | None:
    """Index of the highest-probability affordable model (cheaper, then lower index, on ties)."""
    prof = problem.profile
    feasible = [i for i in range(len(prof)) if prof.costs[i] <= problem.budget]
    if not feasible:
        return None
    return min(feasible, key=lambda i: (-prof.probs[i], prof.costs[i], i))


def guarantee_ratio(diagnostics: Diagnostics, epsilon: float = 0.0) -> float:
    top = max(diagnostics.pa_s1, diagnostics.pa_s2, diagnostics.p_star)
    denom = max(diagnostics.gamma_s2, diagnostics.p_star)
    return max(0.0, (top / denom - epsilon) * KHULLER_FACTOR)


def surrogate_greedy(problem: SelectionProblem, pa_evaluator=None,
                     gamma_evaluator=None) -> SelectionPlan:
    prof = problem.profile
    pa = pa_evaluator if pa_evaluator is not None else ExactEvaluator(prof)
    gamma = gamma_evaluator if gamma_evaluator is not None else SurrogateEvaluator(prof)

    star = best_feasible_single(problem)
    if star is None:
        raise InfeasibleError(f"no feasible model: every query cost exceeds budget {problem.budget}")
    s1 = _greedy_indices(problem, pa)
    s2 = _greedy_indices(problem, gamma)

    candidates = [[star], s1, s2]
    scores = [pa(c) for c in candidates]
    # first maximiser in the order ({l*}, S1, S2)
    winner = candidates[scores.index(max(scores))]
    p_star = float(prof.probs[star])

    diag = Diagnostics(
        s1=prof.ids_for(s1),
        s2=prof.ids_for(s2),
        best_single=prof.model_ids[star],
        p_star=p_star,
        pa_s1=pa(s1),
        pa_s2=pa(s2),
        gamma_s2=gamma(s2),
        guarantee_ratio=0.0,
    )
    diag = replace(diag, guarantee_ratio=guarantee_ratio(diag, 0.0))
    est = pa.estimate(winner) if hasattr(pa, "estimate") else PAEstimate(pa(winner), "exact")
    return SelectionPlan(
        chosen=prof.ids_for(winner),
        planned_cost=prof.total_cost(winner),
        budget=problem.budget,
        pa_estimate=est,
        diagnostics=diag,
    )


def plan_thrift(problem: SelectionProblem, epsilon: float = 0.1, delta: float = 0.01,
                seed: int = 0, exact: bool = False,
                exact_threshold: int | None = None) -> SelectionPlan:
    """Plan with the sample size the error guarantee asks for.

    The Monte Carlo sample count comes from ``required_samples`` using the
    best affordable probability and the pool size. With ``exact=True`` the
    correctness probability is enumerated instead.
    """
    prof = problem.profile
    star = best_feasible_single(problem)
    if star is None:
        raise InfeasibleError(f"no feasible model: every query cost exceeds budget {problem.budget}")
    if exact:
        kw = {} if exact_threshold is None else {"threshold": exact_threshold}
        evaluator = ExactEvaluator(prof, **kw)
    else:
        theta = required_samples(epsilon, delta, float(prof.probs[star]), len(prof))
        evaluator = MonteCarloEvaluator(prof, theta, seed)
    return surrogate_greedy(problem, evaluator)


PLAN_HEADER = ("model_id", "success_prob", "query_cost")


def _join(ids) -> str:
    return ";".join(ids)


def _split(text: str) -> tuple[str, ...]:
    return tuple(t for t in text.split(";") if t)


def save_plan(plan: SelectionPlan, profile, path) -> None:
    """Write a plan as CSV: one ``key=value`` metadata line, then one row per model."""
    d = plan.diagnostics
    est = plan.pa_estimate
    meta = {
        "budget": repr(plan.budget),
        "planned_cost": repr(plan.planned_cost),
        "pa": repr(est.value),
        "method": est.method,
        "samples": str(est.samples_used),
        "seed": str(est.seed),
        "best_single": d.best_single or "",
        "p_star": repr(d.p_star),
        "s1": _join(d.s1),
        "s2": _join(d.s2),
        "pa_s1": repr(d.pa_s1),
        "pa_s2": repr(d.pa_s2),
        "gamma_s2": repr(d.gamma_s2),
        "guarantee_ratio": repr(d.guarantee_ratio),
    }
    with open(path, "w", newline="") as fh:
        fh.write(",".join(f"{k}={v}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PLAN_HEADER)
        for m in plan.chosen:
            e = profile.entries[profile.index_of(m)]
            w.writerow([m, repr(e.success_prob), repr(e.query_cost)])


def load_plan(path) -> SelectionPlan:
    path = Path(path)
    with open(path, newline="") as fh:
        first = fh.readline().strip()
        try:
            meta = dict(kv.split("=", 1) for kv in first.split(","))
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != PLAN_HEADER:
                raise ParseError(path, 2, f"expected header {','.join(PLAN_HEADER)}")
            chosen = tuple(row[0] for row in reader if row)
            diag = Diagnostics(_split(meta["s1"]), _split(meta["s2"]), meta["best_single"] or None,
                               float(meta["p_star"]), float(meta["pa_s1"]), float(meta["pa_s2"]),
                               float(meta["gamma_s2"]), float(meta["guarantee_ratio"]))
            est = PAEstimate(float(meta["pa"]), meta["method"], int(meta["samples"]),
                             int(meta["seed"]))
            return SelectionPlan(chosen, float(meta["planned_cost"]), float(meta["budget"]),
                                 est, diag)
        except (KeyError, ValueError) as exc:
            if isinstance(exc, ParseError):
                raise
            raise ParseError(path, 1, f"malformed plan metadata: {exc}") from None
