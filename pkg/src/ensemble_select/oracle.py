"""Exhaustive ground truth for audits and tests.

Everything here uses exact enumeration, never sampling, so an audit failure
points at the algorithm and not at estimation noise.
"""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

from ensemble_select.catalog import ClassProfile, SelectionProblem
from ensemble_select.correctness import (
    EXACT_THRESHOLD,
    ExactEvaluator,
    SurrogateEvaluator,
    observation_count,
)
from ensemble_select.errors import InstanceTooLargeError, ValidationError
from ensemble_select.selection import Diagnostics, SelectionPlan, guarantee_ratio

MAX_BRUTE_FORCE_MODELS = 12
AUDIT_TOL = 1e-9
REPORT_HEADER = ("plan", "instance_digest", "optimum_pa", "plan_pa", "bound_value", "satisfied")


@dataclass(frozen=True)
class Optimum:
    chosen: tuple[str, ...]
    pa: float


@dataclass(frozen=True)
class GuaranteeReport:
    optimum_set: tuple[str, ...]
    optimum_pa: float
    plan_pa: float
    bound_value: float
    satisfied: bool
    instance_digest: str


@dataclass(frozen=True)
class Witness:
    """Subsets s1 <= s2 and a model whose gain on s1 is smaller than on s2."""

    s1: tuple[str, ...]
    s2: tuple[str, ...]
    model: str
    gain_s1: float
    gain_s2: float


def instance_digest(problem: SelectionProblem) -> str:
    prof = problem.profile
    parts = [f"K={prof.class_count}", f"B={problem.budget!r}"]
    parts += [f"{e.model_id}:{e.success_prob!r}:{e.query_cost!r}" for e in prof.entries]
    return hashlib.sha256("|".join(parts).encode()).hexdigest()[:16]


def _check_size(profile: ClassProfile, threshold: int) -> None:
    L = len(profile)
    if L > MAX_BRUTE_FORCE_MODELS:
        raise InstanceTooLargeError(
            f"{L} models is too large for brute force (limit {MAX_BRUTE_FORCE_MODELS})")
    if observation_count(profile.class_count, L) > threshold:
        raise InstanceTooLargeError(
            f"full pool needs {observation_count(profile.class_count, L)} observations, "
            f"over the limit {threshold}")


def brute_force_optimum(problem: SelectionProblem, threshold: int = EXACT_THRESHOLD,
                        evaluator: ExactEvaluator | None = None) -> Optimum:
    """Best affordable subset by exact correctness probability.

    Ties go to the fewest models, then the lexicographically smallest index
    tuple. With no affordable model the optimum is the empty set with 0.
    """
    prof = problem.profile
    _check_size(prof, threshold)
    pa = evaluator if evaluator is not None else ExactEvaluator(prof, threshold)
    best: tuple[int, ...] = ()
    best_pa = 0.0
    for size in range(1, len(prof) + 1):
        for combo in combinations(range(len(prof)), size):
            if prof.total_cost(combo) > problem.budget:
                continue
            v = pa(combo)
            if v > best_pa:
                best, best_pa = combo, v
    return Optimum(prof.ids_for(best), best_pa)


def exact_diagnostics(problem: SelectionProblem, diagnostics: Diagnostics,
                      evaluator: ExactEvaluator) -> Diagnostics:
    """Re-evaluate the correctness terms of ``diagnostics`` exactly."""
    prof = problem.profile
    gamma = SurrogateEvaluator(prof)
    d = replace(diagnostics,
                pa_s1=evaluator(prof.indices(diagnostics.s1)),
                pa_s2=evaluator(prof.indices(diagnostics.s2)),
                gamma_s2=gamma(prof.indices(diagnostics.s2)))
    return replace(d, guarantee_ratio=guarantee_ratio(d, 0.0))


def audit_guarantee(problem: SelectionProblem, plan: SelectionPlan | Sequence[str],
                    epsilon: float = 0.0, diagnostics: Diagnostics | None = None,
                    threshold: int = EXACT_THRESHOLD) -> GuaranteeReport:
    """Check a plan against the approximation bound, all terms exact.

    ``plan`` may be a :class:`SelectionPlan` or a bare sequence of model ids;
    the bound always comes from ``diagnostics`` (default: the plan's own).
    """
    prof = problem.profile
    if isinstance(plan, SelectionPlan):
        chosen = plan.chosen
        diagnostics = diagnostics or plan.diagnostics
    else:
        chosen = tuple(plan)
    if diagnostics is None:
        raise ValidationError("a bare model list needs diagnostics to audit against")
    if prof.total_cost(chosen) > problem.budget:
        raise ValidationError("audited plan exceeds the budget")
    ev = ExactEvaluator(prof, threshold)
    opt = brute_force_optimum(problem, threshold, ev)
    diag = exact_diagnostics(problem, diagnostics, ev)
    plan_pa = ev(prof.indices(chosen))
    bound = guarantee_ratio(diag, epsilon) * opt.pa
    return GuaranteeReport(opt.chosen, opt.pa, plan_pa, bound,
                           plan_pa >= bound - AUDIT_TOL, instance_digest(problem))


def _subsets(n: int):
    for size in range(n + 1):
        yield from combinations(range(n), size)


def submodularity_probe(profile: ClassProfile, exhaustive: bool = True, objective: str = "pa",
                        samples: int = 2000, seed: int = 0, tol: float = 1e-12) -> Witness | None:
    """First (s1, s2, l) with s1 a proper subset of s2 and gain(s1) < gain(s2).

    ``objective`` is ``"pa"`` (exact correctness probability) or ``"gamma"``.
    Exhaustive search walks s2 by size then lexicographically, s1 likewise,
    then l ascending; otherwise ``samples`` random triples are tried.
    """
    if objective == "pa":
        f = ExactEvaluator(profile)
    elif objective == "gamma":
        f = SurrogateEvaluator(profile)
    else:
        raise ValidationError(f"unknown objective {objective!r}")
    L = len(profile)

    def check(s1, s2, l):
        g1 = f(tuple(sorted(s1 + (l,)))) - f(s1)
        g2 = f(tuple(sorted(s2 + (l,)))) - f(s2)
        if g1 < g2 - tol:
            return Witness(profile.ids_for(s1), profile.ids_for(s2), profile.model_ids[l], g1, g2)
        return None

    if exhaustive:
        for s2 in _subsets(L):
            rest = [l for l in range(L) if l not in s2]
            if not rest:
                continue
            for size in range(len(s2)):
                for s1 in combinations(s2, size):
                    for l in rest:
                        w = check(s1, s2, l)
                        if w is not None:
                            return w
        return None

    rng = np.random.default_rng(seed)
    for _ in range(samples):
        if L < 2:
            return None
        l = int(rng.integers(L))
        others = [i for i in range(L) if i != l]
        mask2 = rng.random(len(others)) < 0.5
        s2 = tuple(i for i, m in zip(others, mask2) if m)
        if not s2:
            continue
        mask1 = rng.random(len(s2)) < 0.5
        s1 = tuple(i for i, m in zip(s2, mask1) if m)
        if s1 == s2:
            s1 = s2[:-1]
        w = check(s1, s2, l)
        if w is not None:
            return w
    return None


def write_reports(rows: Iterable[tuple[str, GuaranteeReport]], path_or_fh) -> None:
    def emit(fh):
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_HEADER)
        for name, r in rows:
            w.writerow([name, r.instance_digest, f"{r.optimum_pa:.12g}", f"{r.plan_pa:.12g}",
                        f"{r.bound_value:.12g}", str(r.satisfied).lower()])

    if hasattr(path_or_fh, "write"):
        emit(path_or_fh)
    else:
        with open(path_or_fh, "w", newline="") as fh:
            emit(fh)
