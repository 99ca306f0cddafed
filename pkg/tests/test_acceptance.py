"""Acceptance suite: one check per criterion, each printing a PASS/FAIL line.

Run under pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

import _reference as ref
from ensemble_select.aggregation import Observation, belief_table, observation_probability
from ensemble_select.catalog import P_CAP, ClassProfile, SelectionProblem
from ensemble_select.correctness import (
    ExactEvaluator,
    exact_pa,
    mc_pa,
    required_samples,
    surrogate_gamma,
)
from ensemble_select.estimation import IntervalEstimate, median_boost, required_repetitions
from ensemble_select.oracle import audit_guarantee, brute_force_optimum, submodularity_probe
from ensemble_select.runtime import SimulatedBackend, adaptive_run, full_run
from ensemble_select.selection import greedy, plan_thrift, surrogate_greedy
from ensemble_select.simharness import (
    DEFAULT_BUDGETS,
    InstanceSpec,
    gen_instances,
    run_sweep,
    write_sweep_csv,
)

RESULTS: list[str] = []


def _record(number: int, title: str, ok: bool, detail: str, seconds: float) -> None:
    RESULTS.append(f"{'PASS' if ok else 'FAIL'} [{number:2d}] {title}: {detail} ({seconds:.1f}s)")


def _better_than_chance(rng, K, size, hi=0.95):
    """Success probabilities above 1/K, where every vote weight exceeds 1.

    The pairwise identity, monotonicity and the surrogate upper bound are
    only true on this domain; below 1/K a vote is evidence against the class
    it names (see tests/test_properties.py for explicit counterexamples).
    """
    return rng.uniform(1.0 / K + 1e-3, hi, size=size)


def _random_profile(rng, L, K, p_lo=0.3, p_hi=0.95, cost=(1.0, 10.0)):
    probs = rng.uniform(p_lo, p_hi, size=L)
    costs = rng.uniform(*cost, size=L)
    return ClassProfile.from_lists(K, probs, costs)


# 1 --------------------------------------------------------------------------
def check_observation_probabilities():
    prof = ClassProfile.from_lists(3, [0.9, 0.8, 0.8], [1, 1, 1])
    obs = Observation.of([("l1", 0), ("l2", 0), ("l3", 2)])
    got = [observation_probability(prof, prof.model_ids, k, obs) for k in range(3)]
    want = [0.072, 0.0005, 0.004]
    err = max(abs(g - w) for g, w in zip(got, want))
    return err <= 1e-12, f"max error {err:.2e} for {[round(g, 6) for g in got]}"


# 2 --------------------------------------------------------------------------
def check_two_model_identity():
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(100):
        K = int(rng.integers(2, 5))
        p1, p2 = _better_than_chance(rng, K, 2)
        while p1 == p2:
            p2 = _better_than_chance(rng, K, 1)[0]
        prof = ClassProfile.from_lists(K, [p1, p2], [1, 1])
        worst = max(worst, abs(exact_pa(prof, [0, 1]).value - max(p1, p2)))
    return worst <= 1e-12, f"max |PA - max(p1,p2)| = {worst:.2e} over 100 pairs"


# 3 --------------------------------------------------------------------------
def check_truth_independence():
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        L = int(rng.integers(1, 6))
        K = int(rng.integers(2, 5))
        prof = _random_profile(rng, L, K)
        vals = [exact_pa(prof, range(L), truth=t).value for t in range(K)]
        worst = max(worst, max(vals) - min(vals))
    return worst <= 1e-12, f"max spread across assumed truths {worst:.2e}"


# 4 --------------------------------------------------------------------------
def check_monotonicity():
    rng = np.random.default_rng(4)
    violations = 0
    checks = 0
    for _ in range(200):
        L = int(rng.integers(2, 7))
        K = int(rng.integers(2, 4))
        prof = ClassProfile.from_lists(K, _better_than_chance(rng, K, L), rng.uniform(1, 10, L))
        ev = ExactEvaluator(prof)
        size = int(rng.integers(0, L))
        subset = tuple(sorted(rng.choice(L, size=size, replace=False).tolist()))
        extra = int(rng.choice([i for i in range(L) if i not in subset]))
        checks += 1
        if ev(tuple(sorted(subset + (extra,)))) < ev(subset) - 1e-12:
            violations += 1
        # raise one probability
        i = int(rng.integers(L))
        probs = prof.probs.copy()
        probs[i] = min(P_CAP, probs[i] + rng.uniform(0, 1 - probs[i]))
        bumped = prof.with_probs(probs)
        checks += 1
        full = tuple(range(L))
        if exact_pa(bumped, full).value < exact_pa(prof, full).value - 1e-12:
            violations += 1
    return violations == 0, f"{violations} violations in {checks} comparisons"


# 5 --------------------------------------------------------------------------
def check_surrogate_bound_and_submodularity():
    rng = np.random.default_rng(5)
    below = 0
    for _ in range(500):
        L = int(rng.integers(1, 7))
        K = int(rng.integers(2, 4))
        prof = ClassProfile.from_lists(K, _better_than_chance(rng, K, L), [1] * L)
        size = int(rng.integers(1, L + 1))
        subset = rng.choice(L, size=size, replace=False)
        if surrogate_gamma(prof, subset) < exact_pa(prof, subset).value - 1e-12:
            below += 1
    witnesses = 0
    for L in range(1, 6):
        for _ in range(10):
            prof = _random_profile(rng, L, 2, 0.05, 0.95)
            if submodularity_probe(prof, exhaustive=True, objective="gamma") is not None:
                witnesses += 1
    ok = below == 0 and witnesses == 0
    return ok, f"gamma < PA on {below}/500 subsets; {witnesses}/50 pools violate submodularity"


# 6 --------------------------------------------------------------------------
def check_non_submodular_witness():
    p1, p2, p3, K = 0.6, 0.58, 0.58, 2
    prof = ClassProfile.from_lists(K, [p1, p2, p3], [1, 1, 1])
    ev = ExactEvaluator(prof)
    gain_t = ev((0, 1, 2)) - ev((0, 1))
    gain_s = ev((0, 2)) - ev((0,))
    closed = p1 - p1 * (1 - p2) * (1 - p3) / (K - 1) + (1 - p1) * p2 * p3
    oracle = float(ref.pa([p1, p2, p3], K))
    w = submodularity_probe(prof, exhaustive=True)
    ok = (abs(gain_t - 0.02872) <= 1e-12 and abs(gain_s) <= 1e-12
          and abs(ev((0, 1, 2)) - closed) <= 1e-12 and abs(ev((0, 1, 2)) - oracle) <= 1e-12
          and w is not None and w.gain_s1 < w.gain_s2)
    return ok, (f"gain on T {gain_t:.5f}, gain on S {gain_s:.1e}, closed form {closed:.5f}, "
                f"probe witness {w.s1}->{w.s2} + {w.model}" if w else "no witness")


# 7 --------------------------------------------------------------------------
def check_greedy_counterexample():
    prof = ClassProfile.from_lists(2, [0.9, 0.2], [10, 1])
    problem = SelectionProblem(prof, 10)
    ev = ExactEvaluator(prof)
    g = greedy(problem, ev)
    plan = surrogate_greedy(problem, ev)
    opt = brute_force_optimum(problem)
    ok = g == ("l2",) and plan.chosen == ("l1",) and opt.chosen == ("l1",)
    return ok, f"greedy {g}, surrogate greedy {plan.chosen}, optimum {opt.chosen} PA {opt.pa}"


# 8 --------------------------------------------------------------------------
def check_guarantee_audit():
    rng = np.random.default_rng(8)
    failures = 0
    min_slack = math.inf
    for _ in range(200):
        L = int(rng.integers(1, 9))
        K = int(rng.integers(2, 4))
        prof = _random_profile(rng, L, K, 0.05, 0.95)
        budget = float(rng.uniform(prof.costs.min(), prof.costs.sum()))
        problem = SelectionProblem(prof, budget)
        plan = surrogate_greedy(problem, ExactEvaluator(prof))
        rep = audit_guarantee(problem, plan, 0.0)
        failures += not rep.satisfied
        min_slack = min(min_slack, rep.plan_pa - rep.bound_value)
    return failures == 0, f"{200 - failures}/200 satisfied, min slack {min_slack:.4f}"


# 9 --------------------------------------------------------------------------
MC_PROFILES = [
    (3, [0.9, 0.8, 0.8]),
    (2, [0.6, 0.58, 0.58]),
    (2, [0.7, 0.65, 0.6, 0.55]),
    (3, [0.5, 0.45, 0.4]),
    (4, [0.85, 0.6, 0.7, 0.75]),
]


def check_monte_carlo_concentration():
    eps, delta, seeds = 0.1, 0.01, 1000
    lines = []
    ok = True
    for K, probs in MC_PROFILES:
        prof = ClassProfile.from_lists(K, probs, [1] * len(probs))
        L = len(probs)
        p_star = max(probs)
        theta = required_samples(eps, delta, p_star, L)
        truth = exact_pa(prof, range(L)).value
        bad = sum(abs(mc_pa(prof, range(L), theta, s).value - truth) > 0.05 * p_star
                  for s in range(seeds))
        q = delta / L ** 2
        limit = q + 3 * math.sqrt(q * (1 - q) / seeds)
        ok &= bad / seeds <= limit
        lines.append(f"{bad}/{seeds}<={limit:.4f}")
    return ok, "failure rates " + ", ".join(lines)


# 10 -------------------------------------------------------------------------
def check_termination_preserves_prediction():
    rng = np.random.default_rng(10)
    mismatches = 0
    overspend = 0
    no_savings = 0
    multi = 0
    queries = 0
    fractions = []
    for i in range(50):
        L = int(rng.integers(2, 7))
        K = int(rng.integers(2, 5))
        prof = _random_profile(rng, L, K, 0.4, 0.95)
        budget = float(rng.uniform(0.5, 1.0)) * float(prof.costs.sum())
        plan = plan_thrift(SelectionProblem(prof, budget), seed=i, exact=True)
        truths = {f"q{j}": int(t) for j, t in enumerate(rng.integers(0, K, size=200))}
        backend = SimulatedBackend(prof, truths, seed=i)
        saved = 0.0
        for q in truths:
            a = adaptive_run(plan, prof, backend, q, seed=i)
            f = full_run(plan, prof, backend, q, seed=i)
            queries += 1
            if a.prediction not in belief_table(prof, f.observation).tie_classes:
                mismatches += 1
            if a.spent > plan.planned_cost or a.spent > budget:
                overspend += 1
            saved += a.saved
        if len(plan.chosen) >= 2:
            multi += 1
            no_savings += saved <= 0
            fractions.append(saved / (plan.planned_cost * len(truths)))
    ok = mismatches == 0 and overspend == 0 and no_savings == 0
    band = (f"savings median {np.median(fractions):.0%}, range {min(fractions):.0%}-{max(fractions):.0%}"
            if fractions else "no multi-model plans")
    return ok, (f"{queries} queries, {mismatches} prediction mismatches, {overspend} overspends, "
                f"{no_savings}/{multi} multi-model plans without savings; {band}")


# 11 -------------------------------------------------------------------------
def check_hard_budget_safety():
    rng = np.random.default_rng(11)
    queries = 0
    over = 0
    # fuzz: tight random budgets, both execution modes
    while queries < 100_000:
        L = int(rng.integers(1, 8))
        K = int(rng.integers(2, 5))
        prof = _random_profile(rng, L, K, 0.3, 0.95, cost=(1e-6, 1e-4))
        budget = float(rng.uniform(prof.costs.min(), prof.costs.sum()))
        plan = plan_thrift(SelectionProblem(prof, budget), seed=queries, exact=True)
        truths = {f"q{j}": int(t) for j, t in enumerate(rng.integers(0, K, size=250))}
        backend = SimulatedBackend(prof, truths, seed=queries)
        for q in truths:
            for run in (adaptive_run, full_run):
                rec = run(plan, prof, backend, q, seed=0)
                queries += 1
                over += rec.spent > budget
    # the sweep raises on any overspending query
    rows = run_sweep(gen_instances(InstanceSpec(seed=11)), DEFAULT_BUDGETS, seed=11)
    queries += sum(r.queries for r in rows)
    over += sum(r.mean_spent > r.budget for r in rows)
    return over == 0, f"{queries} queries, {over} over budget"


# 12 -------------------------------------------------------------------------
def check_median_boosting():
    lam = required_repetitions(12, 0.01, 0.4)
    truth = 0.7
    # pools of covering and non-covering intervals; failures land on both sides
    rng = np.random.default_rng(12)
    good = [IntervalEstimate(float(c), float(c) - 0.1, float(c) + 0.1, 0.6, 50)
            for c in rng.uniform(truth - 0.09, truth + 0.09, size=64)]
    bad = [IntervalEstimate(float(c), float(c) - 0.05, float(c) + 0.05, 0.6, 50)
           for c in np.concatenate([rng.uniform(0.3, 0.6, 32), rng.uniform(0.8, 0.95, 32)])]
    pool = good + bad
    trials = 10_000
    fails = 0
    for _ in range(trials):
        failing = rng.random(lam) < 0.4
        which = np.where(failing, 64 + rng.integers(0, 64, lam), rng.integers(0, 64, lam))
        it = iter(which.tolist())
        iv = median_boost(lambda: pool[next(it)], lam)
        fails += not iv.covers(truth)
    bound = math.exp(-lam * (1 - 2 * 0.4) ** 2 / 2)
    ok = lam == 1065 and fails == 0
    return ok, f"Lambda {lam}, {fails}/{trials} failures, bound {bound:.2e}"


# 13 -------------------------------------------------------------------------
def check_interval_sandwich():
    rng = np.random.default_rng(13)
    audited = order_fail = ratio_fail = 0
    worst_margin = math.inf
    for _ in range(100):
        L = int(rng.integers(2, 7))
        K = int(rng.integers(2, 4))
        true_p = _better_than_chance(rng, K, L, hi=0.9) + 0.05
        half = rng.uniform(0.0, 0.1, size=L)
        lo = np.clip(true_p - rng.uniform(0, 1, L) * half, 1.0 / K + 1e-3, P_CAP)
        hi = np.minimum(true_p + rng.uniform(0, 1, L) * half, P_CAP)
        hat = lo + rng.uniform(0, 1, L) * (hi - lo)
        costs = rng.uniform(1, 10, size=L)
        budget = float(rng.uniform(costs.min(), costs.sum()))
        profs = {name: ClassProfile.from_lists(K, p, costs)
                 for name, p in (("true", true_p), ("low", lo), ("hat", hat), ("up", hi))}
        if not (np.all(lo <= true_p) and np.all(true_p <= hi)):
            continue
        audited += 1
        plans = {n: surrogate_greedy(SelectionProblem(profs[n], budget)) for n in ("low", "hat", "up")}
        pa_l = exact_pa(profs["low"], plans["low"].chosen).value
        pa_u = exact_pa(profs["up"], plans["up"].chosen).value
        true_prof = profs["true"]
        pa_star = exact_pa(true_prof, true_prof.indices(plans["hat"].chosen)).value
        pa_opt = brute_force_optimum(SelectionProblem(true_prof, budget)).pa
        bound = pa_l / pa_u * plans["up"].diagnostics.guarantee_ratio
        order_fail += pa_l > pa_u + 1e-12
        ratio_fail += pa_star / pa_opt < bound - 1e-9
        worst_margin = min(worst_margin, pa_star / pa_opt - bound)
    ok = order_fail == 0 and ratio_fail == 0 and audited > 0
    return ok, (f"{audited} instances, ordering violated {order_fail}, ratio bound violated "
                f"{ratio_fail}, min margin {worst_margin:.4f}")


# 14 -------------------------------------------------------------------------
def check_sweep_sanity(tmp_dir):
    spec = InstanceSpec(seed=14)
    paths = []
    for rep in range(2):
        rows = run_sweep(gen_instances(spec), DEFAULT_BUDGETS, seed=14)
        path = tmp_dir / f"sweep{rep}.csv"
        write_sweep_csv(rows, path)
        paths.append(path)
    same = paths[0].read_bytes() == paths[1].read_bytes()
    thrift = [r for r in rows if r.method == "thrift"]
    rho = spearmanr([r.budget for r in thrift], [r.accuracy for r in thrift]).statistic
    ok = same and rho >= 0 and len(rows) == len(DEFAULT_BUDGETS) * 5
    acc = ", ".join(f"{r.accuracy:.3f}" for r in thrift)
    return ok, f"byte-identical {same}, Spearman {rho:.3f}, thrift accuracy by budget [{acc}]"


CRITERIA = [
    (1, "observation probabilities", check_observation_probabilities, 1.0),
    (2, "two-model identity", check_two_model_identity, 1.0),
    (3, "ground-truth independence", check_truth_independence, None),
    (4, "monotonicity", check_monotonicity, None),
    (5, "surrogate upper bound and submodularity", check_surrogate_bound_and_submodularity, None),
    (6, "non-submodular witness", check_non_submodular_witness, None),
    (7, "greedy failure repaired", check_greedy_counterexample, None),
    (8, "approximation guarantee audit", check_guarantee_audit, 300.0),
    (9, "Monte Carlo concentration", check_monte_carlo_concentration, None),
    (10, "early termination preserves prediction", check_termination_preserves_prediction, None),
    (11, "hard budget safety", check_hard_budget_safety, None),
    (12, "median boosting", check_median_boosting, None),
    (13, "interval sandwich", check_interval_sandwich, None),
    (14, "sweep sanity", check_sweep_sanity, 120.0),
]


def _run(number, title, fn, limit, *args):
    t0 = time.perf_counter()
    ok, detail = fn(*args)
    dt = time.perf_counter() - t0
    if limit is not None and dt > limit:
        ok = False
        detail += f"; runtime over {limit:.0f}s"
    _record(number, title, ok, detail, dt)
    print(RESULTS[-1])
    return ok, detail


@pytest.mark.parametrize("number,title,fn,limit", CRITERIA, ids=[f"criterion_{c[0]:02d}" for c in CRITERIA])
def test_criterion(number, title, fn, limit, tmp_path):
    args = (tmp_path,) if fn is check_sweep_sanity else ()
    ok, detail = _run(number, title, fn, limit, *args)
    assert ok, detail


if __name__ == "__main__":
    import sys
    import tempfile
    from pathlib import Path

    all_ok = True
    with tempfile.TemporaryDirectory() as d:
        for number, title, fn, limit in CRITERIA:
            args = (Path(d),) if fn is check_sweep_sanity else ()
            all_ok &= _run(number, title, fn, limit, *args)[0]
    sys.exit(0 if all_ok else 1)
