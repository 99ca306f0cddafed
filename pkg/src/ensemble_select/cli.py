"""Command-line entry point.

Subcommands: estimate, select, run, oracle, sweep. Exit codes are 0 on
success, 2 for invalid input, 3 when nothing fits the budget and 4 when an
exhaustive computation is over its size guard.
"""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from ensemble_select import estimation, oracle, simharness
from ensemble_select.catalog import ClassProfile, SelectionProblem, load_problem, load_profile, save_profile
from ensemble_select.correctness import EXACT_THRESHOLD, ExactEvaluator
from ensemble_select.errors import (
    BackendError,
    BudgetExceededError,
    InfeasibleError,
    InstanceTooLargeError,
    ValidationError,
)
from ensemble_select.runtime import ReplayBackend, SimulatedBackend, adaptive_run, load_truth
from ensemble_select.selection import greedy, load_plan, plan_thrift, save_plan, surrogate_greedy

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_TOO_LARGE = 4

BUNDLED_COUNTEREXAMPLE = Path(__file__).parent / "data" / "greedy_counterexample.csv"


def _unit_interval(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"{text} is not in (0, 1)")
    return v


def _budgets(text: str) -> list[float]:
    parts = [p for p in text.split(",") if p.strip()]
    return [float(p) for p in parts]


def cmd_estimate(args) -> int:
    matrix = estimation.load_matrix(args.matrix)
    emb = estimation.load_embeddings(args.embeddings)
    missing = [q for q in matrix.query_ids if q not in emb]
    if missing:
        raise ValidationError(f"no embedding for query_id {missing[0]!r}")
    extra = sorted(set(emb) - set(matrix.query_ids))
    if extra:
        raise ValidationError(f"embedding for unknown query_id {extra[0]!r}")
    costs = estimation.load_costs(args.costs)
    x = np.stack([emb[q] for q in matrix.query_ids])
    labels = estimation.cluster_queries(x, args.eps, args.min_pts)
    prefix = str(args.out)
    with open(f"{prefix}.clusters.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["query_id", "cluster"])
        for q, c in zip(matrix.query_ids, labels):
            w.writerow([q, int(c)])
    n_clusters = int(labels.max()) + 1
    for c in range(n_clusters):
        rows = np.flatnonzero(labels == c)
        bundle = estimation.profile_bounds(matrix, rows, args.classes, costs, args.delta_l)
        for tag, prof in bundle.items():
            save_profile(prof, f"{prefix}.c{c}.{tag}")
    print(f"# eps={args.eps} min_pts={args.min_pts} delta_l={args.delta_l}")
    print(f"{n_clusters} clusters from {len(matrix.query_ids)} queries -> {prefix}.c*.{{low,hat,up}}")
    return EXIT_OK


def cmd_select(args) -> int:
    profile = load_profile(args.profile)
    problem = SelectionProblem(profile, args.budget)
    plan = plan_thrift(problem, args.epsilon, args.delta, args.seed, exact=args.exact,
                       exact_threshold=args.exact_threshold)
    est = plan.pa_estimate
    print(f"# seed={args.seed} epsilon={args.epsilon} delta={args.delta} budget={args.budget!r}")
    print(f"chosen: {', '.join(plan.chosen)}")
    print(f"planned_cost: {plan.planned_cost:.10g}")
    print(f"pa: {est.value:.6f} (method={est.method}, samples={est.samples_used})")
    print(f"guarantee_ratio: {plan.diagnostics.guarantee_ratio:.6f}")
    if args.out:
        save_plan(plan, profile, args.out)
    return EXIT_OK


def _backend(spec: str, profile: ClassProfile, truths, seed: int):
    if spec == "sim":
        return SimulatedBackend(profile, truths, seed)
    if spec.startswith("replay:"):
        return ReplayBackend.from_csv(spec[len("replay:"):])
    raise ValidationError(f"backend must be 'sim' or 'replay:<path>', got {spec!r}")


def cmd_run(args) -> int:
    plan = load_plan(args.plan)
    profile = load_profile(args.profile)
    if args.truth:
        truths = load_truth(args.truth)
    elif args.queries:
        rng = np.random.default_rng([args.seed, 1])
        truths = {f"q{i}": int(t) for i, t in
                  enumerate(rng.integers(0, profile.class_count, size=args.queries))}
    else:
        raise ValidationError("give --truth or --queries")
    backend = _backend(args.backend, profile, truths, args.seed)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    correct = 0
    spent, saved = [], []
    try:
        print(f"# seed={args.seed} backend={args.backend}", file=out)
        w = csv.writer(out, lineterminator="\n")
        w.writerow(["query_id", "invoked", "prediction", "true_class", "spent", "saved"])
        for q, t in truths.items():
            rec = adaptive_run(plan, profile, backend, q, args.seed)
            correct += int(rec.prediction == t)
            spent.append(rec.spent)
            saved.append(rec.saved)
            w.writerow([q, ";".join(rec.invoked), rec.prediction, t,
                        f"{rec.spent:.10g}", f"{rec.saved:.10g}"])
    finally:
        if out is not sys.stdout:
            out.close()
    n = len(truths)
    print(f"accuracy={correct / n if n else 0.0:.6f} mean_spent={math.fsum(spent) / max(n, 1):.10g} "
          f"mean_saved={math.fsum(saved) / max(n, 1):.10g} queries={n}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    path = Path(args.problem) if args.problem else BUNDLED_COUNTEREXAMPLE
    problem = load_problem(path, args.budget)
    threshold = args.exact_threshold
    # size guard before any planning work
    oracle._check_size(problem.profile, threshold)
    exact = ExactEvaluator(problem.profile, threshold)
    plan = surrogate_greedy(problem, exact)
    plain = greedy(problem, exact)
    rows = [
        ("surgreedy", oracle.audit_guarantee(problem, plan, args.epsilon, threshold=threshold)),
        ("greedy", oracle.audit_guarantee(problem, plain, args.epsilon, plan.diagnostics,
                                          threshold=threshold)),
    ]
    oracle.write_reports(rows, args.out or sys.stdout)
    return EXIT_OK


def cmd_sweep(args) -> int:
    spec = simharness.InstanceSpec.from_json(args.spec) if args.spec else simharness.InstanceSpec(seed=args.seed)
    if not args.budgets:
        raise ValidationError("budget list is empty")
    rows = simharness.run_sweep(simharness.gen_instances(spec), args.budgets, seed=args.seed,
                                epsilon=args.epsilon, delta=args.delta)
    simharness.write_sweep_csv(rows, args.out)
    print(f"# seed={args.seed} instance_seed={spec.seed} budgets={len(args.budgets)} rows={len(rows)}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="ensemble-select", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--epsilon", type=_unit_interval, default=0.1)
        sp.add_argument("--delta", type=_unit_interval, default=0.01)
        sp.add_argument("--seed", type=int, default=0)

    e = sub.add_parser("estimate", help="cluster history and write low/hat/up profiles")
    e.add_argument("--matrix", required=True)
    e.add_argument("--embeddings", required=True)
    e.add_argument("--costs", required=True, help="CSV model_id,query_cost")
    e.add_argument("--classes", type=int, required=True, help="number of class labels K")
    e.add_argument("--eps", type=float, default=0.1)
    e.add_argument("--min-pts", type=int, default=3)
    e.add_argument("--delta-l", type=_unit_interval, default=0.05)
    e.add_argument("--out", required=True, help="output prefix")
    e.set_defaults(func=cmd_estimate)

    s = sub.add_parser("select", help="choose a plan for one profile and budget")
    s.add_argument("profile")
    s.add_argument("--budget", type=float, required=True)
    common(s)
    s.add_argument("--exact", action="store_true")
    s.add_argument("--exact-threshold", type=int, default=EXACT_THRESHOLD)
    s.add_argument("--out")
    s.set_defaults(func=cmd_select)

    r = sub.add_parser("run", help="execute a plan adaptively over a query stream")
    r.add_argument("--plan", required=True)
    r.add_argument("--profile", required=True)
    r.add_argument("--backend", default="sim", help="'sim' or 'replay:<path>'")
    r.add_argument("--truth")
    r.add_argument("--queries", type=int)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out")
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="audit greedy and surrogate greedy against brute force")
    o.add_argument("problem", nargs="?", help="profile file with K=..,B=.. (default: bundled counterexample)")
    o.add_argument("--budget", type=float)
    o.add_argument("--epsilon", type=float, default=0.0)
    o.add_argument("--exact-threshold", type=int, default=EXACT_THRESHOLD)
    o.add_argument("--out")
    o.set_defaults(func=cmd_oracle)

    w = sub.add_parser("sweep", help="accuracy/cost sweep over synthetic instances")
    w.add_argument("--spec", help="instance spec JSON")
    w.add_argument("--budgets", type=_budgets, default=list(simharness.DEFAULT_BUDGETS))
    common(w)
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except InfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except BudgetExceededError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except InstanceTooLargeError as exc:
        print(f"error: instance too large: {exc}", file=sys.stderr)
        return EXIT_TOO_LARGE
    except (ValidationError, BackendError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
