"""Adaptive per-query execution of a selection plan.

Models in the plan are invoked strongest first. Before each call the runner
asks whether the models not yet invoked could still change the aggregated
prediction; once they cannot, it stops and the remaining cost is saved.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Protocol

import numpy as np

from ensemble_select._seeding import make_rng
from ensemble_select.aggregation import (
    TIE_TOL,
    BeliefTable,
    Observation,
    aggregate_prediction,
    belief_table,
)
from ensemble_select.catalog import ClassProfile
from ensemble_select.errors import (
    BackendError,
    BudgetExceededError,
    ParseError,
    ValidationError,
)
from ensemble_select.selection import SelectionPlan

REPLAY_HEADER = ("query_id", "model_id", "predicted_class", "actual_cost")
TRUTH_HEADER = ("query_id", "true_class")


@dataclass(frozen=True)
class Response:
    predicted_class: int
    actual_cost: float


class ModelBackend(Protocol):
    def invoke(self, model_id: str, query_id: str) -> Response: ...


@dataclass(frozen=True)
class RunRecord:
    query_id: str
    invoked: tuple[str, ...]
    observation: Observation
    prediction: int | None
    spent: float
    saved: float


def simulated_invoke(profile: ClassProfile, truth: int, model_id: str,
                     rng: np.random.Generator) -> Response:
    """Correct with probability p, otherwise a uniformly drawn wrong class."""
    i = profile.index_of(model_id)
    e = profile.entries[i]
    k = profile.class_count
    if rng.random() < e.success_prob:
        cls = truth
    else:
        cls = int(rng.integers(k - 1))
        cls += cls >= truth
    return Response(int(cls), e.query_cost)


class SimulatedBackend:
    """Answers drawn from the profile; each (query, model) pair has its own stream.

    Because a response depends only on (seed, query_id, model_id), the same
    query sees the same answers however many models are invoked and in which
    order.
    """

    def __init__(self, profile: ClassProfile, truths: Mapping[str, int], seed: int = 0):
        self.profile = profile
        self.truths = truths
        self.seed = seed

    def invoke(self, model_id: str, query_id: str) -> Response:
        try:
            truth = self.truths[query_id]
        except KeyError:
            raise BackendError(f"no ground truth for query {query_id!r}") from None
        rng = make_rng(self.seed, "response", query_id, model_id)
        return simulated_invoke(self.profile, truth, model_id, rng)


class ReplayBackend:
    def __init__(self, table: Mapping[tuple[str, str], Response]):
        self.table = dict(table)

    @classmethod
    def from_csv(cls, path) -> "ReplayBackend":
        return cls(load_replay(path))

    def invoke(self, model_id: str, query_id: str) -> Response:
        try:
            return self.table[(query_id, model_id)]
        except KeyError:
            raise BackendError(
                f"replay table has no response for query {query_id!r}, model {model_id!r}") from None


def _rows(path: Path, header):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        first = next(reader, None)
        if first is None or tuple(c.strip() for c in first) != header:
            raise ParseError(path, 1, f"expected header {','.join(header)}")
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num, f"expected {len(header)} fields")
            yield reader.line_num, [c.strip() for c in row]


def load_replay(path) -> dict[tuple[str, str], Response]:
    path = Path(path)
    table = {}
    for line, (q, m, c, cost) in _rows(path, REPLAY_HEADER):
        try:
            resp = Response(int(c), float(cost))
        except ValueError:
            raise ParseError(path, line, "bad predicted_class or actual_cost") from None
        if (q, m) in table:
            raise ParseError(path, line, f"duplicate row for ({q}, {m})")
        table[(q, m)] = resp
    return table


def load_truth(path) -> dict[str, int]:
    path = Path(path)
    out = {}
    for line, (q, c) in _rows(path, TRUTH_HEADER):
        try:
            out[q] = int(c)
        except ValueError:
            raise ParseError(path, line, f"bad true_class {c!r}") from None
    return out


def should_continue(profile: ClassProfile, remaining, table: BeliefTable) -> bool:
    """True while the models in ``remaining`` could still change the prediction.

    Compares the lowest belief the current leader can end with against the
    highest belief any other class can reach. A class with votes can only be
    multiplied by remaining weights; a class without votes starts from the
    default belief, which a first vote replaces rather than multiplies. When
    every remaining weight exceeds 1 and the runner-up already has votes this
    is exactly ``F(remaining) * H2 >= H1``.
    """
    idx = profile.indices(remaining)
    if not idx:
        return False
    if len(table.tie_classes) > 1:
        return True
    w = profile.log_weights[list(idx)]
    gain = float(w[w > 0].sum())
    loss = float(w[w < 0].sum())
    best_up = gain if (w > 0).any() else float(w.max())
    worst_down = loss if (w < 0).any() else float(w.min())
    d = profile.default_log_belief

    leader = table.tie_classes[0]
    if table.voted[leader]:
        floor = table.log_belief[leader] + loss
    else:
        floor = min(d, worst_down)
    for k, (b, v) in enumerate(zip(table.log_belief, table.voted)):
        if k == leader:
            continue
        ceiling = b + gain if v else max(d, best_up)
        if ceiling >= floor - TIE_TOL:
            return True
    return False


def invocation_order(plan: SelectionPlan, profile: ClassProfile) -> list[str]:
    """Plan models by descending p; cheaper first, then id, on equal p."""
    def key(m):
        e = profile.entries[profile.index_of(m)]
        return (-e.success_prob, e.query_cost, m)
    return sorted(plan.chosen, key=key)


def _execute(plan, profile, backend, query_id, seed, adaptive: bool) -> RunRecord:
    if not plan.chosen:
        raise ValidationError("cannot run an empty plan")
    order = invocation_order(plan, profile)
    obs = Observation()
    invoked: list[str] = []
    costs: list[float] = []
    table = belief_table(profile, obs)

    def partial():
        spent = math.fsum(costs)
        return RunRecord(query_id, tuple(invoked), obs, None, spent, plan.planned_cost - spent)

    for pos, model in enumerate(order):
        if adaptive and not should_continue(profile, order[pos:], table):
            break
        try:
            resp = backend.invoke(model, query_id)
        except BackendError as exc:
            raise BackendError(str(exc), partial()) from exc
        except Exception as exc:
            raise BackendError(f"backend failed for model {model!r}: {exc}", partial()) from exc
        if math.fsum(costs + [resp.actual_cost]) > plan.budget:
            raise BudgetExceededError(
                f"query {query_id!r}: invoking {model!r} would exceed budget {plan.budget}",
                partial())
        invoked.append(model)
        costs.append(resp.actual_cost)
        obs = obs.extended(model, resp.predicted_class)
        table = belief_table(profile, obs)

    prediction = aggregate_prediction(table, make_rng(seed, "tie", query_id))
    spent = math.fsum(costs)
    return RunRecord(query_id, tuple(invoked), obs, prediction, spent, plan.planned_cost - spent)


def adaptive_run(plan: SelectionPlan, profile: ClassProfile, backend: ModelBackend,
                 query_id: str, seed: int = 0) -> RunRecord:
    return _execute(plan, profile, backend, query_id, seed, adaptive=True)


def full_run(plan: SelectionPlan, profile: ClassProfile, backend: ModelBackend,
             query_id: str, seed: int = 0) -> RunRecord:
    """Invoke every planned model; the reference the adaptive run must agree with."""
    return _execute(plan, profile, backend, query_id, seed, adaptive=False)
