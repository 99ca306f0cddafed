"""Model pools, per-class profiles, budgets and token pricing.

A catalog lists raw prices per million tokens. A :class:`ClassProfile` is the
view of the pool for one query class: how many labels there are, and for each
model its success probability and its (fixed) cost per query. Row order in a
profile defines model order everywhere downstream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ensemble_select.errors import ParseError, ValidationError

P_FLOOR = 1e-3
P_CAP = 1.0 - 1e-3

CATALOG_HEADER = ("id", "price_in", "price_out")
PROFILE_HEADER = ("model_id", "success_prob", "query_cost")


@dataclass(frozen=True)
class ModelSpec:
    id: str
    price_in: float  # USD per 1M input tokens
    price_out: float  # USD per 1M output tokens

    def __post_init__(self):
        if self.price_in < 0 or self.price_out < 0:
            raise ValidationError(f"negative price for model {self.id!r}")


@dataclass(frozen=True)
class ProfileEntry:
    model_id: str
    success_prob: float
    query_cost: float


@dataclass(frozen=True)
class ClassProfile:
    """Per-query-class view of the model pool.

    Construction does not validate; pass the result through
    :func:`validate_profile` (the loaders do this for you).
    """

    class_count: int
    entries: tuple[ProfileEntry, ...] = field(default_factory=tuple)

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))

    @classmethod
    def from_lists(cls, class_count: int, probs: Sequence[float], costs: Sequence[float],
                   ids: Sequence[str] | None = None) -> "ClassProfile":
        if ids is None:
            ids = [f"l{i + 1}" for i in range(len(probs))]
        if not (len(ids) == len(probs) == len(costs)):
            raise ValidationError("ids, probs and costs must have equal length")
        entries = tuple(ProfileEntry(str(m), float(p), float(c)) for m, p, c in zip(ids, probs, costs))
        return validate_profile(cls(int(class_count), entries))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(e.model_id for e in self.entries)

    @cached_property
    def probs(self) -> np.ndarray:
        a = np.array([e.success_prob for e in self.entries], dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def costs(self) -> np.ndarray:
        a = np.array([e.query_cost for e in self.entries], dtype=float)
        a.flags.writeable = False
        return a

    @cached_property
    def log_weights(self) -> np.ndarray:
        """ln(p (K-1) / (1-p)) per model: the log of its vote weight."""
        p = self.probs
        a = np.log(p * (self.class_count - 1) / (1.0 - p))
        a.flags.writeable = False
        return a

    @cached_property
    def default_log_belief(self) -> float:
        """Log belief assigned to a class nobody voted for.

        Uses the minimum probability over the whole pool, not just the
        models that were observed.
        """
        p_min = float(self.probs.min())
        return math.log(p_min / (2.0 * (1.0 - p_min)))

    @cached_property
    def _index(self) -> dict[str, int]:
        return {m: i for i, m in enumerate(self.model_ids)}

    def index_of(self, model_id: str) -> int:
        try:
            return self._index[model_id]
        except KeyError:
            raise ValidationError(f"unknown model id {model_id!r}") from None

    def indices(self, subset: Iterable[str | int]) -> tuple[int, ...]:
        """Sorted, de-duplicated model indices for ids or raw indices."""
        out = set()
        for m in subset:
            if isinstance(m, (int, np.integer)):
                if not 0 <= m < len(self.entries):
                    raise ValidationError(f"model index {m} out of range")
                out.add(int(m))
            else:
                out.add(self.index_of(m))
        return tuple(sorted(out))

    def ids_for(self, indices: Iterable[int]) -> tuple[str, ...]:
        ids = self.model_ids
        return tuple(ids[i] for i in indices)

    def total_cost(self, subset: Iterable[str | int]) -> float:
        return math.fsum(self.entries[i].query_cost for i in self.indices(subset))

    def with_probs(self, probs: Sequence[float]) -> "ClassProfile":
        """Same models and costs, new success probabilities (clamped)."""
        if len(probs) != len(self.entries):
            raise ValidationError("probability vector length does not match the pool")
        entries = tuple(replace(e, success_prob=float(p)) for e, p in zip(self.entries, probs))
        return validate_profile(ClassProfile(self.class_count, entries))


@dataclass(frozen=True)
class SelectionProblem:
    profile: ClassProfile
    budget: float

    def __post_init__(self):
        if not self.budget > 0:
            raise ValidationError(f"budget must be positive, got {self.budget}")


def clamp_prob(p: float) -> float:
    return min(max(float(p), P_FLOOR), P_CAP)


def validate_profile(profile: ClassProfile) -> ClassProfile:
    """Check invariants and clamp probabilities into [P_FLOOR, P_CAP].

    Idempotent: a validated profile comes back unchanged.
    """
    if profile.class_count < 2:
        raise ValidationError(f"class count must be at least 2, got {profile.class_count}")
    if not profile.entries:
        raise ValidationError("profile has no models")
    seen = set()
    entries = []
    for e in profile.entries:
        if e.model_id in seen:
            raise ValidationError(f"duplicate model id {e.model_id!r}")
        seen.add(e.model_id)
        if not math.isfinite(e.success_prob) or not 0.0 <= e.success_prob <= 1.0:
            raise ValidationError(f"success probability of {e.model_id!r} outside [0, 1]")
        if not (math.isfinite(e.query_cost) and e.query_cost > 0):
            raise ValidationError(f"query cost of {e.model_id!r} must be positive")
        p = clamp_prob(e.success_prob)
        entries.append(e if p == e.success_prob else replace(e, success_prob=p))
    entries = tuple(entries)
    if entries == profile.entries:
        return profile
    return ClassProfile(profile.class_count, entries)


def query_cost_from_tokens(spec: ModelSpec, in_tokens: int, out_tokens: int) -> float:
    return in_tokens * spec.price_in / 1e6 + out_tokens * spec.price_out / 1e6


def _data_rows(path: Path, header: tuple[str, ...], skip: int = 0):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for _ in range(skip):
            next(reader, None)
        first = next(reader, None)
        line = skip + 1
        if first is None or tuple(c.strip() for c in first) != header:
            raise ParseError(path, line, f"expected header {','.join(header)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, line, f"expected {len(header)} fields, got {len(row)}")
            yield line, [c.strip() for c in row]


def _parse_float(path, line, text, what):
    try:
        return float(text)
    except ValueError:
        raise ParseError(path, line, f"{what} is not a number: {text!r}") from None


def load_catalog(path) -> list[ModelSpec]:
    path = Path(path)
    specs: list[ModelSpec] = []
    seen = set()
    for line, (mid, pin, pout) in _data_rows(path, CATALOG_HEADER):
        if mid in seen:
            raise ParseError(path, line, f"duplicate id {mid!r}")
        seen.add(mid)
        try:
            specs.append(ModelSpec(mid, _parse_float(path, line, pin, "price_in"),
                                   _parse_float(path, line, pout, "price_out")))
        except ValidationError as exc:
            raise ParseError(path, line, str(exc)) from None
    return specs


def save_catalog(specs: Iterable[ModelSpec], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CATALOG_HEADER)
        for s in specs:
            w.writerow([s.id, repr(float(s.price_in)), repr(float(s.price_out))])


def _read_meta(path: Path) -> dict[str, str]:
    with open(path) as fh:
        line = fh.readline().strip()
    meta = {}
    for token in line.split(","):
        key, sep, value = token.partition("=")
        if not sep:
            raise ParseError(path, 1, "expected metadata line K=<int>")
        meta[key.strip()] = value.strip()
    if "K" not in meta or set(meta) - {"K", "B"}:
        raise ParseError(path, 1, "expected metadata line K=<int> (optionally ,B=<budget>)")
    return meta


def load_profile(path) -> ClassProfile:
    """Read a profile file; an optional ``B=`` metadata entry is ignored here."""
    path = Path(path)
    meta = _read_meta(path)
    try:
        k = int(meta["K"])
    except ValueError:
        raise ParseError(path, 1, f"bad class count {meta['K']!r}") from None
    entries = []
    for line, (mid, p, c) in _data_rows(path, PROFILE_HEADER, skip=1):
        entries.append(ProfileEntry(mid, _parse_float(path, line, p, "success_prob"),
                                    _parse_float(path, line, c, "query_cost")))
    try:
        return validate_profile(ClassProfile(k, tuple(entries)))
    except ValidationError as exc:
        raise ValidationError(f"{path}: {exc}") from None


def save_profile(profile: ClassProfile, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"K={profile.class_count}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PROFILE_HEADER)
        for e in profile.entries:
            w.writerow([e.model_id, repr(e.success_prob), repr(e.query_cost)])


def load_problem(path, budget: float | None = None) -> SelectionProblem:
    """A profile file whose metadata line also carries ``B=<budget>``.

    An explicit ``budget`` overrides the file's.
    """
    path = Path(path)
    profile = load_profile(path)
    if budget is None:
        meta = _read_meta(path)
        if "B" not in meta:
            raise ValidationError(f"{path}: no budget given (add B=<budget> or pass one)")
        budget = _parse_float(path, 1, meta["B"], "budget")
    return SelectionProblem(profile, budget)
