"""Success-probability estimation from historical correctness records.

Queries are clustered by embedding (density-based, cosine distance); each
cluster yields a profile whose probabilities are column means of the 0/1
history. Hoeffding intervals bracket each estimate, and repeating an interval
procedure and keeping the median-point interval drives its failure
probability down exponentially in the number of repetitions.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from sklearn.cluster import DBSCAN

from ensemble_select.catalog import ClassProfile, ProfileEntry, validate_profile
from ensemble_select.errors import ParseError, ValidationError

NOISE = -1


@dataclass(frozen=True)
class HistoricalMatrix:
    values: np.ndarray  # (N, L) of {0, 1}
    model_ids: tuple[str, ...]
    query_ids: tuple[str, ...]

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2 or v.shape[0] < 1 or v.shape[1] < 1:
            raise ValidationError("historical matrix must be a non-empty N x L array")
        if v.shape != (len(self.query_ids), len(self.model_ids)):
            raise ValidationError("matrix shape does not match its id lists")
        if not np.isin(v, (0, 1)).all():
            raise ValidationError("historical matrix entries must be 0 or 1")
        v = v.astype(np.int8)
        v.flags.writeable = False
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "model_ids", tuple(self.model_ids))
        object.__setattr__(self, "query_ids", tuple(self.query_ids))


@dataclass(frozen=True)
class IntervalEstimate:
    point: float
    lo: float
    hi: float
    confidence: float
    n: int

    def __post_init__(self):
        if not 0.0 <= self.lo <= self.point <= self.hi <= 1.0:
            raise ValidationError(f"interval [{self.lo}, {self.hi}] does not bracket {self.point}")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def covers(self, p: float) -> bool:
        return self.lo <= p <= self.hi


def cluster_queries(embeddings, eps: float, min_pts: int) -> np.ndarray:
    """Cluster label per row; density noise points become singleton clusters.

    Labels are renumbered 0..C-1 in order of first appearance, so the output
    does not depend on the clustering library's internal numbering.
    """
    try:
        x = np.asarray(embeddings, dtype=float)
    except ValueError:
        raise ValidationError("embedding rows have mismatched dimensions") from None
    if x.ndim != 2 or x.shape[1] < 1:
        raise ValidationError("embeddings must be N rows of D >= 1 reals")
    if eps <= 0 or min_pts < 1:
        raise ValidationError("eps must be positive and min_pts at least 1")
    raw = DBSCAN(eps=eps, min_samples=min_pts, metric="cosine").fit_predict(x)
    out = np.empty(len(raw), dtype=int)
    remap: dict[int, int] = {}
    for i, lab in enumerate(raw):
        if lab == NOISE:
            out[i] = len(remap)
            remap[("noise", i)] = out[i]
        else:
            if lab not in remap:
                remap[lab] = len(remap)
            out[i] = remap[lab]
    return out


def cluster_centroids(embeddings, labels) -> np.ndarray:
    """Unit-normalised mean direction of each cluster, indexed by label."""
    x = np.asarray(embeddings, dtype=float)
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    labels = np.asarray(labels)
    cents = np.stack([x[labels == c].mean(axis=0) for c in range(labels.max() + 1)])
    return cents / np.linalg.norm(cents, axis=1, keepdims=True)


def nearest_cluster(embeddings, centroids) -> np.ndarray:
    """Map new queries to the historical cluster with highest cosine similarity."""
    x = np.asarray(embeddings, dtype=float)
    x = x / np.linalg.norm(x, axis=1, keepdims=True)
    return np.argmax(x @ np.asarray(centroids).T, axis=1)


def _cluster_means(matrix: HistoricalMatrix, rows: Sequence[int]) -> np.ndarray:
    rows = list(rows)
    if not rows:
        raise ValidationError("cluster has no queries")
    return matrix.values[rows].mean(axis=0)


def _profile(k: int, ids, probs, costs: Mapping[str, float]) -> ClassProfile:
    missing = [m for m in ids if m not in costs]
    if missing:
        raise ValidationError(f"no query cost for models {missing}")
    entries = tuple(ProfileEntry(m, float(p), float(costs[m])) for m, p in zip(ids, probs))
    return validate_profile(ClassProfile(k, entries))


def estimate_profile(matrix: HistoricalMatrix, rows: Sequence[int], class_count: int,
                     costs: Mapping[str, float]) -> ClassProfile:
    return _profile(class_count, matrix.model_ids, _cluster_means(matrix, rows), costs)


def hoeffding_interval(point: float, n: int, delta_l: float) -> IntervalEstimate:
    if n < 1:
        raise ValidationError("sample count must be positive")
    if not 0.0 < delta_l < 1.0:
        raise ValidationError("delta_l must lie in (0, 1)")
    w = math.sqrt(math.log(2.0 / delta_l) / (2.0 * n))
    return IntervalEstimate(point, max(0.0, point - w), min(1.0, point + w), 1.0 - delta_l, n)


def median_boost(sampler: Callable[[], IntervalEstimate], repetitions: int) -> IntervalEstimate:
    """Run ``sampler`` an odd number of times and return the median-point interval.

    An even ``repetitions`` is rounded up to the next odd number. The
    returned object is one of the sampler's outputs, unchanged.
    """
    if repetitions < 1:
        raise ValidationError("repetitions must be at least 1")
    reps = repetitions if repetitions % 2 else repetitions + 1
    runs = [sampler() for _ in range(reps)]
    order = sorted(range(reps), key=lambda i: runs[i].point)
    return runs[order[reps // 2]]


def required_repetitions(L: int, delta: float, delta_l: float, log=math.log) -> int:
    """Repetitions for median boosting, rounded up to an odd count.

    ``log`` defaults to the natural logarithm; pass e.g. ``math.log10`` to
    use another base.
    """
    if not 0.0 < delta_l < 0.5:
        raise ValidationError("delta_l must lie in (0, 0.5); the repetition count diverges at 0.5")
    if L < 1 or not 0.0 < delta < 1.0:
        raise ValidationError("need L >= 1 and delta in (0, 1)")
    lam = math.ceil(6.0 * log(L / delta) / (1.0 - 2.0 * delta_l) ** 2)
    lam = max(lam, 1)
    return lam if lam % 2 else lam + 1


def profile_bounds(matrix: HistoricalMatrix, rows: Sequence[int], class_count: int,
                   costs: Mapping[str, float], delta_l: float) -> dict[str, ClassProfile]:
    """Low / point / high profiles from per-model Hoeffding intervals."""
    rows = list(rows)
    means = _cluster_means(matrix, rows)
    ivs = [hoeffding_interval(float(m), len(rows), delta_l) for m in means]
    ids = matrix.model_ids
    return {
        "low": _profile(class_count, ids, [iv.lo for iv in ivs], costs),
        "hat": _profile(class_count, ids, [iv.point for iv in ivs], costs),
        "up": _profile(class_count, ids, [iv.hi for iv in ivs], costs),
    }


def load_matrix(path) -> HistoricalMatrix:
    path = Path(path)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or len(header) < 2:
            raise ParseError(path, 1, "expected header query_id,<model ids...>")
        models = [h.strip() for h in header[1:]]
        qids, rows = [], []
        for row in reader:
            if not row:
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num, f"expected {len(header)} fields")
            try:
                vals = [int(c) for c in row[1:]]
            except ValueError:
                raise ParseError(path, reader.line_num, "cells must be 0 or 1") from None
            if any(v not in (0, 1) for v in vals):
                raise ParseError(path, reader.line_num, "cells must be 0 or 1")
            qids.append(row[0].strip())
            rows.append(vals)
    if not rows:
        raise ParseError(path, 2, "no data rows")
    return HistoricalMatrix(np.array(rows), tuple(models), tuple(qids))


def load_embeddings(path) -> dict[str, np.ndarray]:
    path = Path(path)
    out: dict[str, np.ndarray] = {}
    dim = None
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            try:
                vec = np.array([float(c) for c in row[1:]])
            except ValueError:
                if lineno == 1:
                    continue  # header row
                raise ParseError(path, lineno, "embedding components must be numbers") from None
            if dim is None:
                dim = vec.size
            if vec.size != dim or dim == 0:
                raise ParseError(path, lineno, f"expected {dim} components, got {vec.size}")
            out[row[0].strip()] = vec
    return out


def load_costs(path) -> dict[str, float]:
    path = Path(path)
    out = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["model_id", "query_cost"]:
            raise ParseError(path, 1, "expected header model_id,query_cost")
        for row in reader:
            if not row:
                continue
            try:
                out[row[0].strip()] = float(row[1])
            except (ValueError, IndexError):
                raise ParseError(path, reader.line_num, "bad query_cost") from None
    return out
