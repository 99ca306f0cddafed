"""Correctness probability of a model subset, exact and sampled.

The correctness probability of a subset is the chance that its aggregated
prediction matches the truth on a random query of the class. It does not
depend on which class is true, so both routes fix the truth to class 0.

``exact_pa`` enumerates all K^|S| observations and splits tied mass evenly
(the expectation under random tie-breaking). ``mc_pa`` simulates queries and
counts successes. ``surrogate_gamma`` is the submodular upper bound
1 - prod(1 - p).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ensemble_select._seeding import derive_seed
from ensemble_select.aggregation import score_matrix, tie_mask
from ensemble_select.catalog import ClassProfile
from ensemble_select.errors import InstanceTooLargeError, ValidationError

EXACT_THRESHOLD = 2_000_000
_CHUNK = 1 << 17
_MC_BATCH = 1 << 16


@dataclass(frozen=True)
class PAEstimate:
    value: float
    method: str  # "exact" | "monte_carlo"
    samples_used: int = 0
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0 + 1e-12:
            raise ValidationError(f"correctness probability {self.value} outside [0, 1]")
        if self.method == "exact" and self.samples_used:
            raise ValidationError("exact estimates use no samples")


def observation_count(class_count: int, size: int) -> int:
    return class_count ** size


def exact_pa(profile: ClassProfile, subset, threshold: int = EXACT_THRESHOLD,
             truth: int = 0) -> PAEstimate:
    """Enumerate every observation of ``subset`` and sum the correct ones.

    The empty subset has correctness 0 by convention.
    """
    idx = profile.indices(subset)
    k = profile.class_count
    if not 0 <= truth < k:
        raise ValidationError(f"truth class {truth} outside [0, {k})")
    n = len(idx)
    if n == 0:
        return PAEstimate(0.0, "exact")
    total_obs = observation_count(k, n)
    if total_obs > threshold:
        raise InstanceTooLargeError(
            f"{total_obs} observations for {n} models and {k} classes exceeds {threshold}")

    p = profile.probs[list(idx)]
    lw = profile.log_weights[list(idx)]
    wrong = (1.0 - p) / (k - 1)
    place = k ** np.arange(n, dtype=np.int64)
    acc = 0.0
    for start in range(0, total_obs, _CHUNK):
        code = np.arange(start, min(start + _CHUNK, total_obs), dtype=np.int64)
        votes = (code[:, None] // place) % k
        prob = np.where(votes == truth, p, wrong).prod(axis=1)
        ties = tie_mask(score_matrix(votes, lw, k, profile.default_log_belief))
        share = ties[:, truth] / ties.sum(axis=1)
        acc += float(np.dot(prob, share))
    return PAEstimate(min(acc, 1.0), "exact")


def simulate_votes(rng: np.random.Generator, probs: np.ndarray, class_count: int,
                   n: int, truth: int = 0) -> np.ndarray:
    """(n, len(probs)) predicted classes; wrong answers uniform over the others."""
    correct = rng.random((n, probs.size)) < probs
    # draw from the K-1 wrong classes by skipping over the true one
    wrong = rng.integers(0, class_count - 1, size=(n, probs.size))
    wrong = wrong + (wrong >= truth)
    return np.where(correct, truth, wrong)


def mc_pa(profile: ClassProfile, subset, samples: int, seed: int) -> PAEstimate:
    """Monte Carlo correctness probability from ``samples`` simulated queries.

    Work is split into fixed-size batches whose streams derive from
    (seed, batch index), and integer success counts are summed before a
    single division, so the result is independent of batch scheduling.
    """
    if samples < 1:
        raise ValidationError("samples must be at least 1")
    idx = profile.indices(subset)
    if not idx:
        return PAEstimate(0.0, "monte_carlo", samples, seed)
    k = profile.class_count
    p = profile.probs[list(idx)]
    lw = profile.log_weights[list(idx)]
    hits = 0
    for b, start in enumerate(range(0, samples, _MC_BATCH)):
        m = min(_MC_BATCH, samples - start)
        rng = np.random.default_rng([seed, b])
        votes = simulate_votes(rng, p, k, m)
        ties = tie_mask(score_matrix(votes, lw, k, profile.default_log_belief))
        pick = np.argmax(ties * rng.random((m, k)), axis=1)
        hits += int(np.count_nonzero(pick == 0))
    return PAEstimate(hits / samples, "monte_carlo", samples, seed)


def required_samples(epsilon: float, delta: float, p_star: float, L: int) -> int:
    """Simulations needed for |estimate - truth| <= eps p*/2 w.p. >= 1 - delta/L^2."""
    # epsilon = 1 is allowed as the boundary case
    if not 0.0 < epsilon <= 1.0:
        raise ValidationError(f"epsilon must lie in (0, 1], got {epsilon}")
    for name, v in (("delta", delta), ("p_star", p_star)):
        if not 0.0 < v < 1.0:
            raise ValidationError(f"{name} must lie in (0, 1), got {v}")
    if L < 1:
        raise ValidationError("L must be positive")
    theta = (8 + 2 * epsilon) / (epsilon ** 2 * p_star) * math.log(2 * L * L / delta)
    return max(1, math.ceil(theta))


def surrogate_gamma(profile: ClassProfile, subset) -> float:
    idx = profile.indices(subset)
    if not idx:
        return 0.0
    return 1.0 - float(np.prod(1.0 - profile.probs[list(idx)]))


class _CachedEvaluator:
    """Set-function evaluator with a per-subset cache.

    Calling the evaluator returns a float; subsets are accepted as ids or
    indices and canonicalised, so re-evaluating a subset is free and returns
    the same number.
    """

    def __init__(self, profile: ClassProfile):
        self.profile = profile
        self._cache: dict[tuple[int, ...], object] = {}
        self.evaluations = 0

    def _compute(self, idx: tuple[int, ...]):
        raise NotImplementedError

    def estimate(self, subset: Iterable):
        idx = self.profile.indices(subset)
        hit = self._cache.get(idx)
        if hit is None:
            hit = self._compute(idx)
            self._cache[idx] = hit
            self.evaluations += 1
        return hit

    def __call__(self, subset: Iterable) -> float:
        est = self.estimate(subset)
        return est.value if isinstance(est, PAEstimate) else float(est)


class ExactEvaluator(_CachedEvaluator):
    kind = "pa"

    def __init__(self, profile: ClassProfile, threshold: int = EXACT_THRESHOLD):
        super().__init__(profile)
        self.threshold = threshold

    def _compute(self, idx):
        return exact_pa(self.profile, idx, self.threshold)


class MonteCarloEvaluator(_CachedEvaluator):
    """Monte Carlo evaluator with common random numbers.

    Each subset draws from its own stream keyed by (seed, subset), so the
    same subset always gets the same estimate within and across runs.
    """

    kind = "pa"

    def __init__(self, profile: ClassProfile, samples: int, seed: int = 0):
        super().__init__(profile)
        self.samples = int(samples)
        self.seed = int(seed)

    def _compute(self, idx):
        return mc_pa(self.profile, idx, self.samples, derive_seed(self.seed, "subset", idx))


class SurrogateEvaluator(_CachedEvaluator):
    kind = "gamma"

    def _compute(self, idx):
        return surrogate_gamma(self.profile, idx)
