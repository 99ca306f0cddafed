"""Observation probabilities, beliefs and maximum-likelihood aggregation.

Each model that votes for class k multiplies that class's belief by
p (K-1) / (1-p); a class nobody voted for gets a fixed default derived from
the weakest model in the pool. The winning class is the belief argmax. All
arithmetic happens on natural logs of beliefs, which keeps products over many
models finite and preserves order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from ensemble_select.catalog import ClassProfile
from ensemble_select.errors import ValidationError

# Two log-beliefs closer than this are treated as tied. Sums of the same
# weights taken in a different order differ by a few ulps; genuinely distinct
# beliefs on random profiles are many orders of magnitude further apart.
TIE_TOL = 1e-9


@dataclass(frozen=True)
class Observation:
    """Ordered (model_id, predicted_class) responses for one query."""

    responses: tuple[tuple[str, int], ...] = ()

    def __post_init__(self):
        resp = tuple((str(m), int(c)) for m, c in self.responses)
        ids = [m for m, _ in resp]
        if len(set(ids)) != len(ids):
            raise ValidationError("a model appears more than once in the observation")
        object.__setattr__(self, "responses", resp)

    @classmethod
    def of(cls, pairs: Iterable[tuple[str, int]]) -> "Observation":
        return cls(tuple(pairs))

    def __len__(self) -> int:
        return len(self.responses)

    @property
    def model_ids(self) -> tuple[str, ...]:
        return tuple(m for m, _ in self.responses)

    def extended(self, model_id: str, predicted_class: int) -> "Observation":
        return Observation(self.responses + ((model_id, predicted_class),))

    def validate(self, profile: ClassProfile) -> None:
        for m, c in self.responses:
            profile.index_of(m)
            if not 0 <= c < profile.class_count:
                raise ValidationError(f"class {c} from {m!r} outside [0, {profile.class_count})")


@dataclass(frozen=True)
class BeliefTable:
    log_belief: tuple[float, ...]
    voted: tuple[bool, ...]

    @property
    def tie_classes(self) -> tuple[int, ...]:
        top = max(self.log_belief)
        return tuple(k for k, b in enumerate(self.log_belief) if b >= top - TIE_TOL)

    @property
    def log_h1(self) -> float:
        return max(self.log_belief)

    @property
    def log_h2(self) -> float:
        """Second-highest log belief (equals ``log_h1`` under a tie)."""
        ordered = sorted(self.log_belief, reverse=True)
        return ordered[1]


def _check_covers(profile: ClassProfile, subset, obs: Observation) -> tuple[int, ...]:
    obs.validate(profile)
    idx = profile.indices(subset)
    if profile.indices(obs.model_ids) != idx:
        raise ValidationError("observation does not cover exactly the models in the subset")
    return idx


def observation_probability(profile: ClassProfile, subset, assumed_truth: int,
                            obs: Observation) -> float:
    """Probability of seeing ``obs`` when the true class is ``assumed_truth``."""
    _check_covers(profile, subset, obs)
    k = profile.class_count
    prob = 1.0
    for m, c in obs.responses:
        p = profile.entries[profile.index_of(m)].success_prob
        prob *= p if c == assumed_truth else (1.0 - p) / (k - 1)
    return prob


def likelihood(profile: ClassProfile, subset, k: int, obs: Observation) -> float:
    """Likelihood that class ``k`` is the ground truth given ``obs``.

    Numerically this is the observation probability under truth ``k``; it is
    kept as its own entry point because callers rank classes by it.
    """
    if not obs.responses:
        raise ValidationError("likelihood of an empty observation is undefined")
    return observation_probability(profile, subset, k, obs)


def belief_table(profile: ClassProfile, obs: Observation) -> BeliefTable:
    obs.validate(profile)
    k = profile.class_count
    sums = [0.0] * k
    voted = [False] * k
    lw = profile.log_weights
    for m, c in obs.responses:
        sums[c] += float(lw[profile.index_of(m)])
        voted[c] = True
    d = profile.default_log_belief
    return BeliefTable(tuple(s if v else d for s, v in zip(sums, voted)), tuple(voted))


def aggregate_prediction(table: BeliefTable, rng) -> int:
    """Belief argmax; ties are broken uniformly with the supplied randomness.

    ``rng`` may be a ``numpy.random.Generator`` or an integer seed. It is
    only consumed when there is an actual tie.
    """
    ties = table.tie_classes
    if len(ties) == 1:
        return ties[0]
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return int(ties[int(rng.integers(len(ties)))])


def potential_belief(profile: ClassProfile, subset) -> float:
    """Log of the product of vote weights over ``subset`` (0 for the empty set)."""
    idx = profile.indices(subset)
    return math.fsum(float(profile.log_weights[i]) for i in idx)


def score_matrix(votes: np.ndarray, log_w: np.ndarray, class_count: int,
                 default: float) -> np.ndarray:
    """Log beliefs for a batch of observations.

    ``votes`` is an (n_obs, n_models) integer array of predicted classes,
    ``log_w`` the matching vote weights. Returns (n_obs, class_count).
    """
    n = votes.shape[0]
    out = np.empty((n, class_count))
    for c in range(class_count):
        mask = votes == c
        s = mask.astype(float) @ log_w
        out[:, c] = np.where(mask.any(axis=1), s, default)
    return out


def tie_mask(scores: np.ndarray) -> np.ndarray:
    return scores >= scores.max(axis=1, keepdims=True) - TIE_TOL
