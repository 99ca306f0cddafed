from __future__ import annotations

import math

import numpy as np
import pytest

import _reference as ref
from ensemble_select.aggregation import (
    Observation,
    aggregate_prediction,
    belief_table,
    likelihood,
    observation_probability,
    potential_belief,
)
from ensemble_select.catalog import ClassProfile
from ensemble_select.errors import ValidationError


@pytest.fixture
def fig2():
    return ClassProfile.from_lists(3, [0.9, 0.8, 0.8], [1, 1, 1])


def test_observation_probability_fig2(fig2):
    obs = Observation.of([("l1", 0), ("l2", 0), ("l3", 2)])
    want = [0.072, 0.0005, 0.004]
    for k, w in enumerate(want):
        assert abs(observation_probability(fig2, ["l1", "l2", "l3"], k, obs) - w) <= 1e-12
        assert abs(float(ref.observation_prob([0.9, 0.8, 0.8], 3, (0, 0, 2), k)) - w) <= 1e-15


def test_observation_must_cover_subset(fig2):
    obs = Observation.of([("l1", 0)])
    with pytest.raises(ValidationError):
        observation_probability(fig2, ["l1", "l2"], 0, obs)


def test_observation_rejects_repeated_model():
    with pytest.raises(ValidationError):
        Observation.of([("l1", 0), ("l1", 1)])


def test_observation_class_range(fig2):
    with pytest.raises(ValidationError):
        belief_table(fig2, Observation.of([("l1", 3)]))


def test_likelihood_of_empty_observation(fig2):
    with pytest.raises(ValidationError):
        likelihood(fig2, [], 0, Observation())


def test_belief_table_fig2(fig2):
    t = belief_table(fig2, Observation.of([("l1", 0), ("l2", 0), ("l3", 2)]))
    assert math.isclose(math.exp(t.log_belief[0]), 144.0, rel_tol=1e-12)
    assert math.isclose(math.exp(t.log_belief[1]), 2.0, rel_tol=1e-12)
    assert math.isclose(math.exp(t.log_belief[2]), 8.0, rel_tol=1e-12)
    assert t.voted == (True, False, True)
    assert t.tie_classes == (0,)
    assert math.isclose(math.exp(t.log_h2), 8.0, rel_tol=1e-12)


def test_belief_ranks_like_likelihood(fig2):
    rng = np.random.default_rng(0)
    for _ in range(50):
        votes = rng.integers(0, 3, size=3)
        obs = Observation.of(zip(fig2.model_ids, votes.tolist()))
        t = belief_table(fig2, obs)
        lik = [likelihood(fig2, fig2.model_ids, k, obs) for k in range(3)]
        voted = [k for k in range(3) if t.voted[k]]
        # among voted classes the belief order follows the likelihood order
        for a in voted:
            for b in voted:
                if lik[a] > lik[b] * (1 + 1e-9):
                    assert t.log_belief[a] > t.log_belief[b]


def test_tie_broken_by_rng(fig2):
    t = belief_table(fig2, Observation.of([("l2", 0), ("l3", 1)]))
    assert t.tie_classes == (0, 1)
    seen = {aggregate_prediction(t, s) for s in range(50)}
    assert seen == {0, 1}
    assert aggregate_prediction(t, 7) == aggregate_prediction(t, np.random.default_rng(7))


def test_no_rng_draw_without_tie(fig2):
    t = belief_table(fig2, Observation.of([("l1", 2)]))
    rng = np.random.default_rng(3)
    state = rng.bit_generator.state
    assert aggregate_prediction(t, rng) == 2
    assert rng.bit_generator.state == state


def test_empty_observation_is_all_default(fig2):
    t = belief_table(fig2, Observation())
    assert len(set(t.log_belief)) == 1
    assert t.tie_classes == (0, 1, 2)


def test_potential_belief(fig2):
    assert math.isclose(math.exp(potential_belief(fig2, ["l2", "l3"])), 64.0, rel_tol=1e-12)
    assert potential_belief(fig2, []) == 0.0


def test_log_domain_survives_many_models():
    # 400 models at p=0.999 overflow a direct product of weights
    L = 400
    prof = ClassProfile.from_lists(2, [0.999] * L, [1] * L)
    obs = Observation.of([(m, 0) for m in prof.model_ids])
    t = belief_table(prof, obs)
    assert math.isfinite(t.log_h1)
    assert t.tie_classes == (0,)
