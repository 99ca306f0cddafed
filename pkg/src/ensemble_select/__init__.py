"""Budget-constrained ensemble selection for classification queries."""

from ensemble_select.aggregation import (
    BeliefTable,
    Observation,
    aggregate_prediction,
    belief_table,
    likelihood,
    observation_probability,
    potential_belief,
)
from ensemble_select.catalog import (
    ClassProfile,
    ModelSpec,
    ProfileEntry,
    SelectionProblem,
    load_catalog,
    load_profile,
    query_cost_from_tokens,
    save_catalog,
    save_profile,
    validate_profile,
)
from ensemble_select.correctness import (
    ExactEvaluator,
    MonteCarloEvaluator,
    PAEstimate,
    SurrogateEvaluator,
    exact_pa,
    mc_pa,
    required_samples,
    surrogate_gamma,
)
from ensemble_select.selection import (
    Diagnostics,
    SelectionPlan,
    greedy,
    guarantee_ratio,
    plan_thrift,
    surrogate_greedy,
)
from ensemble_select.runtime import (
    ReplayBackend,
    RunRecord,
    SimulatedBackend,
    adaptive_run,
    full_run,
    should_continue,
    simulated_invoke,
)

__all__ = [
    "BeliefTable",
    "ClassProfile",
    "Diagnostics",
    "ExactEvaluator",
    "ModelSpec",
    "MonteCarloEvaluator",
    "Observation",
    "PAEstimate",
    "ProfileEntry",
    "ReplayBackend",
    "RunRecord",
    "SelectionPlan",
    "SelectionProblem",
    "SimulatedBackend",
    "SurrogateEvaluator",
    "adaptive_run",
    "aggregate_prediction",
    "belief_table",
    "exact_pa",
    "full_run",
    "greedy",
    "guarantee_ratio",
    "likelihood",
    "load_catalog",
    "load_profile",
    "mc_pa",
    "observation_probability",
    "plan_thrift",
    "potential_belief",
    "query_cost_from_tokens",
    "required_samples",
    "save_catalog",
    "save_profile",
    "should_continue",
    "simulated_invoke",
    "surrogate_gamma",
    "surrogate_greedy",
    "validate_profile",
]
