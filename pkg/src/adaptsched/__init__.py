"""Stochastic makespan scheduling lab: policies with restricted adaptivity.

Simulates delay- and shift-restricted reassignment policies on parallel
identical machines, solves the Bernoulli lower-bound dynamics exactly, and
checks the supporting probability lemmas by enumeration.
"""

from .core import (
    Dist,
    Instance,
    Placement,
    Realization,
    ReassignmentEvent,
    ScheduleTrace,
    TraceStructureError,
    bernoulli_instance,
    expected_value,
    load_instance,
    makespan,
    sample_realization,
    save_instance,
    stream,
    validate_trace,
)
from .lowerbound import (
    BellmanTable,
    RemainingDist,
    balanced_assignment,
    bellman_opt1,
    brute_force_opt1,
    delta_scaling_check,
    dominance_clip_lemma_check,
    estimate_opt1,
    remaining_after_round,
    simulate_lambda,
)
from .prob import (
    DiscreteLaw,
    analysis_constants,
    binom_cdf,
    binom_pmf,
    concentration_reference,
    geom_cdf,
    geom_pmf,
    geom_range_prob,
    stoch_dominates,
    truncated_geom_mean,
)
from .simulate import (
    BalancingPolicy,
    CheckpointMetrics,
    FixedAssignmentPolicy,
    LeptDeltaAlphaPolicy,
    LeptFixPolicy,
    ListSchedulingPolicy,
    Observation,
    Policy,
    PolicyAction,
    PolicyFault,
    checkpoint_metrics,
    compute_T,
    compute_kstar,
    estimate_expected_makespan,
    lept_delta_alpha_policy,
    lept_fix_assignment,
    list_scheduling_makespan,
    list_scheduling_policy,
    run_policy,
)

__version__ = "0.1.0"
