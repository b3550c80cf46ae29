"""fvlab: N drifted nearest-neighbor walks with jump-to-a-survivor selection.

Event-driven exact simulation of the interacting-walk system, the multitype
branching population that dominates it, the black/red/green coupling, and the
quantitative checks built on them: rate-function identities, Poisson tail
bounds, exceedance and exponential-moment lemmas, bad-set probabilities, the
drift inequality on the log(N) time skeleton, and stationary scaling of the
rightmost walk against a truncated conditioned-evolution oracle.
"""

__version__ = "0.1.0"

from .params import (Configuration, RngStream, Schedule, WalkParams, all_at,
                     make_schedule, schedule_from_big_a, validate_params)
from .rates import (RateValue, lambda_fn, poisson_tail_lower, poisson_tail_upper,
                    rate_i, rate_i_numeric, rate_i_tilde, walk_increment_pmf)
from .simulator import (EventLog, StationarySample, TrajectoryStats,
                        empirical_measure, sample_stationary, simulate, step)
from .branching import (BranchingPopulation, check_exp_moment_lemma,
                        check_tail_lemma, simulate_branching)
from .coloring import (BadSetReport, ColoredState, check_green_identity,
                       estimate_bad_probability, estimate_event_rates,
                       simulate_colored)
from .analysis import (DriftReport, QsdOracle, ScalingReport, check_foster_drift,
                       compare_empirical_to_qsd, compute_qsd_oracle,
                       stationary_scaling)

__all__ = [
    "Configuration", "RngStream", "Schedule", "WalkParams", "all_at",
    "make_schedule", "schedule_from_big_a", "validate_params",
    "RateValue", "lambda_fn", "poisson_tail_lower", "poisson_tail_upper",
    "rate_i", "rate_i_numeric", "rate_i_tilde", "walk_increment_pmf",
    "EventLog", "StationarySample", "TrajectoryStats", "empirical_measure",
    "sample_stationary", "simulate", "step",
    "BranchingPopulation", "check_exp_moment_lemma", "check_tail_lemma",
    "simulate_branching",
    "BadSetReport", "ColoredState", "check_green_identity",
    "estimate_bad_probability", "estimate_event_rates", "simulate_colored",
    "DriftReport", "QsdOracle", "ScalingReport", "check_foster_drift",
    "compare_empirical_to_qsd", "compute_qsd_oracle", "stationary_scaling",
]
