"""Discounted optimal stopping on finite semi-Markov processes."""

from smpstop.distributions import Deterministic, Empirical, Exponential, Weibull
from smpstop.equivalence import (
    StationaryPolicy,
    build_smdp,
    induce_policy,
    induce_stopping_time,
    round_trip_check,
    smdp_value_iterate,
)
from smpstop.errors import (
    ModelError,
    NoWitnessError,
    NumericalError,
    QuadratureError,
    SmpStopError,
)
from smpstop.history import DELTA, SmdpHistory, SmpHistory
from smpstop.model import (
    KernelSpec,
    Model,
    RegularityWitness,
    find_regularity_witness,
    load_model,
    model_from_dict,
)
from smpstop.moments import DiscountedMoments, QuadratureConfig, compute_moments, contraction_modulus
from smpstop.simulate import EstimatorReport, Trajectory, estimate_value, sample_trajectory, simulate_smdp_policy
from smpstop.solver import (
    ValueFunction,
    bellman_apply,
    brute_force_optimum,
    compute_iteration_budget,
    evaluate_hitting_rule,
    value_iterate,
)
from smpstop.stopping import (
    FirstEpoch,
    HittingSet,
    Predicate,
    StoppingCertificate,
    extract_stop_set,
    stopping_time_of,
)

__version__ = "0.1.0"
