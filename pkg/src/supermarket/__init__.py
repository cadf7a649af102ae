"""Mean-field solver and finite-N simulator for the supermarket game."""

from .equilibrium import (
    BestResponseSet,
    BRKind,
    Equilibrium,
    EquilibriumKind,
    EquilibriumReport,
    Monotonicity,
    SocialOptimum,
    best_response,
    check_local_monotonicity,
    enumerate_nash,
    find_nash,
    is_nash,
    social_optimum,
    two_choice_best_response,
)
from .exceptions import (
    CouplingViolation,
    EquilibriumError,
    NumericalError,
    StepSizeError,
    SupermarketError,
)
from .hetero import (
    CostDensity,
    HeteroResult,
    ThresholdStrategy,
    hetero_best_response,
    hetero_nash,
    mu_from_thresholds,
    thresholds_from_mu,
)
from .mean_field import (
    GameParams,
    Ordering,
    SamplingDistribution,
    TailDistribution,
    expected_wait,
    marginal_value,
    mixed_cost,
    pgf_eval,
    stochastic_compare,
    tail_distribution,
    total_cost,
    transient_ode,
)

__version__ = "0.1.0"
