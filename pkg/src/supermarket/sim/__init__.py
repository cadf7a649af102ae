"""Finite-N simulation of the supermarket game."""

from .coupling import CouplingReport, coupled_config, run_coupled_sim
from .engine import (
    SCHEMA_VERSION,
    Estimate,
    SimConfig,
    SimResult,
    default_warmup,
    run_equilibrium_sim,
    write_tail_csv,
)
from .experiments import (
    ChaosGap,
    DeviationResult,
    ExternalityReport,
    GainCurvePoint,
    chaoticity_gaps,
    deviation_gain_curve,
    estimate_deviation_cost,
    min_of_two_mm1_wait,
    mm2_wait,
    two_server_externality,
)
