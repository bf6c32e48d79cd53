"""Transport model of a re-entrant production line with optimal boundary control."""

from .control import (
    CostWeights,
    RiccatiKernel,
    cost,
    costate_sweep,
    feedback_control,
    gradient,
    solve_open_loop,
    solve_riccati_steady,
    solve_riccati_transient,
)
from .errors import (
    DimensionMismatch,
    InfeasibleFlux,
    InvalidLadder,
    NegativeInflux,
    NoConvergence,
    NonPositiveVelocity,
    NonSymmetricKernel,
    ParseError,
    RefabError,
    ResolutionViolation,
)
from .experiments import MinifabScenario, TrackingMetrics, minifab_params, run_step_demand, sweep
from .linear import LinearModel, StageLadder, build_ladder, linearize, simulate_linear
from .regulator import (
    Exosystem,
    FeedforwardSolution,
    StagedController,
    exo_state,
    feedforward_gain,
    run_tracking,
    solve_regulator,
    stage_control,
)
from .transport import (
    DensityField,
    TimeSeries,
    VelocityParams,
    simulate_nonlinear,
    steady_density_for_flux,
    velocity,
    wip,
)

__version__ = "0.1.0"

__all__ = [
    "CostWeights",
    "RiccatiKernel",
    "cost",
    "costate_sweep",
    "feedback_control",
    "gradient",
    "solve_open_loop",
    "solve_riccati_steady",
    "solve_riccati_transient",
    "DimensionMismatch",
    "InfeasibleFlux",
    "InvalidLadder",
    "NegativeInflux",
    "NoConvergence",
    "NonPositiveVelocity",
    "NonSymmetricKernel",
    "ParseError",
    "RefabError",
    "ResolutionViolation",
    "Exosystem",
    "FeedforwardSolution",
    "StagedController",
    "exo_state",
    "feedforward_gain",
    "run_tracking",
    "solve_regulator",
    "stage_control",
    "DensityField",
    "TimeSeries",
    "VelocityParams",
    "simulate_nonlinear",
    "steady_density_for_flux",
    "velocity",
    "wip",
    "MinifabScenario",
    "TrackingMetrics",
    "minifab_params",
    "run_step_demand",
    "sweep",
    "LinearModel",
    "StageLadder",
    "build_ladder",
    "linearize",
    "simulate_linear",
]
