"""Correlation-aware energy, heat, work and entropy ledgers for bipartite quantum systems."""

from .accounting import (
    BipartiteSystem,
    EnergySplit,
    FluxRates,
    JointState,
    effective_hamiltonians,
    flux_rates,
    internal_energies,
    thermo_quantities,
)
from .dynamics import (
    LindbladGenerator,
    ThermoLedger,
    TimeGrid,
    Trajectory,
    build_ledger,
    propagate_exact,
    propagate_lindblad,
    propagate_piecewise,
)
from .errors import (
    ConvergenceError,
    CorrThermoError,
    DimensionError,
    InvalidStateError,
    InvariantViolation,
    NotHermitianError,
    PreconditionError,
    ScenarioError,
    StepSizeError,
    TruncationError,
)
from .linalg import CompositeLayout, partial_trace, von_neumann_entropy
from .runner import compare_analytic, run_scenario
from .scenario import parse_scenario

__version__ = "0.1.0"

__all__ = [
    "BipartiteSystem", "CompositeLayout", "ConvergenceError", "CorrThermoError", "DimensionError",
    "EnergySplit", "FluxRates", "InvalidStateError", "InvariantViolation", "JointState",
    "LindbladGenerator", "NotHermitianError", "PreconditionError", "ScenarioError", "StepSizeError",
    "ThermoLedger", "TimeGrid", "Trajectory", "TruncationError", "build_ledger", "compare_analytic",
    "effective_hamiltonians", "flux_rates", "internal_energies", "parse_scenario", "partial_trace",
    "propagate_exact", "propagate_lindblad", "propagate_piecewise", "run_scenario",
    "thermo_quantities", "von_neumann_entropy",
]
