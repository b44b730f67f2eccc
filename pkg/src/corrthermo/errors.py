"""Exception hierarchy shared by the library and the command line."""


class CorrThermoError(Exception):
    """Base class for every error raised by corrthermo."""


class DimensionError(CorrThermoError, ValueError):
    """Operator shapes disagree, or a space exceeds the configured size cap."""


class NotHermitianError(CorrThermoError, ValueError):
    pass


class InvalidStateError(CorrThermoError, ValueError):
    """A matrix fails the density-matrix checks (trace, Hermiticity, positivity)."""


class PreconditionError(CorrThermoError, ValueError):
    pass


class StepSizeError(CorrThermoError, RuntimeError):
    """Fixed-step integration lost positivity; ``suggested_dt`` says what to try."""

    def __init__(self, message: str, suggested_dt: float):
        super().__init__(f"{message} (try dt <= {suggested_dt:.3g})")
        self.suggested_dt = suggested_dt


class ConvergenceError(CorrThermoError, RuntimeError):
    def __init__(self, message: str, achieved: float | None = None):
        if achieved is not None:
            message = f"{message} (achieved tolerance {achieved:.3g})"
        super().__init__(message)
        self.achieved = achieved


class TruncationError(CorrThermoError, RuntimeError):
    """Fock cutoff too small: population leaks into the top level."""

    def __init__(self, message: str, leakage: float):
        super().__init__(message)
        self.leakage = leakage


class InvariantViolation(CorrThermoError, RuntimeError):
    def __init__(self, name: str, residual: float, threshold: float):
        super().__init__(f"invariant '{name}' violated: residual {residual:.3e} > {threshold:.1e}")
        self.name = name
        self.residual = residual
        self.threshold = threshold


class ScenarioError(CorrThermoError, ValueError):
    pass
