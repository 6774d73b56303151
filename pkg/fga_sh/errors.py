# fga_sh/errors.py
"""
Exception hierarchy shared by the library and the CLI.

The CLI maps ConfigError to exit code 2 and NumericalAbort to exit code 3.
"""


class FgaShError(Exception):
    """Base class for all fga-sh errors."""


class ContractError(FgaShError, ValueError):
    """A precondition of an operation was violated."""


class ConfigError(FgaShError):
    """Configuration could not be parsed or failed validation."""


class NumericalAbort(FgaShError):
    """A run was aborted because the numerics became invalid."""


class SingularZError(NumericalAbort):
    """Z = dzQ + i dzP lost invertibility along a trajectory."""

    def __init__(self, det_abs: float, time: float):
        self.det_abs = det_abs
        self.time = time
        super().__init__(f"|det Z| = {det_abs:.3e} at t = {time:.6g} (threshold 1e-12)")

    def __reduce__(self):
        return (self.__class__, (self.det_abs, self.time))


class StepSizeError(NumericalAbort):
    """Per-step hop probability exceeded the configured cap."""

    def __init__(self, rate: float, dt: float, cap: float):
        self.rate = rate
        self.dt = dt
        self.cap = cap
        super().__init__(
            f"hop probability rate*dt = {rate * dt:.4g} exceeds cap {cap} "
            f"(rate={rate:.6g}, dt={dt:.6g}); reduce dt below {cap / rate:.6g}"
        )

    def __reduce__(self):
        return (self.__class__, (self.rate, self.dt, self.cap))


class BoundaryContaminationError(NumericalAbort):
    """Reference solution mass reached the periodic boundary layer."""


class EmptySupportError(FgaShError):
    """An amplitude table has no cell above the support threshold."""


class DegenerateWeightError(FgaShError):
    """A trajectory record has zero initial amplitude."""


class EmptyEnsembleError(FgaShError):
    """Reconstruction was asked for with no trajectory records."""


class UnsupportedHopCountError(FgaShError):
    """The deterministic series oracle only evaluates zero or one hop."""


class InsufficientPointsError(FgaShError):
    """A study sweep has too few points to fit a slope."""
