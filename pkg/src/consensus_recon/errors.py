"""Exception and warning types.

Each exception carries an ``exit_code`` used by the command-line interface:
2 for configuration problems, 3 for numerical or degeneracy failures and
4 for violated modelling assumptions.
"""


class ReconError(Exception):
    """Base class for all package errors."""

    exit_code = 3


class ConfigError(ReconError, ValueError):
    exit_code = 2


class NumericalError(ReconError):
    exit_code = 3


class SimulationDivergenceError(NumericalError):
    def __init__(self, step, value):
        self.step = step
        self.value = value
        super().__init__(f"simulation diverged at step {step} (max |x| = {value:.3g})")


class UnstableSystemError(NumericalError):
    def __init__(self, spectral_radius, message=None):
        self.spectral_radius = spectral_radius
        super().__init__(
            message
            or f"dynamics matrix is not stable (spectral radius {spectral_radius:.6f}); "
            "pass force=True to simulate anyway"
        )


class TrajectoryLengthError(NumericalError, ValueError):
    pass


class ConditioningError(NumericalError):
    def __init__(self, condition, threshold):
        self.condition = condition
        self.threshold = threshold
        super().__init__(
            f"lag covariance is ill-conditioned (condition estimate {condition:.3g} "
            f"> {threshold:.3g}); enable the ridge fallback or use a longer trajectory"
        )


class NoLeaderError(NumericalError):
    """No hidden-leader coupling could be detected in the estimates."""


class ThresholdTooHighError(NumericalError):
    pass


class DegenerateCouplingError(NumericalError):
    pass


class AssumptionViolation(ReconError):
    exit_code = 4


class GenerationRejectedError(AssumptionViolation):
    pass


class AssumptionWarning(UserWarning):
    pass
