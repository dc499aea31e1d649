"""Exception hierarchy shared by the model, analysis and sampling code."""

import numpy as np


class ModelError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(ModelError, ValueError):
    """An argument lies outside the domain where an operation is defined."""


class CalibrationError(DomainError):
    """Calibration references are unusable (e.g. vacuum below dark noise)."""


class SolverError(ModelError, RuntimeError):
    """The steady-state Newton iteration did not converge."""

    def __init__(self, message, last_residual=float("nan")):
        super().__init__(f"{message} (last residual {last_residual:.3e})")
        self.last_residual = last_residual


class SingularSystemError(ModelError, np.linalg.LinAlgError):
    """The linearized system matrix cannot be inverted at the requested frequency."""

    def __init__(self, message, condition=float("inf")):
        super().__init__(f"{message} (condition number {condition:.3e})")
        self.condition = condition
