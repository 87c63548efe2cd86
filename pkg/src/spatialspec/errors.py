"""Exception types raised across the package."""
import numpy as np


class SpatialSpecError(Exception):
    """Base class for package errors."""


class InvalidArgument(SpatialSpecError, ValueError):
    """Inputs violate a documented precondition."""


class SingularCovariance(SpatialSpecError, np.linalg.LinAlgError):
    """Sigma(gamma), or a spatial filter inside it, is singular or indefinite."""

    def __init__(self, message, gamma=None, min_eigenvalue=None):
        super().__init__(message)
        self.gamma = None if gamma is None else np.asarray(gamma, dtype=float).copy()
        self.min_eigenvalue = min_eigenvalue


class RankDeficientDesign(SpatialSpecError, np.linalg.LinAlgError):
    """The (weighted) design matrix is numerically rank deficient."""

    def __init__(self, message, condition=None):
        super().__init__(message)
        self.condition = condition


class AllEvaluationsFailed(SpatialSpecError):
    """No point of the parameter box gave a finite concentrated likelihood."""


class StageError(SpatialSpecError):
    """A pipeline stage failed; ``stage`` names it and ``__cause__`` holds the error."""

    def __init__(self, stage, error):
        super().__init__(f"{stage}: {error}")
        self.stage = stage
        self.error = error
