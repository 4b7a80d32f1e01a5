"""Exception types raised across the package."""

import numpy as np


class InsufficientSamplesError(ValueError):
    """Too few samples for the requested statistic or fit."""


class UnderdeterminedError(InsufficientSamplesError):
    """Fewer samples than basis functions in a map component."""


class DecompositionError(np.linalg.LinAlgError):
    """A matrix that must be positive definite is not.

    ``pivot`` is the 1-based leading minor at which the Cholesky
    factorization broke down (0 if unknown).
    """

    def __init__(self, message, pivot=0):
        super().__init__(message)
        self.pivot = pivot


class CapabilityError(TypeError):
    """The model or density set lacks a capability the operation needs
    (exact likelihood, prior density, forward gradient, ...)."""


class DivergenceError(RuntimeError):
    """Root bracketing failed while inverting a map component."""


class NumericalError(FloatingPointError):
    """A quantity that should be finite came out NaN or infinite."""
