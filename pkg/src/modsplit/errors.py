"""Exception hierarchy shared by all modsplit stages.

The CLI maps these onto its exit codes, so library code should raise the most
specific class that applies rather than a bare ``ValueError``.
"""


class ModsplitError(Exception):
    """Base class for all errors raised by modsplit."""


class InputError(ModsplitError, ValueError):
    """Malformed or inconsistent user input (bad ids, shape mismatch, ...)."""


class GenerationError(ModsplitError):
    """A synthetic model could not be built; the caller should reseed."""


class EstimationError(ModsplitError):
    """Numerical failure inside the precision-matrix estimator."""


class ConvergenceError(EstimationError):
    """The solver hit its iteration cap before meeting its tolerances."""

    def __init__(self, message, iterations=None, primal_residual=None, dual_residual=None):
        super().__init__(message)
        self.iterations = iterations
        self.primal_residual = primal_residual
        self.dual_residual = dual_residual


class DegenerateCovarianceError(EstimationError):
    """Empirical covariance is rank deficient and the penalty cannot fix it."""
