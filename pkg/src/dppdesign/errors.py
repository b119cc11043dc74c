"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: config problems -> 1, input/file
problems -> 2, numeric failures -> 3, budget overruns -> 4.
"""


class DesignError(Exception):
    """Base class for all package-specific failures."""


class ConfigError(DesignError):
    """Invalid run configuration or mismatched inputs."""


class InputFormatError(DesignError):
    """Malformed or unreadable input data (matrix files, traces)."""


class NumericError(DesignError):
    """Numerical failure inside an algorithm."""


class SingularSubmatrixError(NumericError):
    """Principal submatrix is not positive definite."""


class EigenSolverError(NumericError):
    """Symmetric eigendecomposition did not converge."""


class TieError(NumericError):
    """Tied values in a sequence that must be strictly ordered; jitter first."""


class RankDeficientError(NumericError):
    """Kernel has fewer positive eigenvalues than the requested cardinality."""


class NonConvergenceError(NumericError):
    """A likelihood optimizer failed to produce usable estimates."""


class DegenerateSampleError(NumericError):
    """Sample carries no usable variation for distribution fitting."""


class BudgetError(DesignError):
    """A guarded resource budget was exceeded."""


class CombinatorialBudgetError(BudgetError):
    """Subset enumeration would exceed the desk-scale budget."""


class InsufficientTailDataError(BudgetError):
    """Not enough tail observations for the requested fit."""
