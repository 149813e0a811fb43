"""Exception hierarchy shared by all modules."""

import numpy as np


class ApproxFAError(Exception):
    """Base class for every error raised by the package."""


class DimensionError(ApproxFAError, ValueError):
    """Shapes are incompatible or a matrix is not square."""


class NotPSDError(ApproxFAError, ValueError):
    """A matrix expected to be positive (semi)definite is not."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class SingularMatrixError(ApproxFAError, np.linalg.LinAlgError):
    """Inversion of a singular (or numerically singular) matrix was requested."""

    def __init__(self, message, block=None, condition=None):
        super().__init__(message)
        self.block = block
        self.condition = condition


class DomainError(ApproxFAError, ValueError):
    """Input lies outside the domain where a quantity is defined."""


class StructureError(ApproxFAError, ValueError):
    """Block or zero pattern required by an operation is violated."""


class InfeasiblePatternError(StructureError):
    """Singular-D pattern is infeasible, e.g. more zero noise entries than factors."""


class InfeasibleModelError(ApproxFAError, ValueError):
    """An exact factor model does not exist for the requested structure."""

    def __init__(self, message, offdiag_norm=None):
        super().__init__(message)
        self.offdiag_norm = offdiag_norm


class MonotonicityError(ApproxFAError, RuntimeError):
    """Divergence increased during a run that must be monotone.

    Carries a ``diagnostic`` dict with the offending iteration, the two
    divergence values and the parameters before the step.
    """

    def __init__(self, message, diagnostic=None):
        super().__init__(message)
        self.diagnostic = diagnostic or {}


class MatrixParseError(ApproxFAError, ValueError):
    """A matrix file could not be parsed."""

    def __init__(self, message, line=None):
        super().__init__(message)
        self.line = line
