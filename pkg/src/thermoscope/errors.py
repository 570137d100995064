"""Exception hierarchy.

Errors fall in two families that the command line maps to distinct exit
codes: :class:`ValidationError` for malformed input (exit 2) and
:class:`SolverError` for numerical failures (exit 3).
"""


class ThermoscopeError(Exception):
    """Base class for every error raised by the package."""


class ValidationError(ThermoscopeError, ValueError):
    """Input data violates a structural contract."""

    def __init__(self, message, path=None):
        self.path = path
        if path:
            message = f"{path}: {message}"
        super().__init__(message)


class DimMismatch(ValidationError):
    pass


class NotHermitian(ValidationError):
    pass


class NotSubspace(ValidationError):
    """A level of description is not contained in the measured span."""


class NotNested(ValidationError):
    pass


class DependentLevel(ValidationError):
    """Observables of a level are (numerically) linearly dependent."""


class SolverError(ThermoscopeError, ArithmeticError):
    """A numerical routine failed to produce a trustworthy answer."""


class RankDeficient(SolverError):
    pass


class EigensolverFailed(SolverError):
    pass


class InfeasibleMoments(SolverError):
    """Target expectation values are not attained by any full-rank state."""

    def __init__(self, message, residual=None):
        self.residual = residual
        super().__init__(message)


class SolverDiverged(SolverError):
    def __init__(self, message, history=()):
        self.history = list(history)
        super().__init__(message)


class SingularMetric(SolverError):
    pass


class AlphaUnbounded(SolverError):
    """The evidence condition for the prior strength has no root."""


class NonConvergence(SolverError):
    def __init__(self, message, best=None, residual=None):
        self.best = best
        self.residual = residual
        super().__init__(message)


class DegenerateSpread(SolverError):
    pass


class NonUniformReference(SolverError):
    pass


class BisectionFailed(SolverError):
    pass
