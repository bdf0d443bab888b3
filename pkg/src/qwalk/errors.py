"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command line runner, so the
mapping from failure class to process status lives in one place.
"""


class QWalkError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class WalkDefinitionError(QWalkError, ValueError):
    """The walk (shifts, coin or initial state) is malformed."""

    exit_code = 5


class InvalidShiftSet(WalkDefinitionError):
    pass


class NonUnitaryCoin(WalkDefinitionError):
    pass


class DimensionMismatch(WalkDefinitionError):
    pass


class UnnormalizedInitialState(WalkDefinitionError):
    pass


class UnnormalizedFamilyParameters(WalkDefinitionError):
    pass


class NumericalError(QWalkError):
    exit_code = 6


class GridTooSmall(NumericalError, ValueError):
    pass


class EigensolverFailure(NumericalError):
    def __init__(self, message, k=None):
        super().__init__(message)
        self.k = k


class AnalysisError(QWalkError):
    exit_code = 7


class InsufficientPositivePoints(AnalysisError, ValueError):
    pass


class NoFeatureSurvives(AnalysisError):
    """Every stationary feature is orthogonal to the initial state.

    ``fallback`` holds the prediction obtained without the orthogonality
    filter.
    """

    def __init__(self, message, fallback=None):
        super().__init__(message)
        self.fallback = fallback


class ConfigError(QWalkError, ValueError):
    exit_code = 3

    def __init__(self, message, field=None):
        super().__init__(message)
        self.field = field


class FileIOError(QWalkError, OSError):
    exit_code = 4


class VerificationFailed(QWalkError):
    exit_code = 8


class BandDiscontinuity(UserWarning):
    """Band continuation was ambiguous (eigenvalue crossing); features near it are flagged."""
