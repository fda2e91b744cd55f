"""Exception types shared across the toolkit."""


class QFactorError(Exception):
    """Base class for all toolkit errors."""


class InvalidParameterError(QFactorError, ValueError):
    """A configuration or distribution parameter is outside its domain."""


class EmptyInputError(QFactorError, ValueError):
    """An operation received an empty collection."""


class RankDeficientError(QFactorError):
    """A matrix (or matrix product) has numerical rank below the requested one."""


class SingularMatrixError(QFactorError):
    """A linear system is singular or too ill-conditioned to invert."""


class NotOrthonormalError(QFactorError):
    """An input expected to have orthonormal columns does not."""


class DegenerateProblemError(QFactorError):
    """A regression problem has too few rows or a rank-deficient design."""


class InsufficientDataError(QFactorError):
    """A panel row or column has fewer observations than free parameters."""


class MissingDataUnsupportedError(QFactorError):
    """The requested estimator cannot handle missing entries."""


class AllChainsFailedError(QFactorError):
    """Every multi-start chain aborted before producing a fit."""


class ZeroTruthError(QFactorError, ZeroDivisionError):
    """The reference quantity used for normalization is identically zero."""


class ZeroDenominatorError(QFactorError, ZeroDivisionError):
    """A ratio metric has a zero denominator."""


class NotRepairableError(QFactorError):
    """Positive-definiteness repair of a covariance estimate failed."""
