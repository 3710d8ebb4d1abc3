# stats/errors.py
from __future__ import annotations


class AnovaError(Exception):
    """Base class for every error raised on purpose by this package."""


class ValidationError(AnovaError, ValueError):
    """User input (data, model file, parameters) is not acceptable."""


class MalformedInputError(ValidationError):
    pass


class UnbalancedDataError(ValidationError):
    pass


class DuplicateCellError(ValidationError):
    pass


class UnknownLevelError(ValidationError):
    pass


class UnsupportedDesignError(ValidationError):
    pass


class ParameterError(ValidationError):
    pass


class DomainError(ValidationError):
    """A numeric argument lies outside the domain of the function."""


class ConfigurationError(ValidationError):
    """A VCANOVA_* setting cannot be parsed."""


class TheoryError(AnovaError):
    """A distributional derivation cannot be carried out."""


class SingularSystemError(AnovaError):
    """The expected-mean-square system has no unique solution."""
