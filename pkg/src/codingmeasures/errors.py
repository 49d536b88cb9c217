"""Exception types raised across the package."""


class CodingMeasuresError(Exception):
    """Base class for all package errors."""


class NumericalFailure(CodingMeasuresError):
    """An iterative numerical method did not converge within its cap."""


class EnumerationCapExceeded(CodingMeasuresError):
    """Exhaustive enumeration would exceed the configured cylinder cap."""


class RootFindingError(NumericalFailure):
    """Simultaneous root iteration failed to reach the residual tolerance."""


class BasePointRejected(CodingMeasuresError):
    """No admissible base paths could be built from the chosen base point."""


class LiftFailed(NumericalFailure):
    """A path lift approached a critical point or Newton diverged."""


class IncompleteLevel(CodingMeasuresError):
    """A coding-tree level has nodes whose lift failed."""

    def __init__(self, message, failed_words=()):
        super().__init__(message)
        self.failed_words = list(failed_words)


class ResolutionFailure(CodingMeasuresError):
    """Every dynamical ball was empty; the cloud is too sparse for the radius."""


class ConditionsViolated(CodingMeasuresError):
    """Graph-transform hypotheses fail or the fixed-point map does not contract."""


class ContainmentDomainError(CodingMeasuresError):
    """The image of a graph escapes the domain of the target graph."""


class ConfigError(CodingMeasuresError):
    """Invalid experiment configuration."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
