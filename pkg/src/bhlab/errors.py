"""Exception hierarchy shared by all modules."""


class BhlabError(Exception):
    """Base class for every error raised by the package."""


class DomainRangeError(BhlabError, ValueError):
    """A point lies outside the cylinder where an object is defined."""


class NonPositiveDistanceError(BhlabError, ValueError):
    """A distance was requested at a point on or below the graph."""


class ConfigError(BhlabError, ValueError):
    """Invalid configuration or an operator that breaks monotonicity."""


class NumericError(BhlabError, RuntimeError):
    """An iterative method failed to converge.

    ``diagnostics`` carries whatever the failing routine knew at the time.
    """

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})


class DiscretizationError(NumericError):
    """A discrete quantity contradicts a property it must have."""


class ResolutionError(NumericError):
    """A sample grid is too coarse to resolve a weighted integral."""


class ExtrapolationError(NumericError):
    """Evaluation requested outside the region covered by a mesh."""


class EigenSignError(NumericError):
    """An eigenfunction expected to be positive is not."""


class HypothesisViolation(BhlabError):
    """A hypothesis of an estimate fails on the data supplied."""


class ConstructionError(BhlabError):
    """A constructed object fails its defining two-sided bound."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = dict(diagnostics or {})
