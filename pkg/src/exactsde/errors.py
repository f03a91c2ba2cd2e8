"""Exception types shared across the package."""


class ExactSdeError(Exception):
    """Base class for all package errors."""


class OrderingError(ExactSdeError):
    """Time grids violate the sorted / disjoint / in-range preconditions."""


class SupportError(ExactSdeError):
    """A state or parameter value lies outside the model support."""


class UnboundedRangeError(ExactSdeError):
    """phi cannot be bounded on the requested range for this model."""


class DepthExceededError(ExactSdeError):
    """Retrospective refinement exhausted its depth budget."""


class QuadratureError(ExactSdeError):
    """Adaptive quadrature failed to reach the requested tolerance."""


class ProbabilityError(ExactSdeError):
    """A supplied probability fell outside [0, 1]."""


class OverlapError(ExactSdeError):
    """Two point grids that must be disjoint share an event time."""


class ClassMismatchError(ExactSdeError):
    """A sampler was applied to a model of the wrong EA class."""


class ConfigError(ExactSdeError):
    """Run configuration failed validation; message carries the field path."""


class NonConvergenceError(ExactSdeError):
    """An iterative numerical routine exceeded its budget."""
