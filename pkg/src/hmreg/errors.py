"""Exception types shared across the package."""


class HMRegError(Exception):
    """Base class for all package errors."""


class CutLocus(HMRegError, ValueError):
    """A logarithm was requested at or beyond the cut locus."""


class DomainError(HMRegError, ValueError):
    """An argument lies outside the domain of a formula."""


class Singular(HMRegError, ValueError):
    """No well-defined nearest point exists for an ambient projection."""


class NotConverged(HMRegError, RuntimeError):
    """An iterative solver hit its iteration cap.

    The last iterate is kept on ``result`` so callers can still use it.
    """

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


class AmbiguousIncrement(HMRegError, ValueError):
    """Adjacent nodal values are too far apart to define a signed increment."""


class UnsupportedManifold(HMRegError, TypeError):
    """The requested operation does not apply to this manifold kind."""


class InsufficientData(HMRegError, ValueError):
    """Too few distinct design points for the requested fit."""


class MalformedRow(HMRegError, ValueError):
    """A CSV row could not be parsed."""


class EmptyInput(HMRegError, ValueError):
    """An input file contained no usable records."""


class ConfigError(HMRegError, ValueError):
    """A run configuration is invalid."""
