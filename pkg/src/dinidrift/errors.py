"""Exception types shared across the library.

Failure policy: math-domain violations and unresolvable numerics raise;
soft diagnostics (inconclusive limits, degenerate fits) are returned as
report fields instead, so callers never have to guess a verdict from an
exception.
"""


class DinidriftError(Exception):
    """Base class for all library errors."""


class DomainError(DinidriftError):
    """An argument lies outside the mathematical domain of the operation."""


class NonFinite(DinidriftError):
    """A singular integral failed to converge under quadrature refinement.

    Carries the partial value accumulated so far and the refinement history,
    so the divergence is reported rather than silently truncated.
    """

    def __init__(self, message, partial=None, partials=None):
        super().__init__(message)
        self.partial = partial
        self.partials = partials if partials is not None else []


class GridTooCoarse(DinidriftError):
    """Spatial grid cannot resolve the kernel at the requested time (h > sqrt(t))."""


class NoContraction(DinidriftError):
    """Picard map failed to contract even on the minimal subinterval."""


class NoConvergence(DinidriftError):
    """Fixed-point inversion ran out of iterations; the gradient bound was stale."""


class SmoothnessRequired(DinidriftError):
    """Operation needs a differentiable drift (mollified or closed-form gradient)."""


class MissingArray(DinidriftError):
    """Ensemble does not carry the array required by the estimator."""


class NotReached(DinidriftError):
    """No tested damping parameter met the gradient target.

    The full decay table is attached so callers can still report it.
    """

    def __init__(self, message, table=None):
        super().__init__(message)
        self.table = table


class ConfigError(DinidriftError):
    """Invalid run configuration."""


class ParseError(ConfigError):
    """Config document could not be parsed."""


class ValidationError(ConfigError):
    """A config field failed validation; carries the dotted field path."""

    def __init__(self, field, reason):
        super().__init__(f"{field}: {reason}")
        self.field = field
        self.reason = reason
