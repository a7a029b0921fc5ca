"""Exception types shared across the package.

Every failure mode that callers are expected to handle gets its own class;
the CLI maps them onto exit codes.
"""


class CollapselabError(Exception):
    """Base class for all package errors."""


class InvalidDimensionError(CollapselabError):
    """Grid construction with an unusable dimension/point count."""


class NoFiberError(CollapselabError):
    """A fiberwise operation was requested on a grid without fiber factors."""


class SingularMetricError(CollapselabError):
    """Pointwise Cholesky/inversion of a metric failed (not positive definite)."""


class FiberDegenerateError(CollapselabError):
    """A fiber restriction of a form is not positive definite."""


class FiberNonconstantError(CollapselabError):
    """A quantity that must descend to the base varies along the fibers."""


class RegionError(CollapselabError):
    """Cut-off regions touch or are incompatible."""


class IngredientError(CollapselabError):
    """A reference-family ingredient (base metric, fiberwise form) is missing."""


class NotProductError(CollapselabError):
    """A metric expected to be block product has mixed base/fiber components."""


class IncompatibleRhsError(CollapselabError):
    """Monge-Ampere right-hand side violates the total-mass compatibility."""


class NewtonDivergedError(CollapselabError):
    """Newton iteration failed to reach the requested residual."""


class PositivityLostError(CollapselabError):
    """An iterate or flow step left the cone of positive metrics."""


class KrylovStagnationError(CollapselabError):
    """Inner linear solve did not converge to the requested tolerance."""


class StepOverflowError(CollapselabError):
    """Flow time stepping exceeded the configured step budget."""


class ConfigError(CollapselabError):
    """Experiment configuration is malformed or fails validation."""

    def __init__(self, message, field=None, line=None):
        super().__init__(message)
        self.field = field
        self.line = line
