"""Exception types shared across the package."""


class GeometryError(ValueError):
    """Invalid geometric input (dimension mismatch, off-sheet point, ...)."""


class DegenerateTriangle(GeometryError):
    """A triangle has a side shorter than the degeneracy threshold."""


class KarcherDivergence(RuntimeError):
    """Weighted center-of-mass iteration did not reach its tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (residual={residual:.3e})")
        self.residual = residual


class NotApplicable(Exception):
    """A check's hypotheses are not met, so it was not evaluated.

    This is a status, not a failure: callers report it separately.
    """


class MeshCapExceeded(ValueError):
    """Requested mesh would exceed the configured vertex cap."""


class SmoothingBoundViolation(RuntimeError):
    """A smoothed value left the ball B(f(x), 2c) it is guaranteed to lie in."""


class ConfigError(ValueError):
    """Invalid experiment configuration."""
