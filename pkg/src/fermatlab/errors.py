"""Exception types shared across the package."""


class FermatError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(FermatError, ValueError):
    pass


class NotHermitian(FermatError, ValueError):
    pass


class NegativeVariance(FermatError, ValueError):
    """Variance below the round-off window; the operator is not Hermitian."""


class DegenerateSpeed(FermatError, ValueError):
    """The local speed vanishes, so ds/speed is undefined.

    Raised at quantum eigenstates (zero energy uncertainty), classical fixed
    points (zero phase-space gradient) and configuration-space turning points.
    """


class ForbiddenRegion(FermatError, ValueError):
    """A configuration path enters the region V(q) >= E."""


class ProjectionError(FermatError, RuntimeError):
    """Newton projection onto a level set did not converge."""


class NonFiniteState(FermatError, FloatingPointError):
    pass


class NonRealResidual(FermatError, ValueError):
    pass


class ConfigError(FermatError, ValueError):
    pass


class UnderResolvedWarning(UserWarning):
    """Step size too coarse for the fastest declared frequency."""
