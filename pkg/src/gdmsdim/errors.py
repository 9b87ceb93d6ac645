"""Exception types raised across the package."""


class DimError(Exception):
    """Base class for every error raised by gdmsdim."""


class PoleError(DimError):
    pass


class DomainError(DimError):
    pass


class IncidenceError(DimError):
    pass


class CoverageError(DimError):
    pass


class GeometryError(DimError):
    pass


class NotFoundError(DimError):
    pass


class UnsupportedDimension(DimError):
    pass


class ErrTooLarge(DimError):
    """The interpolation error factor reached 1; the mesh must be refined."""

    def __init__(self, err, h=None, hint=None):
        self.err = err
        self.h = h
        self.hint = hint
        msg = f"interpolation error factor {err:.4g} >= 1"
        if h is not None:
            msg += f" at h={h:.4g}"
        if hint is not None:
            msg += f"; reduce mesh_h below {hint:.4g}"
        super().__init__(msg)


class RangeError(DimError, ValueError):
    pass


class PositivityError(DimError):
    pass


class NonConvergence(DimError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class BracketFailure(DimError):
    pass


class OverlapError(DimError):
    pass


class VerificationFailure(DimError):
    pass


class ConfigError(DimError):
    pass
