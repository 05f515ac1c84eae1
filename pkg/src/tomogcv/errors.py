"""Exception types shared across the package."""


class TomogcvError(Exception):
    """Base class for all package errors."""


class SpectralError(TomogcvError):
    """A spectrum is invalid: complex residue too large, all-zero, or asymmetric input."""


class GeometryError(TomogcvError):
    """Image grid and sinogram geometry are inconsistent."""


class GcvError(TomogcvError):
    """The GCV objective cannot be evaluated or minimized."""
