"""Discretized Radon transform, its exact adjoint, and the circulant model of K'K.

The forward projector is pixel driven: every pixel center is mapped to its
signed distance ``s = x cos(theta) + y sin(theta)`` and the pixel value is
split linearly between the two adjacent distance bins.  Backprojection uses
the same weights with the scatter transposed into a gather, so it is the exact
matrix transpose of the forward map; the GCV statistics downstream depend on
this.

Pixels whose projection falls outside the distance range at some angle
contribute nothing at that angle (the usual inscribed field-of-view
convention); keep the object support inside the FOV disc of radius
``(n_dist - 1)/2 * bin_size``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ._backend import get_backend
from .circulant import BccbGenerator, Spectrum2D, eig_bccb, half_spectrum, point_symmetrize
from .errors import GeometryError, SpectralError

# Relative spectral floor: frequencies of the K'K surrogate below
# DEFAULT_FLOOR_EPS * max(d) are treated as null space (the discrete projector
# carries almost no energy there, mostly corner frequencies beyond the angular
# bandlimit) and are excluded from inversion and from the GCV statistics.
DEFAULT_FLOOR_EPS = 1e-2


@dataclass(frozen=True)
class ImageGrid:
    """Square-pixel imaging grid: nx x ny pixels of side pixel_size (mm)."""

    nx: int
    ny: int
    pixel_size: float = 1.0

    def __post_init__(self):
        if self.nx < 2 or self.ny < 2:
            raise ValueError("grid needs nx, ny >= 2")
        if not self.pixel_size > 0:
            raise ValueError("pixel_size must be positive")

    @property
    def npix(self) -> int:
        return self.nx * self.ny

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Pixel-center coordinates (x along axis 0, y along axis 1), origin at grid center."""
        xs = (np.arange(self.nx) - (self.nx - 1) / 2.0) * self.pixel_size
        ys = (np.arange(self.ny) - (self.ny - 1) / 2.0) * self.pixel_size
        return xs, ys


@dataclass(frozen=True)
class SinogramGeometry:
    """n_dist distance bins of size bin_size (mm) x n_angle angles uniform on [0, pi)."""

    n_dist: int
    n_angle: int
    bin_size: float = 1.0

    def __post_init__(self):
        if self.n_dist < 2 or self.n_angle < 1:
            raise ValueError("geometry needs n_dist >= 2 and n_angle >= 1")
        if not self.bin_size > 0:
            raise ValueError("bin_size must be positive")

    @property
    def n_lor(self) -> int:
        return self.n_dist * self.n_angle

    def angles(self) -> np.ndarray:
        return np.pi * np.arange(self.n_angle) / self.n_angle


@dataclass(frozen=True)
class Image:
    values: np.ndarray
    grid: ImageGrid

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.grid.nx, self.grid.ny):
            raise GeometryError(f"image values {v.shape} do not match grid ({self.grid.nx}, {self.grid.ny})")
        if not np.all(np.isfinite(v)):
            raise ValueError("image contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class Sinogram:
    values: np.ndarray
    geometry: SinogramGeometry

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.shape != (self.geometry.n_dist, self.geometry.n_angle):
            raise GeometryError(
                f"sinogram values {v.shape} do not match geometry "
                f"({self.geometry.n_dist}, {self.geometry.n_angle})"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("sinogram contains non-finite values")
        object.__setattr__(self, "values", v)


@dataclass(frozen=True)
class _ProjectionTable:
    """Per-(grid, geometry) interpolation table shared by both backends."""

    r0: np.ndarray       # (n_angle, npix) int32, lower bin index, clamped to [0, n_dist-2]
    frac: np.ndarray     # (n_angle, npix) float64, weight of the upper bin
    inside: np.ndarray   # (n_angle, npix) bool
    dropped_fraction: float = field(compare=False, default=0.0)


@lru_cache(maxsize=4)
def _projection_table(grid: ImageGrid, geom: SinogramGeometry) -> _ProjectionTable:
    if geom.n_lor < grid.npix:
        warnings.warn(
            f"sinogram has fewer LORs (n={geom.n_lor}) than pixels (p={grid.npix}); "
            "the reconstruction problem is ill conditioned",
            stacklevel=2,
        )
    elif geom.n_lor < 1.25 * grid.npix:
        warnings.warn(
            f"near-square system (n={geom.n_lor} barely above p={grid.npix}); "
            "expect degraded conditioning",
            stacklevel=2,
        )
    xs, ys = grid.centers()
    px = np.repeat(xs, grid.ny)
    py = np.tile(ys, grid.nx)
    theta = geom.angles()
    s = np.cos(theta)[:, None] * px[None, :] + np.sin(theta)[:, None] * py[None, :]
    u = s / geom.bin_size + (geom.n_dist - 1) / 2.0
    inside = (u >= 0.0) & (u <= geom.n_dist - 1)
    r0 = np.clip(np.floor(u), 0, geom.n_dist - 2).astype(np.int32)
    frac = np.where(inside, u - r0, 0.0)
    dropped = 1.0 - inside.mean()
    return _ProjectionTable(r0=r0, frac=frac, inside=inside, dropped_fraction=dropped)


def fov_dropped_fraction(grid: ImageGrid, geom: SinogramGeometry) -> float:
    """Fraction of (pixel, angle) pairs whose projection falls outside the bins."""
    return _projection_table(grid, geom).dropped_fraction


def radon_forward(img: Image, geom: SinogramGeometry) -> Sinogram:
    """Forward projection y = K * image (pixel-driven, linear interpolation)."""
    table = _projection_table(img.grid, geom)
    values = np.ascontiguousarray(img.values.ravel())
    out = get_backend().forward(values, table.r0, table.frac, table.inside, geom.n_dist)
    return Sinogram(out, geom)


def backproject(sino: Sinogram, grid: ImageGrid) -> Image:
    """Backprojection K' * y: the exact transpose of :func:`radon_forward`."""
    table = _projection_table(grid, sino.geometry)
    acc = get_backend().backproject(np.ascontiguousarray(sino.values), table.r0, table.frac, table.inside)
    return Image(acc.reshape(grid.nx, grid.ny), grid)


def ktk_generator(grid: ImageGrid, geom: SinogramGeometry) -> BccbGenerator:
    """Circulant surrogate of K'K from the centered impulse response.

    Projects and backprojects a unit impulse at the grid center, re-centers
    the response circularly to index (0, 0) and symmetrizes it so the
    generator satisfies the BCCB symmetry invariant exactly.
    """
    e = np.zeros((grid.nx, grid.ny))
    cx, cy = grid.nx // 2, grid.ny // 2
    e[cx, cy] = 1.0
    resp = backproject(radon_forward(Image(e, grid), geom), grid).values
    g = np.roll(resp, (-cx, -cy), axis=(0, 1))
    return BccbGenerator(point_symmetrize(g))


@lru_cache(maxsize=8)
def ktk_spectrum(grid: ImageGrid, geom: SinogramGeometry) -> Spectrum2D:
    """Eigenvalues of the K'K surrogate (cached per geometry)."""
    return eig_bccb(ktk_generator(grid, geom))


def floor_engagement(spec: Spectrum2D, floor_eps: float) -> int:
    """Number of eigenvalues below ``floor_eps * max(d)`` (the flooring rule)."""
    d = spec.eigenvalues
    return int((d < floor_eps * d.max()).sum())


def surrogate_gap(grid: ImageGrid, geom: SinogramGeometry, seed: int = 0) -> float:
    """Measured discrepancy between the circulant K'K surrogate and the true operator.

    Applies both the surrogate and the literal K'(K x) composition to a seeded
    band-limited random activity supported inside the FOV disc and returns the
    relative L2 difference over the interior (radius 0.7 of the half-grid).
    Diagnostic only; the circulant model is approximate by construction and
    this quantifies the approximation for the given geometry.
    """
    from .circulant import bccb_apply
    from .kernels import gaussian_radial

    rng = np.random.default_rng(seed)
    xs, ys = grid.centers()
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    r = np.sqrt(gx**2 + gy**2)
    fov = 0.5 * min(grid.nx, grid.ny) * grid.pixel_size
    noise = rng.standard_normal((grid.nx, grid.ny))
    smooth = bccb_apply(eig_bccb(gaussian_radial(2.5, grid)), noise)
    img = smooth * (r <= 0.75 * fov)
    direct = backproject(radon_forward(Image(img, grid), geom), grid).values
    model = bccb_apply(ktk_spectrum(grid, geom), img)
    interior = r <= 0.7 * fov
    return float(
        np.linalg.norm((direct - model)[interior]) / np.linalg.norm(direct[interior])
    )


def inverse_spectrum(spec: Spectrum2D, floor_eps: float = DEFAULT_FLOOR_EPS) -> np.ndarray:
    """Pseudo-inverse of a K'K spectrum: 1/d on the retained band, 0 below the floor.

    Eigenvalues below ``floor_eps * max(d)`` belong to the effective null space
    of the discrete projector; inverting them would amplify pure noise, so the
    minimum-norm convention zeroes those frequencies instead.
    """
    d = spec.eigenvalues
    dmax = d.max()
    if dmax <= 0:
        raise SpectralError("K'K spectrum has no positive eigenvalue")
    keep = d >= floor_eps * dmax
    return np.where(keep, 1.0 / np.where(keep, d, 1.0), 0.0)


def ktk_inverse_apply(img: Image, spec: Spectrum2D, floor_eps: float = DEFAULT_FLOOR_EPS) -> Image:
    """Apply the pseudo-inverse of the K'K surrogate in the Fourier domain.

    Division happens only on the retained band of :func:`inverse_spectrum`;
    frequencies at or below the floor (the DC end of the resulting ramp-like
    inverse stays near zero there) are zeroed.  The number of frequencies this
    engages is :func:`floor_engagement`.
    """
    if img.values.shape != spec.eigenvalues.shape:
        raise GeometryError(f"image {img.values.shape} vs spectrum {spec.eigenvalues.shape}")
    inv = inverse_spectrum(spec, floor_eps)
    out = np.fft.irfft2(np.fft.rfft2(img.values) * half_spectrum(inv), s=img.values.shape)
    return Image(out, img.grid)
