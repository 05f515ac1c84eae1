"""Circulant Gaussian smoothing kernels and their spectra.

Bandwidths are always full-width-at-half-maximum (FWHM) in pixel units and are
converted internally with ``sigma = fwhm / (2 sqrt(2 ln 2))``.  Generators are
built by periodizing the continuous Gaussian over the grid (enough wrap
replicas that the truncation is below double precision), which keeps every
spectrum inside [0, 1]; for ``sigma <= p/18`` this reduces to evaluating the
kernel at the circularly wrapped offsets.  All generators are normalized to
unit sum (unit DC gain) and are exactly symmetric as stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .circulant import BccbGenerator, point_symmetrize
from .projector import ImageGrid

FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

# exp(-_NSIGMA^2 / 2) ~ 8e-17: wrap replicas beyond this many sigmas are noise
_NSIGMA = 9.0


@dataclass(frozen=True)
class RadialBandwidth:
    """FWHM of a radially symmetric Gaussian kernel, in pixels."""

    fwhm: float

    def __post_init__(self):
        if not self.fwhm > 0:
            raise ValueError("fwhm must be positive")

    @property
    def sigma(self) -> float:
        return self.fwhm / FWHM_PER_SIGMA


@dataclass(frozen=True)
class EllipticalBandwidth:
    """FWHM pair plus correlation of an elliptically symmetric Gaussian kernel."""

    h1: float
    h2: float
    rho: float

    def __post_init__(self):
        if not (self.h1 > 0 and self.h2 > 0):
            raise ValueError("h1 and h2 must be positive")
        if not abs(self.rho) < 1:
            raise ValueError("|rho| must be < 1")

    @property
    def sigmas(self) -> tuple[float, float]:
        return self.h1 / FWHM_PER_SIGMA, self.h2 / FWHM_PER_SIGMA


def _wrapped_offsets(p: int) -> np.ndarray:
    """Signed circular offsets: 0, 1, ..., down to -p//2 ... -1."""
    return ((np.arange(p) + p // 2) % p) - p // 2


def _n_replicas(p: int, sigma: float) -> int:
    return max(0, math.ceil((_NSIGMA * sigma - p / 2.0) / p))


def gaussian_row_1d(p: int, fwhm: float) -> np.ndarray:
    """First row of a p x p symmetric circulant Gaussian smoother, unit sum."""
    sigma = float(fwhm) / FWHM_PER_SIGMA
    t = _n_replicas(p, sigma)
    head = np.arange(p // 2 + 1, dtype=np.float64)
    acc = np.zeros(head.size)
    for shift in range(-t, t + 1):
        acc += np.exp(-((head + shift * p) ** 2) / (2.0 * sigma**2))
    # mirror the head so row[l] == row[p - l] exactly as stored
    row = np.empty(p)
    row[: p // 2 + 1] = acc
    row[p // 2 + 1:] = acc[1: (p + 1) // 2][::-1]
    return row / row.sum()


def gaussian_radial(h: RadialBandwidth | float, grid: ImageGrid) -> BccbGenerator:
    """Radially symmetric Gaussian BCCB generator with FWHM ``h`` pixels.

    Separable, so the generator is the outer product of two 1D rows; exactly
    symmetric by construction and normalized to unit sum.
    """
    if not isinstance(h, RadialBandwidth):
        h = RadialBandwidth(float(h))
    gx = gaussian_row_1d(grid.nx, h.fwhm)
    gy = gaussian_row_1d(grid.ny, h.fwhm)
    g = np.outer(gx, gy)
    return BccbGenerator(g / g.sum())


def gaussian_elliptical(
    b: EllipticalBandwidth, grid: ImageGrid, literal_exponent: bool = False
) -> BccbGenerator:
    """Elliptically symmetric Gaussian BCCB generator with parameters (h1, h2, rho).

    Entries follow the bivariate Gaussian
    ``exp(-[k^2/s1^2 + j^2/s2^2 - 2 rho k j/(s1 s2)] / (2 (1 - rho^2)))`` on the
    wrapped offsets.  ``literal_exponent=True`` drops the 1/2 factor in the
    exponent (a convention switch kept for comparisons; it halves the squared
    widths).  The result is point symmetrized, which the cross term requires
    at the Nyquist row/column, and normalized to unit sum.
    """
    if not isinstance(b, EllipticalBandwidth):
        raise TypeError("b must be an EllipticalBandwidth")
    s1, s2 = b.sigmas
    rho = b.rho
    scale = 1.0 if literal_exponent else 0.5
    # largest covariance eigenvalue bounds the spatial extent in any direction
    tr, det = s1**2 + s2**2, (1 - rho**2) * s1**2 * s2**2
    lam_max = 0.5 * (tr + math.sqrt(max(tr**2 - 4 * det, 0.0)))
    sig_eff = math.sqrt(lam_max / (2.0 * scale))
    t1 = _n_replicas(grid.nx, sig_eff)
    t2 = _n_replicas(grid.ny, sig_eff)
    k = _wrapped_offsets(grid.nx).astype(np.float64)
    j = _wrapped_offsets(grid.ny).astype(np.float64)
    g = np.zeros((grid.nx, grid.ny))
    denom = 1.0 - rho**2
    for a in range(-t1, t1 + 1):
        for c in range(-t2, t2 + 1):
            kk = (k + a * grid.nx)[:, None]
            jj = (j + c * grid.ny)[None, :]
            quad = kk**2 / s1**2 + jj**2 / s2**2 - 2.0 * rho * kk * jj / (s1 * s2)
            g += np.exp(-scale * quad / denom)
    g = point_symmetrize(g)
    return BccbGenerator(g / g.sum())
