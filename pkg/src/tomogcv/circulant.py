"""Spectral algebra for symmetric circulant and block-circulant (BCCB) matrices.

A symmetric circulant matrix is diagonalized by a real orthogonal basis whose
columns are, in canonical FFT frequency order: the constant column ``1/sqrt(p)``
at index 0, cosine columns ``sqrt(2/p) cos(2*pi*k*j/p)`` at indices
``1 <= k < p/2``, the alternating column ``(-1)^j / sqrt(p)`` at index ``p/2``
(even ``p`` only), and sine columns ``sqrt(2/p) sin(2*pi*m*j/p)`` at indices
``p/2 < m <= p-1``.  Eigenvalues and basis applications are computed with FFTs;
the basis itself is never materialized.

For BCCB matrices the basis is the Kronecker product of the 1D bases and the
eigenvalues are the 2D FFT of the generator.  Note that the separable real
basis diagonalizes a symmetric BCCB matrix exactly only when the generator is
symmetric about each axis separately (true for all radially symmetric kernels
and for the normal-matrix surrogate built here); for generators that are only
point symmetric the multiplication in :func:`bccb_apply` goes through the
complex Fourier domain, which is exact in every case.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SpectralError

# Relative tolerance for the imaginary residue of an FFT that should be real.
RESIDUE_RTOL = 1e-10

_SQRT2 = np.sqrt(2.0)


def _as_float_array(values, name: str, ndim: int) -> np.ndarray:
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class SymCirc1D:
    """First row of a p x p symmetric circulant matrix.

    The row must satisfy ``c[j] == c[p - j]`` exactly as stored; callers
    symmetrize before constructing (silent symmetrization here would hide
    upstream bugs).
    """

    first_row: np.ndarray

    def __post_init__(self):
        row = _as_float_array(self.first_row, "first_row", 1)
        if row.size < 2:
            raise ValueError("symmetric circulant needs p >= 2")
        if not np.array_equal(row[1:], row[1:][::-1]):
            raise ValueError("first_row is not symmetric (c[j] != c[p-j])")
        object.__setattr__(self, "first_row", row)

    @property
    def p(self) -> int:
        return self.first_row.size


@dataclass(frozen=True)
class Spectrum1D:
    """Real eigenvalues of a symmetric circulant matrix, canonical FFT order."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        d = _as_float_array(self.eigenvalues, "eigenvalues", 1)
        object.__setattr__(self, "eigenvalues", d)

    @property
    def p(self) -> int:
        return self.eigenvalues.size


@dataclass(frozen=True)
class BccbGenerator:
    """Generator of a BCCB matrix: row ``l`` holds the first row of block ``l``.

    The matrix is symmetric exactly when
    ``generator[l, m] == generator[(p - l) % p, (q - m) % q]`` for all (l, m).
    """

    generator: np.ndarray

    def __post_init__(self):
        g = _as_float_array(self.generator, "generator", 2)
        if g.shape[0] < 2 or g.shape[1] < 2:
            raise ValueError("BCCB generator needs p, q >= 2")
        object.__setattr__(self, "generator", g)

    @property
    def shape(self) -> tuple[int, int]:
        return self.generator.shape

    def is_symmetric(self) -> bool:
        return np.array_equal(self.generator, point_reflect(self.generator))


@dataclass(frozen=True)
class Spectrum2D:
    """Real eigenvalues of a symmetric BCCB matrix, canonical 2D FFT order."""

    eigenvalues: np.ndarray

    def __post_init__(self):
        d = _as_float_array(self.eigenvalues, "eigenvalues", 2)
        object.__setattr__(self, "eigenvalues", d)

    @property
    def shape(self) -> tuple[int, int]:
        return self.eigenvalues.shape


def point_reflect(g: np.ndarray) -> np.ndarray:
    """Index map ``(l, m) -> ((p - l) % p, (q - m) % q)`` applied to an array."""
    p, q = g.shape
    return g[np.ix_((p - np.arange(p)) % p, (q - np.arange(q)) % q)]


def point_symmetrize(g: np.ndarray) -> np.ndarray:
    """Average an array with its point reflection, making it exactly symmetric."""
    return 0.5 * (g + point_reflect(g))


def _check_residue(transform: np.ndarray, scale: float, what: str) -> np.ndarray:
    residue = np.abs(transform.imag).max() if transform.size else 0.0
    if residue > RESIDUE_RTOL * max(scale, np.finfo(np.float64).tiny):
        raise SpectralError(
            f"{what}: imaginary residue {residue:.3e} exceeds tolerance; "
            "input is not symmetric"
        )
    return transform.real


def _pair_average_1d(d: np.ndarray) -> np.ndarray:
    # enforce d[k] == d[p-k] exactly (conjugate-pair equality)
    return 0.5 * (d + d[(d.size - np.arange(d.size)) % d.size])


def eig_sym_circ_1d(c: SymCirc1D) -> Spectrum1D:
    """Eigenvalues of a symmetric circulant matrix via one length-p FFT.

    Equivalent to the direct cosine sum
    ``d_k = c_0 + sum_j 2 c_j cos(2 pi k j / p) (+ c_{p/2} (-1)^k for even p)``.
    """
    row = c.first_row
    d = _check_residue(np.fft.fft(row), np.abs(row).max(), "eig_sym_circ_1d")
    return Spectrum1D(_pair_average_1d(d))


def eig_bccb(g: BccbGenerator) -> Spectrum2D:
    """Eigenvalues of a BCCB matrix: the 2D FFT of its generator.

    The unnormalized forward FFT already has mean equal to the generator's
    (0, 0) entry, i.e. to the first element of the full matrix, so no further
    scaling is applied.  Raises :class:`SpectralError` when the generator is
    not symmetric enough for a real spectrum.
    """
    gen = g.generator
    d = _check_residue(np.fft.fft2(gen), np.abs(gen).max(), "eig_bccb")
    return Spectrum2D(point_symmetrize(d))


def _apply_vt_last(x: np.ndarray) -> np.ndarray:
    """V' applied along the last axis (forward FFT + real/imag recombination)."""
    p = x.shape[-1]
    f = np.fft.fft(x, axis=-1)
    out = np.empty(x.shape, dtype=np.float64)
    root = np.sqrt(p)
    ks = np.arange(1, (p + 1) // 2)
    out[..., 0] = f[..., 0].real / root
    out[..., ks] = _SQRT2 * f[..., ks].real / root
    out[..., p - ks] = _SQRT2 * f[..., ks].imag / root
    if p % 2 == 0:
        out[..., p // 2] = f[..., p // 2].real / root
    return out


def _apply_v_last(a: np.ndarray) -> np.ndarray:
    """V applied along the last axis: rebuild the conjugate-symmetric spectrum."""
    p = a.shape[-1]
    h = np.zeros(a.shape, dtype=np.complex128)
    root = np.sqrt(p)
    ks = np.arange(1, (p + 1) // 2)
    h[..., 0] = root * a[..., 0]
    h[..., ks] = np.sqrt(p / 2.0) * (a[..., ks] + 1j * a[..., p - ks])
    h[..., p - ks] = np.conj(h[..., ks])
    if p % 2 == 0:
        h[..., p // 2] = root * a[..., p // 2]
    return np.fft.ifft(h, axis=-1).real


def apply_vt_1d(x) -> np.ndarray:
    """Compute ``V' x`` for the real orthogonal circulant eigenbasis.

    Coordinate ``k`` of the result is the coefficient of the basis column at
    canonical frequency ``k`` (constant, cosine, alternating or sine column as
    described in the module docstring).
    """
    x = _as_float_array(x, "x", 1)
    if x.size < 2:
        raise ValueError("need p >= 2")
    return _apply_vt_last(x)


def apply_v_1d(x) -> np.ndarray:
    """Compute ``V x``; exact inverse of :func:`apply_vt_1d`."""
    x = _as_float_array(x, "x", 1)
    if x.size < 2:
        raise ValueError("need p >= 2")
    return _apply_v_last(x)


def apply_vt_2d(x) -> np.ndarray:
    """Apply ``(V_p (x) V_q)'`` to a p x q array (rows, then columns)."""
    x = _as_float_array(x, "x", 2)
    a = _apply_vt_last(x)            # q-dimension
    return _apply_vt_last(a.T).T     # p-dimension


def apply_v_2d(x) -> np.ndarray:
    """Apply ``V_p (x) V_q``; exact inverse of :func:`apply_vt_2d`."""
    x = _as_float_array(x, "x", 2)
    a = _apply_v_last(x)
    return _apply_v_last(a.T).T


def half_spectrum(d: np.ndarray) -> np.ndarray:
    """Slice a full (p, q) real spectrum to the rfft2 layout (p, q//2 + 1)."""
    return d[:, : d.shape[1] // 2 + 1]


def bccb_apply(spectrum: Spectrum2D, x: np.ndarray) -> np.ndarray:
    """Multiply a p*q vector (stored as a p x q array) by a symmetric BCCB matrix.

    Goes through the complex Fourier domain (rfft2/irfft2 with the real
    spectrum), which is exact for every symmetric BCCB matrix, including those
    whose generator is only point symmetric.
    """
    x = np.asarray(x, dtype=np.float64)
    d = spectrum.eigenvalues
    if x.shape != d.shape:
        raise ValueError(f"shape mismatch: x {x.shape} vs spectrum {d.shape}")
    return np.fft.irfft2(np.fft.rfft2(x) * half_spectrum(d), s=x.shape)
