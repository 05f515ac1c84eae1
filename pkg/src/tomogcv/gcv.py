"""Invariant PRESS / GCV objective, its one-time precomputation, and minimizers.

The smoothed least-squares reconstruction leaves one scalar family to tune:
the kernel bandwidth.  Leave-one-LOR-out cross validation is equivalent, on
the circulant model of the projector, to minimizing

    zeta(h) = sum_nu (1 - omega_nu)^2 |z1_nu|^2 + (1 + c(h))^2 * z2'z2,

where ``omega`` is the smoothing spectrum, ``c(h) = tr(omega) / (n - p)``,
``z1 = U1'y`` is the data rotated into the signal subspace and ``z2'z2`` the
residual energy in its orthogonal complement.  ``z1`` is obtained from the
backprojection: a weighted forward 2D FFT with weights given by the inverse
square root of the K'K spectrum.  Only ``|z1|^2`` per frequency enters the
objective, so that is what :class:`GcvPrecompute` stores; working with the
complex-frequency moduli keeps the objective exact for correlated elliptical
kernels as well (whose spectra are not constant on cosine/sine pairs).

:func:`press_bruteforce` is the literal leave-one-out oracle used by the test
suite; it exists to pin the equivalence numerically and is never called in the
reconstruction path.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import circulant, kernels
from ._optimize import golden_section, log_grid_search, nelder_mead
from .circulant import Spectrum1D, Spectrum2D
from .errors import GcvError
from .kernels import EllipticalBandwidth, RadialBandwidth
from .projector import (
    DEFAULT_FLOOR_EPS,
    Image,
    ImageGrid,
    Sinogram,
    SinogramGeometry,
    backproject,
    ktk_spectrum,
)

# z2'z2 = y'y - z1'z1 may go slightly negative from round-off; anything worse
# signals a broken adjoint or spectrum.
_Z2_NEG_RTOL = 1e-8


@dataclass(frozen=True)
class GcvPrecompute:
    """One-time quantities that make each zeta(h) evaluation O(p)."""

    z1_sq: np.ndarray        # |U1'y|^2 per frequency, flat, zero at floored slots
    z2_sq: float             # residual energy y'y - z1'z1
    d_singular: np.ndarray   # singular values of K (sqrt of the K'K spectrum), flat
    keep: np.ndarray         # mask of frequencies above the spectral floor
    n: int                   # number of LORs
    p: int                   # number of pixels (frequencies)

    @property
    def n_floored(self) -> int:
        return self.p - int(self.keep.sum())

    @property
    def p_effective(self) -> int:
        return int(self.keep.sum())


@dataclass(frozen=True)
class GcvObjectiveValue:
    """zeta at one parameter point, along with c(h) = tr(omega)/(n - p)."""

    zeta: float
    c_of_h: float
    params: tuple = ()


def precompute_from_parts(
    vt_backprojection_sq: np.ndarray,
    ktk_eigenvalues: np.ndarray,
    y_sq_sum: float,
    n: int,
    floor_eps: float = DEFAULT_FLOOR_EPS,
) -> GcvPrecompute:
    """Assemble a :class:`GcvPrecompute` from already-transformed pieces.

    ``vt_backprojection_sq`` holds |V' K'y|^2 per frequency (flat), and
    ``ktk_eigenvalues`` the matching K'K spectrum.  Frequencies whose
    eigenvalue falls below ``floor_eps * max(d)`` are excluded from z1 (their
    energy counts toward z2'z2) and from the trace denominator.
    """
    a_sq = np.asarray(vt_backprojection_sq, dtype=np.float64).ravel()
    d = np.asarray(ktk_eigenvalues, dtype=np.float64).ravel()
    if a_sq.shape != d.shape:
        raise ValueError("coefficient and spectrum lengths differ")
    p = d.size
    dmax = d.max()
    if dmax <= 0:
        raise GcvError("K'K spectrum has no positive eigenvalue")
    keep = d >= floor_eps * dmax
    d_floored = np.maximum(d, floor_eps * dmax)
    d_singular = np.sqrt(d_floored)
    z1_sq = np.where(keep, a_sq / d_floored, 0.0)
    z2_sq = float(y_sq_sum - z1_sq.sum())
    if z2_sq < -_Z2_NEG_RTOL * y_sq_sum:
        raise GcvError(
            f"z2'z2 = {z2_sq:.6e} is negative beyond tolerance; "
            "adjointness or the K'K spectrum is broken"
        )
    z2_sq = max(z2_sq, 0.0)
    return GcvPrecompute(
        z1_sq=z1_sq, z2_sq=z2_sq, d_singular=d_singular, keep=keep, n=int(n), p=p
    )


def precompute(
    y: Sinogram,
    grid: ImageGrid,
    geom: SinogramGeometry | None = None,
    floor_eps: float = DEFAULT_FLOOR_EPS,
    ktk: Spectrum2D | None = None,
    backprojection: Image | None = None,
) -> GcvPrecompute:
    """One-time GCV statistics from a sinogram.

    Backprojects ``y`` (reused from the reconstruction pipeline when passed
    in), takes the unitary 2D FFT, divides by the singular values of the K'K
    surrogate and forms ``z2'z2`` from the identity ``y'y = z1'z1 + z2'z2``.
    """
    geom = geom or y.geometry
    if geom.n_lor < 1.25 * grid.npix:
        warnings.warn(
            f"n = {geom.n_lor} is not well above p = {grid.npix}: the GCV "
            "statistics degrade in near-square systems",
            stacklevel=2,
        )
    spec = ktk if ktk is not None else ktk_spectrum(grid, geom)
    lam = backprojection if backprojection is not None else backproject(y, grid)
    coeffs = np.fft.fft2(lam.values) / np.sqrt(grid.npix)
    a_sq = (coeffs.real**2 + coeffs.imag**2).ravel()
    y_sq = float((y.values**2).sum())
    return precompute_from_parts(a_sq, spec.eigenvalues, y_sq, geom.n_lor, floor_eps)


def _omega_array(omega, p: int) -> np.ndarray:
    if isinstance(omega, (Spectrum1D, Spectrum2D)):
        om = omega.eigenvalues
    else:
        om = np.asarray(omega, dtype=np.float64)
    om = om.ravel()
    if om.size != p:
        raise ValueError(f"omega has {om.size} entries, expected {p}")
    return om


def zeta(pre: GcvPrecompute, omega) -> GcvObjectiveValue:
    """Evaluate the GCV objective for one smoothing spectrum.

    ``omega`` may be a Spectrum1D/Spectrum2D or a plain array of length p.
    """
    om = _omega_array(omega, pre.p)
    p_eff = pre.p_effective
    if pre.n - p_eff <= 0:
        raise GcvError(
            f"n = {pre.n} must exceed the effective pixel count p = {p_eff}: "
            "c(h) is undefined for square or near-square geometries "
            "(ill-conditioned regime)"
        )
    kept = pre.keep
    c = float(om[kept].sum()) / (pre.n - p_eff)
    val = float(((1.0 - om[kept]) ** 2 * pre.z1_sq[kept]).sum() + (1.0 + c) ** 2 * pre.z2_sq)
    return GcvObjectiveValue(zeta=val, c_of_h=c)


@dataclass(frozen=True)
class RadialSearchResult:
    bandwidth: RadialBandwidth
    objective: GcvObjectiveValue
    boundary_hit: bool
    n_evals: int
    trace: tuple = field(repr=False, default=())


@dataclass(frozen=True)
class EllipticalSearchResult:
    bandwidth: EllipticalBandwidth
    objective: GcvObjectiveValue
    boundary_hit: bool
    converged: bool
    n_evals: int


def _radial_objective(pre: GcvPrecompute, grid: ImageGrid):
    def f(h: float) -> float:
        om = circulant.eig_bccb(kernels.gaussian_radial(h, grid))
        return zeta(pre, om).zeta

    return f


def minimize_radial(
    pre: GcvPrecompute,
    grid: ImageGrid,
    h_range: tuple[float, float],
    n_grid: int = 40,
) -> RadialSearchResult:
    """GCV bandwidth for the radial kernel family.

    Coarse 40-point logarithmic grid over ``h_range``, then golden-section
    refinement around the grid minimum to relative width 1e-3.  Deterministic;
    ties break toward the smaller bandwidth.  A minimum on either end of the
    grid is returned as-is with ``boundary_hit`` set.
    """
    f = _radial_objective(pre, grid)
    i_best, xs, fs = log_grid_search(f, h_range[0], h_range[1], n_grid)
    trace = tuple(zip(xs.tolist(), fs.tolist()))
    boundary = i_best in (0, n_grid - 1)
    if boundary:
        h_best, f_best, extra = float(xs[i_best]), float(fs[i_best]), 0
    else:
        h_best, f_best, extra = golden_section(f, xs[i_best - 1], xs[i_best + 1])
        if fs[i_best] <= f_best:  # keep the grid point on ties
            h_best, f_best = float(xs[i_best]), float(fs[i_best])
    om = circulant.eig_bccb(kernels.gaussian_radial(h_best, grid))
    obj = zeta(pre, om)
    return RadialSearchResult(
        bandwidth=RadialBandwidth(h_best),
        objective=GcvObjectiveValue(obj.zeta, obj.c_of_h, params=(h_best,)),
        boundary_hit=boundary,
        n_evals=n_grid + extra,
        trace=trace,
    )


def minimize_elliptical(
    pre: GcvPrecompute,
    grid: ImageGrid,
    h_bounds: tuple[float, float],
    rho_max: float = 0.9,
    start: EllipticalBandwidth | None = None,
    max_iter: int = 500,
) -> EllipticalSearchResult:
    """GCV parameters for the elliptical kernel family (h1, h2, rho).

    Projected Nelder-Mead (reflection 1, expansion 2, contraction 1/2, shrink
    1/2) started from the radial minimizer ``(h_G, h_G, 0)`` unless an explicit
    start is given; box constraints by projection.  The best point evaluated is
    returned, so the objective never exceeds the value at the start.
    """
    if not 0 < rho_max <= 0.95:
        raise ValueError("rho_max must be in (0, 0.95]")
    if start is None:
        radial = minimize_radial(pre, grid, h_bounds)
        h0 = radial.bandwidth.fwhm
        start = EllipticalBandwidth(h0, h0, 0.0)

    def f(x) -> float:
        b = EllipticalBandwidth(float(x[0]), float(x[1]), float(x[2]))
        om = circulant.eig_bccb(kernels.gaussian_elliptical(b, grid))
        return zeta(pre, om).zeta

    x0 = np.array([start.h1, start.h2, start.rho])
    steps = np.array([0.25 * start.h1, -0.25 * start.h2, 0.2])
    lower = np.array([h_bounds[0], h_bounds[0], -rho_max])
    upper = np.array([h_bounds[1], h_bounds[1], rho_max])
    x, fx, converged, n_evals = nelder_mead(f, x0, steps, lower, upper, max_iter=max_iter)
    best = EllipticalBandwidth(float(x[0]), float(x[1]), float(x[2]))
    om = circulant.eig_bccb(kernels.gaussian_elliptical(best, grid))
    obj = zeta(pre, om)
    boundary = bool(
        np.any(np.isclose(x, lower, rtol=0, atol=1e-9))
        or np.any(np.isclose(x, upper, rtol=0, atol=1e-9))
    )
    return EllipticalSearchResult(
        bandwidth=best,
        objective=GcvObjectiveValue(obj.zeta, obj.c_of_h, params=(best.h1, best.h2, best.rho)),
        boundary_hit=boundary,
        converged=converged,
        n_evals=n_evals,
    )


# ---------------------------------------------------------------------------
# brute-force leave-one-out oracle and the rotated-model builder (test scale)
# ---------------------------------------------------------------------------


def press_bruteforce(y_rot: np.ndarray, k_rot: np.ndarray, s_h: np.ndarray) -> float:
    """Literal leave-one-LOR-out PRESS mean on a dense model.

    For each row j, solves the smoothed least-squares problem on the remaining
    rows and scores the prediction of the held-out observation; returns the
    mean squared prediction error.  Complex inputs are handled with conjugate
    transposes and squared moduli.  Test oracle only: O(n * p^3).
    """
    k = np.asarray(k_rot)
    y = np.asarray(y_rot)
    s = np.asarray(s_h)
    n, p = k.shape
    if n > 64:
        raise ValueError("press_bruteforce is a test oracle; use n <= 64")
    if y.shape != (n,) or s.shape != (p, p):
        raise ValueError("shape mismatch in press_bruteforce inputs")
    total = 0.0
    for j in range(n):
        kj = np.delete(k, j, axis=0)
        yj = np.delete(y, j)
        gram = kj.conj().T @ kj
        lam = s @ np.linalg.solve(gram, kj.conj().T @ yj)
        resid = k[j] @ lam - y[j]
        total += float(np.abs(resid) ** 2)
    return total / n


@dataclass(frozen=True)
class RotatedModel:
    """Small dense instance on which the LOOCV/GCV equivalence is exact."""

    k: np.ndarray           # n x p model operator U1 diag(d) V'
    u1: np.ndarray          # n x p orthonormal signal basis
    v: np.ndarray           # p x p real circulant eigenbasis
    d_singular: np.ndarray  # length p, paired (d_k = d_{p-k})
    n: int
    p: int

    def precompute_for(self, y: np.ndarray, floor_eps: float = 0.0) -> GcvPrecompute:
        a = self.v.T @ (self.k.T @ y)
        return precompute_from_parts(a**2, self.d_singular**2, float(y @ y), self.n, floor_eps)


def build_rotated_model(p: int, n: int, seed: int = 0) -> RotatedModel:
    """Construct an exactly-circulant rotated model with constant leverage.

    The p model frequencies are embedded into the n-dimensional real Fourier
    basis so that cosine/sine pairs stay paired (and the constant / alternating
    columns map to their n-dimensional counterparts); this is what makes every
    hat-matrix diagonal constant and the PRESS identity exact.  Singular values
    are random in [0.5, 2], paired like a true circulant spectrum.
    """
    if not 2 <= p < n:
        raise ValueError("need 2 <= p < n")
    if p % 2 == 0 and n % 2 != 0:
        raise ValueError("even p needs even n (the alternating column must embed)")
    eye_p = np.eye(p)
    v = np.column_stack([circulant.apply_v_1d(eye_p[:, i]) for i in range(p)])
    eye_n = np.eye(n)
    sigma = np.zeros(p, dtype=int)
    if p % 2 == 0:
        sigma[p // 2] = n // 2
    for k in range(1, (p + 1) // 2):
        sigma[k] = k
        sigma[p - k] = n - k
    u1 = np.column_stack([circulant.apply_v_1d(eye_n[:, s]) for s in sigma])
    rng = np.random.default_rng(seed)
    d = rng.uniform(0.5, 2.0, p)
    for k in range(1, (p + 1) // 2):
        d[p - k] = d[k]
    k_mat = u1 @ (d[:, None] * v.T)
    return RotatedModel(k=k_mat, u1=u1, v=v, d_singular=d, n=n, p=p)
