"""Deterministic derivative-free minimizers shared by the GCV and oracle searches."""

from __future__ import annotations

import numpy as np

_INVPHI = (np.sqrt(5.0) - 1.0) / 2.0


def log_grid_search(f, lo: float, hi: float, n: int):
    """Evaluate f on n log-spaced points; return (best_index, xs, fs).

    Ties break toward the smaller argument (first minimum wins).
    """
    if not (0 < lo < hi) or not np.isfinite(hi):
        raise ValueError("need a positive finite range with lo < hi")
    xs = np.exp(np.linspace(np.log(lo), np.log(hi), n))
    fs = np.array([f(x) for x in xs])
    if not np.all(np.isfinite(fs)):
        raise FloatingPointError("objective is non-finite on the search grid")
    return int(np.argmin(fs)), xs, fs


def golden_section(f, lo: float, hi: float, rel_tol: float = 1e-3):
    """Golden-section minimization in log space down to relative width rel_tol.

    Deterministic; the `<=` acceptance biases ties toward the smaller argument.
    Returns (x_best, f_best, n_evals).
    """
    a, b = np.log(lo), np.log(hi)
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    fc, fd = f(np.exp(c)), f(np.exp(d))
    n_evals = 2
    while (b - a) > rel_tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - _INVPHI * (b - a)
            fc = f(np.exp(c))
        else:
            a, c, fc = c, d, fd
            d = a + _INVPHI * (b - a)
            fd = f(np.exp(d))
        n_evals += 1
    x = np.exp(c) if fc <= fd else np.exp(d)
    fx = min(fc, fd)
    return float(x), float(fx), n_evals


def nelder_mead(f, x0, steps, lower, upper, rel_tol: float = 1e-3, max_iter: int = 500):
    """Projected Nelder-Mead with the classic coefficients.

    Reflection 1, expansion 2, contraction 1/2, shrink 1/2; every candidate is
    projected onto the box [lower, upper] before evaluation.  Converges when
    the simplex diameter drops below ``rel_tol`` relative to the best vertex.
    Returns (x_best, f_best, converged, n_evals); x_best is the best point
    ever evaluated, so its value never exceeds f(x0).
    """
    x0 = np.asarray(x0, dtype=float)
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    ndim = x0.size

    def project(x):
        return np.minimum(np.maximum(x, lower), upper)

    def feval(x):
        v = f(x)
        if not np.isfinite(v):
            raise FloatingPointError(f"objective non-finite at {x}")
        return v

    verts = [project(x0)]
    for i in range(ndim):
        x = x0.copy()
        x[i] = x0[i] + steps[i]
        verts.append(project(x))
    verts = np.array(verts)
    fvals = np.array([feval(v) for v in verts])
    n_evals = len(fvals)
    best_x, best_f = verts[np.argmin(fvals)].copy(), float(fvals.min())

    converged = False
    for _ in range(max_iter):
        order = np.argsort(fvals, kind="stable")
        verts, fvals = verts[order], fvals[order]
        if fvals[0] < best_f:
            best_x, best_f = verts[0].copy(), float(fvals[0])
        diam = max(np.linalg.norm(v - verts[0]) for v in verts[1:])
        if diam <= rel_tol * (1.0 + np.linalg.norm(verts[0])):
            converged = True
            break
        centroid = verts[:-1].mean(axis=0)
        xr = project(centroid + (centroid - verts[-1]))
        fr = feval(xr)
        n_evals += 1
        if fr < fvals[0]:
            xe = project(centroid + 2.0 * (centroid - verts[-1]))
            fe = feval(xe)
            n_evals += 1
            if fe < fr:
                verts[-1], fvals[-1] = xe, fe
            else:
                verts[-1], fvals[-1] = xr, fr
        elif fr < fvals[-2]:
            verts[-1], fvals[-1] = xr, fr
        else:
            xc = project(centroid + 0.5 * (verts[-1] - centroid))
            fc = feval(xc)
            n_evals += 1
            if fc < fvals[-1]:
                verts[-1], fvals[-1] = xc, fc
            else:
                for i in range(1, len(verts)):
                    verts[i] = project(verts[0] + 0.5 * (verts[i] - verts[0]))
                    fvals[i] = feval(verts[i])
                n_evals += ndim
    order = np.argsort(fvals, kind="stable")
    if fvals[order[0]] < best_f:
        best_x, best_f = verts[order[0]].copy(), float(fvals[order[0]])
    return best_x, best_f, converged, n_evals
