"""Pure-numpy projection kernels (fallback backend).

Per-angle scatter uses ``np.bincount``, which accumulates in index order, so
results are deterministic for a fixed geometry.
"""

import numpy as np

NAME = "numpy"


def forward(values, r0, frac, inside, n_dist):
    n_angle = r0.shape[0]
    out = np.zeros((n_dist, n_angle))
    for t in range(n_angle):
        m = inside[t]
        idx = r0[t][m]
        w = frac[t][m]
        v = values[m]
        col = np.bincount(idx, weights=v * (1.0 - w), minlength=n_dist)
        col += np.bincount(idx + 1, weights=v * w, minlength=n_dist)
        out[:, t] = col
    return out


def backproject(sino, r0, frac, inside):
    n_angle = r0.shape[0]
    acc = np.zeros(r0.shape[1])
    for t in range(n_angle):
        col = sino[:, t]
        # r0 is clamped to [0, n_dist-2] even for dropped pixels, so the
        # gather is always in bounds; the mask zeroes their contribution.
        vals = (1.0 - frac[t]) * col[r0[t]] + frac[t] * col[r0[t] + 1]
        acc += np.where(inside[t], vals, 0.0)
    return acc
