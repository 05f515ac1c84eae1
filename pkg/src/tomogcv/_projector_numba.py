"""Numba-compiled projection kernels (default backend when numba is available).

Plain sequential loops: deterministic accumulation order, no threading, disk
cache so the compile cost is paid once per environment.
"""

import numpy as np
from numba import njit

NAME = "numba"


@njit(cache=True)
def _forward(values, r0, frac, inside, out):
    n_angle, npix = r0.shape
    for t in range(n_angle):
        for i in range(npix):
            if inside[t, i]:
                a = r0[t, i]
                w = frac[t, i]
                v = values[i]
                out[a, t] += v * (1.0 - w)
                out[a + 1, t] += v * w


@njit(cache=True)
def _backproject(sino, r0, frac, inside, acc):
    n_angle, npix = r0.shape
    for t in range(n_angle):
        for i in range(npix):
            if inside[t, i]:
                a = r0[t, i]
                w = frac[t, i]
                acc[i] += (1.0 - w) * sino[a, t] + w * sino[a + 1, t]


def forward(values, r0, frac, inside, n_dist):
    out = np.zeros((n_dist, r0.shape[0]))
    _forward(values, r0, frac, inside, out)
    return out


def backproject(sino, r0, frac, inside):
    acc = np.zeros(r0.shape[1])
    _backproject(sino, r0, frac, inside, acc)
    return acc
