"""Benchmark the projection kernels: numba backend vs pure-numpy fallback.

Times forward projection, backprojection, and the end-to-end GCV-selected
reconstruction at a chosen scale.  The first numba call includes the
compile/cache-load cost and is reported separately.

Usage:
    python benchmarks/bench_projector.py [--grid 128,128] [--geometry 128,320]
                                         [--repeats 5] [--counts 1e5]
"""

import argparse
import time

import numpy as np

from tomogcv import _backend
from tomogcv import harness as H
from tomogcv import projector as P
from tomogcv import recon as R


def _time(fn, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_backend(name, grid, geom, y, repeats):
    _backend.set_backend(name)
    img = P.Image(np.random.default_rng(0).random((grid.nx, grid.ny)), grid)
    P._projection_table.cache_clear()
    P.ktk_spectrum.cache_clear()

    t0 = time.perf_counter()
    P.radon_forward(img, geom)
    first_forward = time.perf_counter() - t0

    rows = {
        "first forward (incl. table/compile)": first_forward,
        "forward": _time(lambda: P.radon_forward(img, geom), repeats),
        "backproject": _time(lambda: P.backproject(y, grid), repeats),
        "gcv select + reconstruct": _time(
            lambda: R.reconstruct(
                R.ReconRequest(sinogram=y, grid=grid, method="bpf", bandwidth="gcv")
            ),
            repeats,
        ),
    }
    _backend.set_backend(None)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--grid", default="128,128")
    ap.add_argument("--geometry", default="128,320")
    ap.add_argument("--repeats", type=int, default=5)
    ap.add_argument("--counts", type=float, default=1e5)
    args = ap.parse_args()

    nx, ny = (int(v) for v in args.grid.split(","))
    nd, na = (int(v) for v in args.geometry.split(","))
    grid = P.ImageGrid(nx, ny)
    geom = P.SinogramGeometry(nd, na)
    phantom = H.make_phantom(H.PhantomSpec("shepp_logan", grid))
    y = H.simulate_sinogram(phantom, geom, args.counts, seed=1)

    results = {}
    for name in ("numpy", "numba"):
        try:
            results[name] = bench_backend(name, grid, geom, y, args.repeats)
        except ImportError:
            print(f"{name}: unavailable, skipped")

    print(f"\ngrid {nx}x{ny}, sinogram {nd}x{na}, best of {args.repeats}")
    print(f"{'stage':<38}" + "".join(f"{n:>12}" for n in results))
    stages = next(iter(results.values())).keys()
    for stage in stages:
        line = f"{stage:<38}"
        for name in results:
            line += f"{results[name][stage] * 1e3:>10.1f}ms"
        print(line)
    if {"numba", "numpy"} <= set(results):
        for stage in ("forward", "backproject"):
            speedup = results["numpy"][stage] / results["numba"][stage]
            print(f"numba speedup, {stage}: {speedup:.1f}x")


if __name__ == "__main__":
    main()
