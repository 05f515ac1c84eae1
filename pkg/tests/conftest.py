import numpy as np
import pytest

from tomogcv import harness, projector


@pytest.fixture(scope="session", autouse=True)
def _warmup_kernels():
    """Compile/load the numba kernels once so no timed test pays for it."""
    grid = projector.ImageGrid(8, 8)
    geom = projector.SinogramGeometry(8, 20)
    img = projector.Image(np.ones((8, 8)), grid)
    projector.backproject(projector.radon_forward(img, geom), grid)


@pytest.fixture(scope="session")
def desk_grid():
    return projector.ImageGrid(64, 64)


@pytest.fixture(scope="session")
def desk_geom():
    return projector.SinogramGeometry(64, 160)


@pytest.fixture(scope="session")
def desk_phantom(desk_grid):
    return harness.make_phantom(harness.PhantomSpec("shepp_logan", desk_grid))


@pytest.fixture(scope="session")
def desk_sinogram(desk_phantom, desk_geom):
    return harness.simulate_sinogram(desk_phantom, desk_geom, 1e5, seed=42)


def dense_radon_matrix(grid, geom):
    """K assembled column by column from unit-impulse projections (test oracle)."""
    cols = []
    for i in range(grid.npix):
        e = np.zeros(grid.npix)
        e[i] = 1.0
        img = projector.Image(e.reshape(grid.nx, grid.ny), grid)
        cols.append(projector.radon_forward(img, geom).values.ravel())
    return np.column_stack(cols)
