"""tomogcv: 2D backprojected-filtering reconstruction with GCV bandwidth selection.

Modules
-------
circulant   spectral algebra for symmetric circulant / BCCB matrices
projector   discretized Radon transform, exact adjoint, K'K surrogate
kernels     radial and elliptical Gaussian smoothing generators
gcv         invariant PRESS/GCV objective, precomputation, minimizers
recon       reconstruction pipelines (BPF, BPFe and the "+" variants)
harness     phantoms, Poisson simulation, metrics, Monte-Carlo runner
io          header+raw and CSV file formats
cli         command-line interface (simulate / reconstruct / tune / experiment)
"""

from ._backend import active_backend, set_backend
from .errors import GcvError, GeometryError, SpectralError, TomogcvError

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "active_backend",
    "set_backend",
    "TomogcvError",
    "SpectralError",
    "GeometryError",
    "GcvError",
]
