"""Short-time heat kernel asymptotics on model manifolds: parametrices,
repeated convolution, transmutation and Laplace-method path integrals."""

from .errors import HeatKernError
from .geometry import ManifoldModel, QuadratureGrid, build_grid, distance, minimizing_geodesics
from .kernels import (
    CutoffProfile,
    KernelMatrix,
    OperatorSpec,
    approximate_kernel,
    euclidean_kernel,
    expansion_remainder,
    heat_coefficient,
    reference_kernel,
)
from .convolution import Partition, convergence_sweep, convolution_product, convolve

__all__ = [
    "HeatKernError", "ManifoldModel", "QuadratureGrid", "build_grid", "distance",
    "minimizing_geodesics", "CutoffProfile", "KernelMatrix", "OperatorSpec",
    "approximate_kernel", "euclidean_kernel", "expansion_remainder", "heat_coefficient",
    "reference_kernel", "Partition", "convergence_sweep", "convolution_product", "convolve",
]

__version__ = "0.1.0"
