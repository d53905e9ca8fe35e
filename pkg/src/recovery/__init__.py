"""Recovery of multivariate functions from random samples.

Modules
-------
index       weights and hyperbolic-cross index sets
bases       Fourier, Chebyshev, Legendre systems and kernel spectra
sampling    seeded node generation, including importance sampling
leastsq     design matrices, LSQR, plain and weighted least squares
quadrature  cubature weights from the least-squares system
bounds      explicit bounds, parameter rules, concentration harness
testfns     benchmark functions with exact coefficients
wavelet     hyperbolic wavelet regression
cli         batch experiment runner
"""

from .bases import BasisFamily, SpectrumModel
from .index import IndexSet, WeightRule, hyperbolic_cross
from .leastsq import Approximant, least_squares, weighted_least_squares
from .sampling import NodeSet, RngStream

__all__ = [
    "Approximant",
    "BasisFamily",
    "IndexSet",
    "NodeSet",
    "RngStream",
    "SpectrumModel",
    "WeightRule",
    "hyperbolic_cross",
    "least_squares",
    "weighted_least_squares",
]

__version__ = "0.1.0"
