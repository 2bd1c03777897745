"""Numerical laboratory for Schrodinger operators -Laplacian + V with polynomial V.

Hermite-Galerkin spectra, spectral windows, Weyl quantization, random
window states and the statistics harnesses built on top of them.
"""

from .eigensolver import EigenBasis, solve
from .errors import ConfigError, LabError
from .experiments import ExperimentReport
from .potential import PolynomialPotential, harmonic, radial_power
from .quantization import PolySymbol, RadialRatioSymbol, constant_symbol, monomial
from .spectral_windows import SpectralWindow, make_window

__all__ = [
    "ConfigError",
    "EigenBasis",
    "ExperimentReport",
    "LabError",
    "PolySymbol",
    "PolynomialPotential",
    "RadialRatioSymbol",
    "SpectralWindow",
    "constant_symbol",
    "harmonic",
    "make_window",
    "monomial",
    "radial_power",
    "solve",
]
__version__ = "0.1.0"
