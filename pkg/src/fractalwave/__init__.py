"""Damped stochastic wave equation on p.c.f. self-similar fractals.

Pipeline: combinatorial fractal description -> level-n energy and mass ->
eigenpairs -> per-mode damped-oscillator kernels -> exact Gaussian mode
sampling and exact second-moment diagnostics.
"""

from .energy import (
    DimensionData,
    EnergySystem,
    HarmonicStructure,
    build_system,
    dimension_exponents,
    effective_resistance,
    verify_harmonic_structure,
)
from .errors import NumericalError, StructureError
from .kernel import WaveParams, increment_variance, integral_V2, kernel_V, kernel_Vdot, mode_transition
from .spectrum import Spectrum, solve_spectrum, weyl_diagnostics
from .topology import FractalSpec, expand_complex, hata_spec, load_spec, verify_gluing

__version__ = "0.1.0"

__all__ = [
    "DimensionData",
    "EnergySystem",
    "FractalSpec",
    "HarmonicStructure",
    "NumericalError",
    "Spectrum",
    "StructureError",
    "WaveParams",
    "build_system",
    "dimension_exponents",
    "effective_resistance",
    "expand_complex",
    "hata_spec",
    "increment_variance",
    "integral_V2",
    "kernel_V",
    "kernel_Vdot",
    "load_spec",
    "mode_transition",
    "solve_spectrum",
    "verify_gluing",
    "verify_harmonic_structure",
    "weyl_diagnostics",
]
