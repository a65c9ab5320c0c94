"""Leapfrog finite-difference solver for the Dirichlet elastic wave problem."""

from .grid import Face, Grid
from .ibvp import (BoundarySignal, BurstSource, CompositeSource, FunctionSource, SolveResult,
                   ZeroSource, burst_envelope, cfl_dt, discrete_energy, max_wave_speed,
                   solve_ibvp, steps_for, strain_energy)
from .stencil import DiscreteElasticLaplacian

__all__ = [
    "BoundarySignal", "BurstSource", "CompositeSource", "DiscreteElasticLaplacian", "Face",
    "FunctionSource", "Grid", "SolveResult", "ZeroSource", "burst_envelope", "cfl_dt",
    "discrete_energy", "max_wave_speed", "solve_ibvp", "steps_for", "strain_energy",
]
