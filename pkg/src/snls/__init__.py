"""Spectral simulator and verification lab for the stochastic nonlinear
Schrödinger equation with multiplicative Stratonovich noise on the flat
2-torus."""

__version__ = "0.1.0"

from .torus import TorusGrid, GridFunction, NonFiniteFieldError
from .coefficients import CoefficientSpec, SpecError, cutoff_theta
from .noise import NoiseBasis, BrownianPath, build_basis, sample_path
from .norms import Trajectory, y_norm
from .evolution import SimConfig, run_trajectory, run_ensemble, picard_solve

__all__ = [
    "TorusGrid", "GridFunction", "NonFiniteFieldError", "CoefficientSpec", "SpecError",
    "cutoff_theta", "NoiseBasis", "BrownianPath", "build_basis", "sample_path", "Trajectory",
    "y_norm", "SimConfig", "run_trajectory", "run_ensemble", "picard_solve",
]
