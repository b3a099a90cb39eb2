"""Numerical laboratory for the Hele-Shaw limit of the porous medium equation
with a space-time varying upper bound m, drift -b and source f."""
from .coefficients import CoefficientFrame, CoefficientSpec, congestion_margin, eval_frame, validate_assumptions
from .grid import Grid
from .kernels import available_backends, default_backend
from .solver import SolverConfig, SolverState, Trajectory, cfl_dt, regularize_initial, run, step

__version__ = "0.1.0"
