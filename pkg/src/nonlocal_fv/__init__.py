"""Finite-volume schemes for scalar conservation laws with a nonlocal velocity."""

from nonlocal_fv.model import (
    InitialData, KernelSpec, ModelError, ModelSpec, Piece, get_kernel, make_model,
    validate_model,
)
from nonlocal_fv.quadrature import KernelWeights, compute_weights, verify_weights
from nonlocal_fv.flux import FluxScheme, SchemeConstants, make_scheme, scheme_constants
from nonlocal_fv.solver import (
    ClassicLxF, GridSpec, SolverState, cfl_max_lambda, nonlocal_velocity, run, step,
)

__version__ = "0.1.0"
