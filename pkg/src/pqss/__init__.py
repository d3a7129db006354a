"""Finite-element toolkit for coupled (p,q)-Laplacian systems: explicit
sub/supersolutions, hypothesis checks and monotone iteration."""

from .config import RunConfig, dump_config, load_config, parse_config
from .errors import PqssError
from .fem import Field, SolverOptions, solve_scalar_dirichlet, weak_residual_system
from .iterate import (IterateOptions, PipelineOptions, monotone_iterate, solve_existence,
                      solve_multiplicity)
from .mesh import build_mesh
from .nonlinearity import (NonlinearityQuad, check_hypotheses, piecewise_power,
                           polynomial_sum)
from .problem import ProblemParams
from .spectral import first_eigenpair, spectral_data, torsion_function

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "dump_config", "load_config", "parse_config", "PqssError",
    "Field", "SolverOptions", "solve_scalar_dirichlet", "weak_residual_system",
    "IterateOptions", "PipelineOptions", "monotone_iterate", "solve_existence",
    "solve_multiplicity", "build_mesh", "NonlinearityQuad", "check_hypotheses",
    "piecewise_power", "polynomial_sum", "ProblemParams", "first_eigenpair",
    "spectral_data", "torsion_function",
]
