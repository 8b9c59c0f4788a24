"""Hybrid direct/iterative solver for saddle point systems ``[A B; B^T 0]``
whose ``B`` is a gradient matrix (F-matrices).

Pipeline: decompose the grid into subdomains, eliminate the interiors with
the structure-preserving Rule-1 pivoting, transform the separator unknowns,
drop the couplings of the non-summed separator unknowns, factor what is left
and iterate on the Schur complement.
"""
from .bench import RunConfig, SolveReport, run, sweep
from .decomp import GridSpec, decompose
from .factor import direct_solve, eliminate_interiors, factorize
from .krylov import condition_estimate, gmres, pcg, ppcg
from .precond import drop_and_factor
from .problems import (ProblemSpec, gen_darcy, gen_poisson, gen_stokes, generate,
                       random_divergence_free_system)
from .saddle import SaddleSystem, is_f_matrix, validate_gradient_matrix
from .solver import HybridSolver

__version__ = "0.1.0"

__all__ = [
    "GridSpec", "HybridSolver", "ProblemSpec", "RunConfig", "SaddleSystem", "SolveReport",
    "condition_estimate", "decompose", "direct_solve", "drop_and_factor", "eliminate_interiors",
    "factorize", "gen_darcy", "gen_poisson", "gen_stokes", "generate", "gmres", "is_f_matrix", "pcg", "ppcg", "random_divergence_free_system",
    "run", "sweep", "validate_gradient_matrix",
]
