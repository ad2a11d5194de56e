"""Sparse LP / MILP solving: revised simplex plus branch and bound."""

from .branch_bound import (MilpSolution, SolverOptions, WarmStartError, fix_binaries_and_solve,
                           relative_gap, solve_lp, solve_milp)
from .problem import EQ, GE, LE, MilpProblem, ProblemBuilder, ProblemError, write_lp
from .propagate import DomainPropagator
from .simplex import Basis, RevisedSimplex, SimplexOptions

__all__ = [
    "EQ", "GE", "LE", "Basis", "DomainPropagator", "MilpProblem", "MilpSolution", "ProblemBuilder", "ProblemError",
    "RevisedSimplex", "SimplexOptions", "SolverOptions", "WarmStartError",
    "fix_binaries_and_solve", "relative_gap", "solve_lp", "solve_milp", "write_lp",
]
