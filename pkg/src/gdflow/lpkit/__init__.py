"""LP model, simplex, Hungarian assignment and Birkhoff decomposition."""
from .model import EQ, GE, LE, LinearProgram, LpBuilder, LpSolution, dual_objective, duality_gap, from_dense, primal_residual
from .simplex import simplex_solve
from .hungarian import hungarian
from .birkhoff import birkhoff_decompose, recompose
from .backend import solve

__all__ = [
    "EQ", "GE", "LE", "LinearProgram", "LpBuilder", "LpSolution", "from_dense",
    "dual_objective", "duality_gap", "primal_residual", "simplex_solve", "solve",
    "hungarian", "birkhoff_decompose", "recompose",
]
