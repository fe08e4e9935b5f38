"""Embedded LP (revised simplex with duals) and MILP (branch and bound) backend."""
from .lp import SolverError, solve_lp
from .milp import solve_milp
from .model import INF, BigMRecord, LinearModel, ModelError, Solution, Status

__all__ = [
    "INF", "BigMRecord", "LinearModel", "ModelError", "Solution", "SolverError",
    "Status", "solve_lp", "solve_milp",
]
