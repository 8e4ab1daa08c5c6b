"""Desk-scale LP/MILP engine."""

from __future__ import annotations

import time

from .bnb import BranchAndBound, Limits, NodeContext, solve_bnb
from .engines import HighsEngine, TableauEngine, make_engine
from .lp import INF, LinearProgram, SolveResult, SolverError, Status
from .simplex import solve_lp_simplex


def solve_lp(lp: LinearProgram, method: str = "simplex") -> SolveResult:
    """Solve the continuous relaxation of ``lp`` (binaries relaxed to [0, 1]).

    ``method`` is ``"simplex"`` (the built-in dense tableau) or ``"highs"``.
    """
    start = time.perf_counter()
    if method == "simplex":
        res = solve_lp_simplex(lp)
    else:
        eng = make_engine(lp, method)
        status, x, duals, obj = eng.solve(lp.lb, lp.ub)
        res = SolveResult(status, x=x, duals=duals, objective=obj, bound=obj, iterations=eng.iterations)
    res.wall_time = time.perf_counter() - start
    return res


__all__ = [
    "BranchAndBound", "HighsEngine", "INF", "Limits", "LinearProgram", "NodeContext",
    "SolveResult", "SolverError", "Status", "TableauEngine", "make_engine", "solve_bnb",
    "solve_lp", "solve_lp_simplex",
]
