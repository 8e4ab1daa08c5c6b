"""Benders decomposition for two-stage stochastic programs with binary recourse.

Scenario subproblems are compiled into binary decision diagrams; shortest
paths give recourse values and their duals give optimality cuts.
"""

from .benders import (
    CvarConfig,
    Options,
    ParameterError,
    Solution,
    cvar_sorted,
    solve_cvar,
    solve_risk_neutral,
    value_at_risk,
)
from .cuts import Cut, CutKind, bdd_cut, lshaped_cut, lshaped_cut_monotone, pure_benders
from .diagram import (
    Bdd,
    DiagramError,
    RecourseInfeasibleError,
    ResourceError,
    build_bdd,
    build_cap_bdd,
    build_cost_bdd,
    dump_bdd,
    shortest_path,
)
from .model import IndicatorExpr, Mode, ModelError, Scenario, StochasticProgram, load_program, save_program

__version__ = "0.1.0"

__all__ = [
    "Bdd", "Cut", "CutKind", "CvarConfig", "DiagramError", "IndicatorExpr", "Mode", "ModelError",
    "Options", "ParameterError", "RecourseInfeasibleError", "ResourceError", "Scenario", "Solution",
    "StochasticProgram", "bdd_cut", "build_bdd", "build_cap_bdd", "build_cost_bdd", "cvar_sorted",
    "dump_bdd", "load_program", "lshaped_cut", "lshaped_cut_monotone", "pure_benders", "save_program",
    "shortest_path", "solve_cvar", "solve_risk_neutral", "value_at_risk",
]
