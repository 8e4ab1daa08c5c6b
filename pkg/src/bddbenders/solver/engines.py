"""Incremental LP engines used by branch-and-bound.

Both engines expose the same small surface: grow the model with rows and
columns, override column bounds, and re-solve.  ``HighsEngine`` keeps the
HiGHS model alive between solves so every re-solve starts from the last
basis; ``TableauEngine`` re-runs the dense simplex from scratch.
"""

from __future__ import annotations

import numpy as np

from .lp import LinearProgram, SolverError, Status
from .simplex import solve_lp_simplex


class TableauEngine:
    def __init__(self, lp: LinearProgram):
        self.lp = lp.copy()
        self.iterations = 0

    @property
    def num_columns(self):
        return self.lp.num_columns

    def add_column(self, cost, lb, ub):
        return self.lp.add_column(cost, lb, ub)

    def add_row(self, coeffs, sense, rhs):
        return self.lp.add_row(coeffs, sense, rhs)

    def add_rows(self, rows):
        for coeffs, sense, rhs in rows:
            self.lp.add_row(coeffs, sense, rhs)

    def solve(self, lb, ub):
        lp = self.lp
        saved = lp.lb, lp.ub
        lp.lb, lp.ub = list(lb), list(ub)
        try:
            res = solve_lp_simplex(lp)
        finally:
            lp.lb, lp.ub = saved
        self.iterations += res.iterations
        return res.status, res.x, res.duals, res.objective


_STATUS = None


def _status_map():
    global _STATUS
    if _STATUS is None:
        import highspy

        ms = highspy.HighsModelStatus
        _STATUS = {
            ms.kOptimal: Status.OPTIMAL,
            ms.kInfeasible: Status.INFEASIBLE,
            ms.kUnbounded: Status.UNBOUNDED,
            ms.kUnboundedOrInfeasible: Status.INFEASIBLE,
        }
    return _STATUS


class HighsEngine:
    def __init__(self, lp: LinearProgram):
        import highspy

        self._inf = highspy.kHighsInf
        h = highspy.Highs()
        h.setOptionValue("output_flag", False)
        h.setOptionValue("presolve", "off")
        h.setOptionValue("threads", 1)
        self.h = h
        self.iterations = 0
        n = lp.num_columns
        if n:
            h.addCols(
                n,
                np.array([float(c) for c in lp.cost]),
                self._bounds(lp.lb),
                self._bounds(lp.ub),
                0,
                np.zeros(n, dtype=np.int32),
                np.zeros(0, dtype=np.int32),
                np.zeros(0),
            )
        if lp.sense == "max":
            h.changeObjectiveSense(highspy.ObjSense.kMaximize)
        self._n = n
        self._m = 0
        for row in lp.rows:
            self.add_row(row.coeffs, row.sense, row.rhs)

    def _bounds(self, values):
        return np.array([max(-self._inf, min(self._inf, float(v))) for v in values])

    @property
    def num_columns(self):
        return self._n

    def add_column(self, cost, lb, ub):
        lo, hi = self._bounds([lb, ub])
        self.h.addCol(float(cost), lo, hi, 0, np.zeros(0, dtype=np.int32), np.zeros(0))
        self._n += 1
        return self._n - 1

    def add_row(self, coeffs, sense, rhs):
        idx = np.fromiter(coeffs.keys(), dtype=np.int32, count=len(coeffs))
        val = np.fromiter((float(v) for v in coeffs.values()), dtype=float, count=len(coeffs))
        rhs = float(rhs)
        lo = rhs if sense in (">=", "==") else -self._inf
        hi = rhs if sense in ("<=", "==") else self._inf
        self.h.addRow(lo, hi, len(idx), idx, val)
        self._m += 1
        return self._m - 1

    def add_rows(self, rows):
        """Bulk insert of ``(coeffs, sense, rhs)`` triples."""
        if not rows:
            return
        lower, upper, starts, index, value = [], [], [], [], []
        for coeffs, sense, rhs in rows:
            rhs = float(rhs)
            lower.append(rhs if sense in (">=", "==") else -self._inf)
            upper.append(rhs if sense in ("<=", "==") else self._inf)
            starts.append(len(index))
            index.extend(coeffs.keys())
            value.extend(float(v) for v in coeffs.values())
        self.h.addRows(
            len(rows), np.array(lower), np.array(upper), len(index),
            np.array(starts, dtype=np.int32), np.array(index, dtype=np.int32), np.array(value),
        )
        self._m += len(rows)

    def solve(self, lb, ub):
        h = self.h
        n = self._n
        h.changeColsBounds(n, np.arange(n, dtype=np.int32), self._bounds(lb), self._bounds(ub))
        h.run()
        status = _status_map().get(h.getModelStatus(), Status.LIMIT)
        info = h.getInfo()
        self.iterations += info.simplex_iteration_count
        if status is not Status.OPTIMAL:
            return status, None, None, None
        sol = h.getSolution()
        return status, np.array(sol.col_value), np.array(sol.row_dual), info.objective_function_value


def make_engine(lp: LinearProgram, backend: str):
    if backend == "highs":
        return HighsEngine(lp)
    if backend == "simplex":
        return TableauEngine(lp)
    raise SolverError(f"unknown LP backend {backend!r}")


def solve_with_engine(lp: LinearProgram, backend: str):
    eng = make_engine(lp, backend)
    lb = [v for v in lp.lb]
    ub = [v for v in lp.ub]
    return eng.solve(lb, ub), eng.iterations
