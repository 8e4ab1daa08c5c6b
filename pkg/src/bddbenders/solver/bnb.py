"""Best-first branch-and-bound over binary columns with cut callbacks.

Callbacks receive a :class:`NodeContext`.  Through it they may add rows
(lazy constraints or user cuts), add continuous columns, and propose
incumbents.  Rows and columns are global: every later node sees them.

* ``lazy`` runs at every LP-integral node; adding rows rejects the point
  and the node is re-solved.
* ``user_cuts`` runs at fractional nodes before branching (rounds capped).
* ``heuristic`` runs at fractional nodes that survive the bound test.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass

import numpy as np

from .engines import make_engine
from .lp import INF, LinearProgram, SolveResult, SolverError, Status


@dataclass
class Limits:
    time: float | None = None
    nodes: int | None = None
    gap_abs: float = 1e-9
    int_tol: float = 1e-6
    cut_rounds: int = 50


class NodeContext:
    def __init__(self, search: "BranchAndBound", x, objective, depth, node_index):
        self._search = search
        self.x = x
        self.objective = objective
        self.depth = depth
        self.node_index = node_index
        self.rows_added = 0
        self.columns_added = 0
        self.proposed = False

    @property
    def is_root(self) -> bool:
        return self.depth == 0

    @property
    def incumbent_value(self) -> float:
        return self._search.incumbent_value

    @property
    def elapsed(self) -> float:
        return time.perf_counter() - self._search.start

    def add_row(self, coeffs: dict, sense: str, rhs) -> None:
        self._search.pending_rows.append((coeffs, sense, rhs))
        self.rows_added += 1

    def add_column(self, cost, lb=0.0, ub=INF) -> int:
        self.columns_added += 1
        return self._search.add_column(cost, lb, ub)

    def propose(self, objective: float, x=None, payload=None) -> bool:
        self.proposed = True
        return self._search.propose(objective, x, payload)


class BranchAndBound:
    def __init__(self, lp: LinearProgram, lazy=None, heuristic=None, user_cuts=None,
                 limits: Limits | None = None, backend: str = "highs", on_progress=None):
        if lp.sense != "min":
            raise SolverError("branch-and-bound works on minimization programs")
        self.lp = lp
        self.lazy = lazy
        self.heuristic = heuristic
        self.user_cuts = user_cuts
        self.limits = limits or Limits()
        self.engine = make_engine(lp, backend)
        self.on_progress = on_progress
        self.base_lb = list(lp.lb)
        self.base_ub = list(lp.ub)
        self.binary = [j for j in range(lp.num_columns) if lp.binary[j]]
        self.pending_rows: list = []
        self.incumbent_value = INF
        self.incumbent_x = None
        self.incumbent_payload = None
        self.start = time.perf_counter()
        self.nodes = 0
        self.lp_solves = 0

    # ---------------------------------------------------------------- model
    def add_column(self, cost, lb, ub) -> int:
        j = self.engine.add_column(cost, lb, ub)
        self.base_lb.append(lb)
        self.base_ub.append(ub)
        return j

    def _flush_rows(self) -> int:
        rows, self.pending_rows = self.pending_rows, []
        self.engine.add_rows(rows)
        return len(rows)

    def propose(self, objective, x, payload) -> bool:
        if objective < self.incumbent_value:
            self.incumbent_value = objective
            self.incumbent_x = None if x is None else np.array(x, dtype=float)
            self.incumbent_payload = payload
            return True
        return False

    # --------------------------------------------------------------- search
    def _out_of_budget(self) -> bool:
        lim = self.limits
        if lim.time is not None and time.perf_counter() - self.start > lim.time:
            return True
        return lim.nodes is not None and self.nodes >= lim.nodes

    def _prunable(self, bound) -> bool:
        return bound >= self.incumbent_value - self.limits.gap_abs

    def run(self) -> SolveResult:
        heap = [(-INF, 0, 0, ())]
        seq = 1
        unbounded = False
        limited = False
        while heap:
            if self._out_of_budget():
                limited = True
                break
            bound, _, depth, fixings = heapq.heappop(heap)
            if self._prunable(bound):
                continue
            self.nodes += 1
            outcome = self._process(bound, depth, fixings)
            if outcome == "unbounded":
                unbounded = True
                break
            if outcome == "limit":
                heapq.heappush(heap, (bound, seq, depth, fixings))
                seq += 1
                limited = True
                break
            if isinstance(outcome, tuple):
                obj, branch_col = outcome
                for val in (1, 0):
                    heapq.heappush(heap, (obj, seq, depth + 1, fixings + ((branch_col, val),)))
                    seq += 1
            self._report(heap)

        wall = time.perf_counter() - self.start
        stats = {"lp_solves": self.lp_solves, "lp_iterations": self.engine.iterations}
        if unbounded:
            return SolveResult(Status.UNBOUNDED, nodes=self.nodes, wall_time=wall, stats=stats)
        open_bound = min((b for b, *_ in heap), default=INF)
        bound = min(open_bound, self.incumbent_value)
        if limited and heap:
            status = Status.LIMIT
        elif math.isinf(self.incumbent_value):
            status = Status.INFEASIBLE
        else:
            status = Status.OPTIMAL
            bound = self.incumbent_value if not heap else bound
        return SolveResult(
            status,
            x=self.incumbent_x,
            objective=None if math.isinf(self.incumbent_value) else self.incumbent_value,
            bound=None if math.isinf(bound) else bound,
            nodes=self.nodes,
            wall_time=wall,
            payload=self.incumbent_payload,
            stats=stats,
        )

    def _report(self, heap):
        if self.on_progress is not None:
            lb = min((b for b, *_ in heap), default=self.incumbent_value)
            self.on_progress(min(lb, self.incumbent_value), self.incumbent_value)

    def _process(self, bound, depth, fixings):
        lim = self.limits
        cut_rounds = 0
        while True:
            lb = list(self.base_lb)
            ub = list(self.base_ub)
            for j, v in fixings:
                lb[j] = ub[j] = v
            status, x, _, obj = self.engine.solve(lb, ub)
            self.lp_solves += 1
            if status is Status.INFEASIBLE:
                return None
            if status is Status.UNBOUNDED:
                return "unbounded"
            if status is not Status.OPTIMAL:
                raise SolverError(f"LP relaxation ended with status {status}")
            if self._prunable(obj):
                return None
            frac = [j for j in self.binary if abs(x[j] - round(x[j])) > lim.int_tol]
            ctx = NodeContext(self, x, obj, depth, self.nodes)
            if not frac:
                if self.lazy is not None:
                    self.lazy(ctx)
                    if self._flush_rows() or ctx.columns_added:
                        if self._out_of_budget():
                            return "limit"
                        continue
                if not ctx.proposed:
                    xr = x.copy()
                    xr[self.binary] = np.round(xr[self.binary])
                    self.propose(obj, xr, None)
                return None
            if self.user_cuts is not None and cut_rounds < lim.cut_rounds:
                self.user_cuts(ctx)
                if self._flush_rows() or ctx.columns_added:
                    cut_rounds += 1
                    if self._out_of_budget():
                        return "limit"
                    continue
            if self.heuristic is not None:
                self.heuristic(ctx)
                self._flush_rows()
                if self._prunable(obj):
                    return None
            branch = min(frac, key=lambda j: (abs(x[j] - 0.5), j))
            return obj, branch


def solve_bnb(lp: LinearProgram, lazy=None, heuristic=None, user_cuts=None,
              limits: Limits | None = None, backend: str = "highs", on_progress=None) -> SolveResult:
    """Branch-and-bound; maximization programs are solved through negation."""
    if lp.sense == "max":
        if lazy or heuristic or user_cuts:
            raise SolverError("callbacks are supported for minimization only")
        neg = lp.copy()
        neg.sense = "min"
        neg.cost = [-c for c in lp.cost]
        res = BranchAndBound(neg, limits=limits, backend=backend).run()
        if res.objective is not None:
            res.objective = -res.objective
        if res.bound is not None:
            res.bound = -res.bound
        return res
    return BranchAndBound(lp, lazy, heuristic, user_cuts, limits, backend, on_progress).run()
