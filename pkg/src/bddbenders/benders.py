"""Benders decomposition drivers.

The master problem holds the first-stage binaries x, one value variable
eta_w per scenario and the accumulated cuts:

    min  c x + sum_w p_w eta_w      (risk neutral)
    min  (1 + lam) c x + sum_w p_w eta_w + lam sum_w p_w theta_w   (CVaR)

Branch-and-cut is the default driver.  At every LP-integral node each
scenario is evaluated exactly and violated optimality cuts are added as
lazy rows; the node is then re-solved.  Optionally the root LP is tightened
with BDD cuts at fractional points, and a rounding heuristic proposes
incumbents at fractional nodes.  A pure cutting-plane loop (re-solving the
master MILP from scratch after every round) is available for checks.

CVaR rows follow the usual epigraph form.  Each separation round adds a
free column zeta and columns nu_w >= 0 with

    theta_w >= zeta + nu_w / (1 - alpha),   nu_w >= eta_w - zeta.

A round is triggered, only once no recourse cut is violated, when
sum_w p_w theta_w falls short of the sorted-sample CVaR of the current
recourse values.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .cuts import (
    VIOLATION_TOL,
    Cut,
    CutKind,
    bdd_cut,
    lshaped_cut,
    lshaped_cut_monotone,
    pure_benders,
)
from .diagram import DEFAULT_NODE_BUDGET, Bdd, ResourceError, build_cap_bdd, build_cost_bdd, shortest_path
from .model import IndicatorExpr, Mode, ModelError, StochasticProgram
from .solver import Limits, LinearProgram, Status, solve_bnb
from .solver.bnb import BranchAndBound
from .solver.lp import INF

METHODS = ("bdd-cap", "bdd-cost", "lshaped")


class ParameterError(ValueError):
    pass


@dataclass
class Options:
    pure_benders: bool = False
    pb_fractional: bool = False  # PB cuts at fractional nodes as well
    strengthen: bool = True
    truncate: bool = True
    charge: str = "spread"
    root_cuts: bool = True  # BDD cuts at fractional root LP points
    root_rounds: int = 20
    heuristic: bool = True
    monotone: bool = False  # recourse never increases with x: stronger no-good cuts
    pure_cutting_plane: bool = False
    time_limit: float | None = None
    node_limit: int | None = None
    backend: str = "highs"
    pb_backend: str = "simplex"
    node_budget: int = DEFAULT_NODE_BUDGET
    memory_budget: int | None = None  # bytes, rough estimate over all BDDs
    tol: float = VIOLATION_TOL


@dataclass
class CvarConfig:
    lam: float
    alpha: float

    def __post_init__(self):
        if not self.lam >= 0:
            raise ParameterError("lambda must be nonnegative")
        if not 0 < self.alpha < 1:
            raise ParameterError("alpha must lie in (0, 1)")


@dataclass
class LogRow:
    iteration: int
    lb: float
    ub: float
    cuts: dict
    callback_time: float
    subproblem_time: float


@dataclass
class Solution:
    status: Status
    x: tuple | None
    objective: object  # exact value of the incumbent (int/Fraction) or None
    bound: float | None
    recourse: tuple | None
    cvar: object = None
    stats: dict = field(default_factory=dict)
    log: list = field(default_factory=list)

    @property
    def gap(self) -> float:
        if self.objective is None or self.bound is None:
            return math.inf
        ub = float(self.objective)
        return max(0.0, (ub - self.bound) / max(abs(ub), 1.0))


# --------------------------------------------------------------------- CVaR


def _exact(v):
    if isinstance(v, float):
        return Fraction(str(v))
    return Fraction(v) if not isinstance(v, Fraction) else v


def value_at_risk(values: Sequence, probs: Sequence, alpha) -> object:
    """Smallest v with P(Z <= v) >= alpha (the ceil(alpha*N)-th smallest for equal weights)."""
    a = _exact(alpha)
    if not 0 < a < 1:
        raise ParameterError("alpha must lie in (0, 1)")
    cum = Fraction(0)
    order = sorted(range(len(values)), key=lambda i: values[i])
    for i in order:
        cum += _exact(probs[i])
        if cum >= a:
            return values[i]
    return values[order[-1]]


def cvar_sorted(values: Sequence, probs: Sequence, alpha) -> object:
    """CVaR_alpha(Z) = VaR + E[(Z - VaR)+] / (1 - alpha), computed exactly."""
    if abs(sum(float(p) for p in probs) - 1) > 1e-9:
        raise ParameterError("probabilities must sum to 1")
    a = _exact(alpha)
    var = value_at_risk(values, probs, alpha)
    tail = sum((_exact(p) * (_exact(v) - _exact(var)) for v, p in zip(values, probs) if v > var), Fraction(0))
    out = _exact(var) + tail / (1 - a)
    return int(out) if out.denominator == 1 else out


# ------------------------------------------------------------------ oracles


def eta_lower_bound(scenario, mode: Mode):
    """Valid lower bound on the recourse value: every negative arc cost taken."""
    if Mode(mode) is Mode.COST:
        return sum(min(0, d2) for d2 in scenario.cost2)
    return sum(min(0, a + b) for a, b in zip(scenario.cost1, scenario.cost2))


def bdd_bytes(bdd: Bdd) -> int:
    """Rough footprint: node arrays plus per-arc heads and capacity tuples."""
    return 64 * bdd.num_nodes + 48 * bdd.num_arcs + 8 * bdd.num_capacitated_arcs


class BddOracle:
    """Exact recourse values and BDD cuts for one scenario."""

    def __init__(self, scenario, bdd: Bdd, opts: Options):
        self.scenario = scenario
        self.bdd = bdd
        self.opts = opts
        self.cache: dict = {}

    def value(self, x):
        key = tuple(int(v) for v in x)
        if key not in self.cache:
            self.cache[key] = shortest_path(self.bdd, key).value
        return self.cache[key]

    def cut(self, x, binary: bool) -> tuple[Cut | None, object]:
        o = self.opts
        c = bdd_cut(self.bdd, x, self.scenario.id, o.strengthen, o.truncate, o.charge)
        if binary:
            key = tuple(int(v) for v in x)
            self.cache.setdefault(key, c.constant)
        return c, c.constant


class IpOracle:
    """Exact recourse values by solving the scenario IP; no-good cuts."""

    def __init__(self, sp: StochasticProgram, scenario, opts: Options, lower):
        self.sp = sp
        self.scenario = scenario
        self.opts = opts
        self.lower = lower
        self.cache: dict = {}

    def value(self, x):
        key = tuple(int(v) for v in x)
        if key not in self.cache:
            self.cache[key] = recourse_ip(self.sp, self.scenario, key, self.opts.backend)
        return self.cache[key]

    def cut(self, x, binary: bool):
        if not binary:
            return None, None
        key = tuple(int(v) for v in x)
        tau = self.value(key)
        if self.opts.monotone:
            return lshaped_cut_monotone(tau, key, self.scenario.id, self.lower), tau
        exprs = [IndicatorExpr.sum_of([j]) for j in range(len(key))]
        c = lshaped_cut(tau, exprs, key, self.scenario.id, self.lower)
        return c, tau


def recourse_ip(sp: StochasticProgram, s, x, backend: str = "highs"):
    """Q(x, w) from the scenario's integer program (exact rational value)."""
    lp = LinearProgram()
    if sp.mode is Mode.COST:
        mu = [e.value(x) if e is not None else 0 for e in s.cost_links_by_var()]
        costs = [s.cost1[k] * (1 - mu[k]) + s.cost2[k] for k in range(s.num_vars)]
    else:
        costs = [a + b for a, b in zip(s.cost1, s.cost2)]
    for c in costs:
        lp.add_column(float(c), 0, 1, binary=True)
    rows = list(s.rows)
    if sp.mode is Mode.CAPACITY:
        rows += [s.linked_rows[link.target] for link in s.links if link.expr.value(x) < 1]
    for row in rows:
        lp.add_row(dict(row.terms), row.sense, float(row.rhs))
    if s.num_vars == 0:
        if all(r.satisfied(()) for r in rows):
            return 0
        raise ModelError(f"scenario {s.id}: no feasible recourse")
    res = solve_bnb(lp, backend=backend)
    if res.status is not Status.OPTIMAL:
        raise ModelError(f"scenario {s.id}: recourse IP is {res.status.value}")
    y = [int(round(v)) for v in res.x[: s.num_vars]]
    return sum(c * b for c, b in zip(costs, y))


# ------------------------------------------------------------------ driver


class Decomposition:
    """Shared state of one decomposition run (master, oracles, statistics)."""

    def __init__(self, sp: StochasticProgram, method: str, opts: Options, cvar: CvarConfig | None):
        if method not in METHODS:
            raise ParameterError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        if method == "bdd-cap" and sp.mode is not Mode.CAPACITY:
            raise ParameterError("bdd-cap needs a capacity-linked program")
        if method == "bdd-cost" and sp.mode is not Mode.COST:
            raise ParameterError("bdd-cost needs a cost-linked program")
        self.sp = sp
        self.method = method
        self.opts = opts
        self.cvar = cvar if cvar is not None and cvar.lam > 0 else None
        self.cvar_cfg = cvar
        self.n = sp.num_first_stage
        self.probs = [s.probability for s in sp.scenarios]
        self.pfloat = np.array([float(p) for p in self.probs])
        self.lower = [eta_lower_bound(s, sp.mode) for s in sp.scenarios]
        self.stats = {
            "build_time": 0.0, "bdd_nodes": [], "bdd_arcs": [], "lazy_calls": 0,
            "heuristic_calls": 0, "user_cut_calls": 0, "cvar_blocks": 0,
            "subproblem_time": 0.0, "callback_time": 0.0,
            "cuts": {k.value: 0 for k in CutKind},
        }
        self.log: list[LogRow] = []
        self._lb = -INF
        self._ub = INF
        self.best = None  # (objective, x, recourse, cvar)
        self._build_oracles()

    # ---------------------------------------------------------- setup
    def _build_oracles(self):
        start = time.perf_counter()
        self.oracles = []
        used = 0
        for s, lo in zip(self.sp.scenarios, self.lower):
            if self.method == "lshaped":
                self.oracles.append(IpOracle(self.sp, s, self.opts, lo))
                continue
            build = build_cap_bdd if self.method == "bdd-cap" else build_cost_bdd
            bdd = build(s, node_budget=self.opts.node_budget)
            self.stats["bdd_nodes"].append(bdd.num_nodes)
            self.stats["bdd_arcs"].append(bdd.num_arcs)
            used += bdd_bytes(bdd)
            if self.opts.memory_budget is not None and used > self.opts.memory_budget:
                raise ResourceError(f"BDDs need about {used} bytes, over the memory budget "
                                    f"of {self.opts.memory_budget}")
            self.oracles.append(BddOracle(s, bdd, self.opts))
        self.stats["build_time"] = time.perf_counter() - start

    def master(self) -> LinearProgram:
        lam = self.cvar.lam if self.cvar else 0
        lp = LinearProgram()
        for j in range(self.n):
            lp.add_column(float((1 + lam) * self.sp.first_stage_cost[j]), 0, 1, binary=True, name=f"x{j}")
        self.eta = [lp.add_column(float(p), float(lo), INF, name=f"eta{s.id}")
                    for p, lo, s in zip(self.probs, self.lower, self.sp.scenarios)]
        self.theta = []
        if self.cvar:
            self.theta = [lp.add_column(float(lam * p), float(lo), INF, name=f"theta{s.id}")
                          for p, lo, s in zip(self.probs, self.lower, self.sp.scenarios)]
        for row in self.sp.first_stage_rows:
            lp.add_row({i: float(c) for i, c in row.terms}, row.sense, float(row.rhs))
        return lp

    # ------------------------------------------------------- evaluation
    def evaluate(self, x) -> tuple:
        """Exact objective, recourse vector and CVaR at a binary x."""
        t0 = time.perf_counter()
        q = [o.value(x) for o in self.oracles]
        self.stats["subproblem_time"] += time.perf_counter() - t0
        first = sum(c * b for c, b in zip(self.sp.first_stage_cost, x))
        expect = sum((_exact(p) * _exact(v) for p, v in zip(self.probs, q)), Fraction(0))
        risk = None
        obj = first + expect
        if self.cvar_cfg is not None and self.cvar_cfg.lam > 0:
            lam = _exact(self.cvar_cfg.lam)
            risk = cvar_sorted(q, self.probs, self.cvar_cfg.alpha)
            obj = (1 + lam) * first + expect + lam * _exact(risk)
        obj = Fraction(obj)
        obj = int(obj) if obj.denominator == 1 else obj
        return obj, tuple(q), risk

    def record(self, x, obj, q, risk) -> bool:
        if self.best is None or obj < self.best[0]:
            self.best = (obj, tuple(int(v) for v in x), q, risk)
            self._ub = float(obj)
            return True
        return False

    def cut_rows(self, x, eta, binary: bool, fractional_pb: bool) -> list:
        """Violated cuts at (x, eta) as ``(coeffs, sense, rhs)`` rows."""
        rows = []
        t0 = time.perf_counter()
        for k, (o, s) in enumerate(zip(self.oracles, self.sp.scenarios)):
            cuts = []
            c, _ = o.cut(x, binary)
            if c is not None:
                cuts.append(c)
            if self.opts.pure_benders and (binary or fractional_pb):
                pb, _ = pure_benders(s, x, self.opts.pb_backend)
                cuts.append(pb)
            for c in cuts:
                if float(c.rhs(x)) - eta[k] > self.opts.tol:
                    rows.append(self._row(k, c))
                    self.stats["cuts"][c.kind.value] += 1
        self.stats["subproblem_time"] += time.perf_counter() - t0
        return rows

    def _row(self, k, cut: Cut):
        a0, coefs = cut.affine()
        coeffs = {self.eta[k]: 1.0}
        for j, a in coefs.items():
            coeffs[j] = coeffs.get(j, 0.0) - float(a)
        return coeffs, ">=", float(a0)

    def cvar_block(self, add_column, q, theta_hat) -> list:
        """New (zeta, nu) block if the theta columns underestimate the CVaR."""
        risk = cvar_sorted(q, self.probs, self.cvar.alpha)
        if float(np.dot(self.pfloat, theta_hat)) >= float(risk) - self.opts.tol:
            return []
        zeta = add_column(0.0, -INF, INF)
        rows = []
        inv = 1.0 / (1.0 - float(self.cvar.alpha))
        for k in range(len(self.oracles)):
            nu = add_column(0.0, 0.0, INF)
            rows.append(({self.theta[k]: 1.0, zeta: -1.0, nu: -inv}, ">=", 0.0))
            rows.append(({nu: 1.0, self.eta[k]: -1.0, zeta: 1.0}, ">=", 0.0))
        self.stats["cvar_blocks"] += 1
        self.stats["cuts"][CutKind.CVAR.value] += len(rows)
        return rows

    def progress(self, lb, ub, cuts_before, cb_time):
        self.stats["callback_time"] += cb_time
        lb = max(self._lb, lb) if lb is not None else self._lb
        self._lb = lb
        ub = min(self._ub, ub) if ub is not None else self._ub
        self._ub = ub
        delta = {k: v - cuts_before.get(k, 0) for k, v in self.stats["cuts"].items() if v - cuts_before.get(k, 0)}
        self.log.append(LogRow(len(self.log) + 1, lb, ub, delta, cb_time, self.stats["subproblem_time"]))

    def split(self, xv):
        x = np.asarray(xv, dtype=float)
        eta = x[self.eta] if self.eta else np.zeros(0)
        theta = x[self.theta] if self.theta else np.zeros(0)
        return x[: self.n], eta, theta


def _is_binary(x, tol=1e-6) -> bool:
    return bool(np.all(np.abs(x - np.round(x)) <= tol))


def _solve_branch_and_cut(dec: Decomposition) -> Solution:
    opts = dec.opts
    lp = dec.master()

    def lazy(ctx):
        t0 = time.perf_counter()
        before = dict(dec.stats["cuts"])
        dec.stats["lazy_calls"] += 1
        x, eta, theta = dec.split(ctx.x)
        xb = np.round(x).astype(int)
        rows = dec.cut_rows(xb, eta, True, False)
        obj, q, risk = dec.evaluate(xb)
        if not rows and dec.cvar:
            rows = dec.cvar_block(ctx.add_column, q, theta)
        for r in rows:
            ctx.add_row(*r)
        dec.record(xb, obj, q, risk)
        ctx.propose(float(obj), ctx.x, None)
        dec.progress(None, float(obj), before, time.perf_counter() - t0)

    def user_cuts(ctx):
        if not (opts.root_cuts and ctx.is_root) and not opts.pb_fractional:
            return
        t0 = time.perf_counter()
        before = dict(dec.stats["cuts"])
        dec.stats["user_cut_calls"] += 1
        x, eta, _ = dec.split(ctx.x)
        rows = []
        if ctx.is_root and opts.root_cuts and dec.method != "lshaped":
            rows = dec.cut_rows(x, eta, False, opts.pb_fractional)
        elif opts.pb_fractional and opts.pure_benders:
            for k, s in enumerate(dec.sp.scenarios):
                pb, _ = pure_benders(s, x, opts.pb_backend)
                if float(pb.rhs(x)) - eta[k] > opts.tol:
                    rows.append(dec._row(k, pb))
                    dec.stats["cuts"][pb.kind.value] += 1
        for r in rows:
            ctx.add_row(*r)
        dec.progress(ctx.objective if ctx.is_root else None, None, before, time.perf_counter() - t0)

    def heuristic(ctx):
        dec.stats["heuristic_calls"] += 1
        x, _, _ = dec.split(ctx.x)
        xb = (x >= 0.5).astype(int)
        if not dec.sp.first_stage_feasible(xb):
            return
        obj, q, risk = dec.evaluate(xb)
        if dec.record(xb, obj, q, risk):
            ctx.propose(float(obj), None, None)

    limits = Limits(time=opts.time_limit, nodes=opts.node_limit, gap_abs=1e-6, cut_rounds=opts.root_rounds)
    bnb = BranchAndBound(lp, lazy=lazy, heuristic=heuristic if opts.heuristic else None,
                         user_cuts=user_cuts, limits=limits, backend=opts.backend,
                         on_progress=lambda lb, ub: dec.progress(lb, ub, dict(dec.stats["cuts"]), 0.0))
    res = bnb.run()
    dec.stats["nodes"] = res.nodes
    dec.stats.update(res.stats)
    return _finish(dec, res.status, res.bound)


def _solve_cutting_plane(dec: Decomposition) -> Solution:
    opts = dec.opts
    lp = dec.master()
    start = time.perf_counter()
    it = 0
    status = Status.OPTIMAL
    bound = None
    while True:
        it += 1
        remaining = None if opts.time_limit is None else opts.time_limit - (time.perf_counter() - start)
        if remaining is not None and remaining <= 0:
            status = Status.LIMIT
            break
        res = solve_bnb(lp, limits=Limits(time=remaining, gap_abs=1e-9), backend=opts.backend)
        if res.status is Status.INFEASIBLE:
            status = Status.INFEASIBLE
            break
        if res.status is not Status.OPTIMAL:
            status = res.status
            break
        bound = res.objective
        before = dict(dec.stats["cuts"])
        x, eta, theta = dec.split(res.x)
        xb = np.round(x).astype(int)
        rows = dec.cut_rows(xb, eta, True, False)
        obj, q, risk = dec.evaluate(xb)
        dec.record(xb, obj, q, risk)
        if not rows and dec.cvar:
            rows = dec.cvar_block(lambda c, lb, ub: lp.add_column(c, lb, ub), q, theta)
        dec.progress(bound, float(obj), before, 0.0)
        if not rows:
            break
        for coeffs, sense, rhs in rows:
            lp.add_row(coeffs, sense, rhs)
    dec.stats["iterations"] = it
    return _finish(dec, status, bound)


def _finish(dec: Decomposition, status: Status, bound) -> Solution:
    if dec.best is None:
        st = Status.INFEASIBLE if status is Status.OPTIMAL else status
        return Solution(st, None, None, bound, None, stats=dec.stats, log=dec.log)
    obj, x, q, risk = dec.best
    if status is Status.OPTIMAL:
        bound = float(obj)
    return Solution(status, x, obj, bound, q, risk, stats=dec.stats, log=dec.log)


def solve_risk_neutral(sp: StochasticProgram, method: str, options: Options | None = None) -> Solution:
    """Minimize c x + sum_w p_w Q(x, w) by Benders decomposition."""
    dec = Decomposition(sp, method, options or Options(), None)
    if dec.opts.pure_cutting_plane:
        return _solve_cutting_plane(dec)
    return _solve_branch_and_cut(dec)


def solve_cvar(sp: StochasticProgram, method: str, cfg: CvarConfig, options: Options | None = None) -> Solution:
    """Minimize (1 + lam) c x + E[Q] + lam CVaR_alpha(Q) by decomposition."""
    dec = Decomposition(sp, method, options or Options(), cfg)
    if dec.opts.pure_cutting_plane:
        return _solve_cutting_plane(dec)
    return _solve_branch_and_cut(dec)


# ------------------------------------------------------------ brute force


def enumerate_first_stage(sp: StochasticProgram, value, limit: int = 16):
    """min over binary x of ``value(x)``; exponential, for checks only."""
    import itertools

    if sp.num_first_stage > limit:
        raise ParameterError("first-stage enumeration is limited to small programs")
    best = None
    for x in itertools.product((0, 1), repeat=sp.num_first_stage):
        if not sp.first_stage_feasible(x):
            continue
        v = value(x)
        if best is None or v < best[0]:
            best = (v, x)
    return best


# -------------------------------------------------------------------- log


LOG_FIELDS = ["iteration", "lb", "ub", "callback_time", "subproblem_time"] + [k.value for k in CutKind]


def write_log_csv(solution: Solution, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(LOG_FIELDS)
        for row in solution.log:
            w.writerow([row.iteration, row.lb, row.ub, f"{row.callback_time:.6f}", f"{row.subproblem_time:.6f}"]
                       + [row.cuts.get(k.value, 0) for k in CutKind])
