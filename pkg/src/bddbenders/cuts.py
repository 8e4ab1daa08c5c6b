"""Benders cuts for scenario value variables.

Every cut reads ``eta_w >= constant - sum(coef * expr(x))`` where each
``expr`` is an affine indicator expression over the first stage.  Four
families are produced here:

* BDD cuts from shortest-path duals of a capacity BDD (beta on blocked
  capacitated arcs) or a cost BDD (z on one-arcs), each with a strengthened
  variant that keeps only the largest dual per (layer, link);
* integer L-shaped no-good cuts, plus a variant for recourse functions that
  never increase when more first-stage variables are switched on;
* pure Benders cuts from the duals of a scenario's LP relaxation.

Node potentials are truncated at pi_r before the arc duals are derived.
The truncated vector is still dual feasible and gives the same pi_r, but it
bounds every arc dual by the recourse value, which the strengthened cuts
need in order to dominate the no-good cuts.
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Sequence

import numpy as np

from .diagram import INT_INF, Bdd, shortest_path
from .model import IndicatorExpr, ModelError, Scenario, format_number, to_number

VIOLATION_TOL = 1e-6


class CutKind(str, Enum):
    BDD_CAP = "bdd-cap"
    BDD_CAP_STRONG = "bdd-cap-strong"
    BDD_COST = "bdd-cost"
    BDD_COST_STRONG = "bdd-cost-strong"
    LSHAPED = "lshaped"
    LSHAPED_MONOTONE = "lshaped-monotone"
    PURE_BENDERS = "pure-benders"
    CVAR = "cvar"


def _clean(v):
    if hasattr(v, "item"):
        v = v.item()
    if isinstance(v, Fraction) and v.denominator == 1:
        return int(v)
    if isinstance(v, float) and v.is_integer():
        return int(v)
    return v


@dataclass(frozen=True)
class Cut:
    scenario: int
    constant: object
    terms: tuple  # (IndicatorExpr, coefficient) pairs, subtracted from the constant
    kind: CutKind
    target: str = "eta"

    def __post_init__(self):
        merged: dict = {}
        for expr, coef in self.terms:
            coef = _clean(coef)
            if coef != 0:
                merged[expr] = merged.get(expr, 0) + coef
        terms = tuple(sorted(((e, c) for e, c in merged.items() if c != 0), key=lambda t: (t[0].terms, t[0].constant)))
        object.__setattr__(self, "terms", terms)
        object.__setattr__(self, "constant", _clean(self.constant))
        object.__setattr__(self, "kind", CutKind(self.kind))

    def rhs(self, x: Sequence):
        return self.constant - sum(c * e.value(x) for e, c in self.terms)

    def affine(self) -> tuple:
        """``(a0, {j: a_j})`` with the right-hand side equal to a0 + sum a_j x_j."""
        a0 = self.constant
        coefs: dict[int, object] = {}
        for expr, c in self.terms:
            a0 -= c * expr.constant
            for j, a in expr.terms:
                coefs[j] = coefs.get(j, 0) - c * a
        return _clean(a0), {j: _clean(v) for j, v in sorted(coefs.items()) if v != 0}

    def violation(self, x: Sequence, eta) -> float:
        return float(self.rhs(x)) - float(eta)

    def __str__(self) -> str:
        a0, coefs = self.affine()
        parts = []
        for j, a in coefs.items():
            mag = -a
            sign = "+" if mag > 0 else "-"
            body = f"x{j}" if abs(mag) == 1 else f"{format_number(abs(mag))}*x{j}"
            parts.append((sign, body))
        text = f"{self.target}[{self.scenario}] >= {format_number(a0)}"
        if parts:
            inner = parts[0][1] if parts[0][0] == "+" else "-" + parts[0][1]
            for sign, body in parts[1:]:
                inner += f" {sign} {body}"
            text += f" - ({inner})"
        return text


@dataclass
class DualSolution:
    pi: np.ndarray
    beta: dict = field(default_factory=dict)  # (tail, bit, link) -> value
    z: dict = field(default_factory=dict)  # tail of one-arc -> value
    value: object = None

    @property
    def root(self):
        return _clean(self.pi[0])


# ------------------------------------------------------------ potentials


def _truncate(bdd: Bdd, pi, sp, truncate: bool):
    """Cap potentials at pi_r, or fill the ones with no open path, keeping dual feasibility.

    min(pi, pi_r) preserves pi_u - pi_v <= c_a only when every arc cost is
    nonnegative, so truncation is skipped otherwise.  Any finite potential
    vector gives a valid cut; a node u without an open path to the terminal
    takes the larger of its capacity-free distance and pi_w - c over its
    open in-arcs (w, u), which keeps those arcs feasible and the capacity
    duals on its blocked out-arcs small.
    """
    finite = _finite(pi)
    root = pi[bdd.root]
    if truncate and _min_arc_cost(bdd) >= 0:
        return np.where(finite, np.minimum(pi, root), root).astype(pi.dtype)
    if finite.all():
        return pi
    free = _free_distances(bdd, sp.one_cost)
    out = pi.astype(object)
    lower: dict = {}
    for j in range(bdd.num_vars):
        for u in range(int(bdd.layer_start[j]), int(bdd.layer_start[j + 1])):
            if not finite[u]:
                out[u] = max(free[u], lower.get(u, free[u]))
            for head, is_open, cost in ((bdd.zero_head[u], sp.open_zero[u], 0),
                                        (bdd.one_head[u], sp.open_one[u], sp.one_cost[j])):
                if head >= 0 and is_open and not finite[head]:
                    need = out[u] - cost
                    lower[int(head)] = max(lower.get(int(head), need), need)
    return np.array(out, dtype=pi.dtype)


def _free_distances(bdd: Bdd, one_cost):
    """Shortest distance to the terminal with every capacity ignored."""
    dist = [0] * bdd.num_nodes
    for j in range(bdd.num_vars - 1, -1, -1):
        for u in range(int(bdd.layer_start[j]), int(bdd.layer_start[j + 1])):
            best = None
            zh, oh = int(bdd.zero_head[u]), int(bdd.one_head[u])
            if zh >= 0:
                best = dist[zh]
            if oh >= 0:
                v = dist[oh] + one_cost[j]
                best = v if best is None or v < best else best
            dist[u] = best
    return dist


def _min_arc_cost(bdd: Bdd):
    """Smallest arc length over all x (zero-arcs cost 0)."""
    if "min_cost" not in bdd._cache:
        one = bdd.cost2 if bdd.kind == "cost" else tuple(a + b for a, b in zip(bdd.cost1, bdd.cost2))
        bdd._cache["min_cost"] = min((0,) + tuple(one))
    return bdd._cache["min_cost"]


def _finite(pi):
    if pi.dtype == np.int64:
        # sentinel plus a few arc costs is still the sentinel
        return pi < INT_INF // 2
    return np.array([v < float("inf") for v in pi], dtype=bool)


def _cap_potentials(bdd: Bdd, sp) -> np.ndarray:
    """Potentials that avoid charging arcs deep inside the unreachable region.

    Let R be the nodes reachable from r through open arcs.  A node outside R
    all of whose in-arcs start outside R takes the minimum over all of its
    arcs, blocked or not, so its outgoing arcs need no capacity dual.  Every
    other node takes the minimum over its open arcs (with the final head
    potentials), which on R is the ordinary shortest-path value.  Open arcs
    stay dual feasible and pi_r is unchanged.
    """
    n = bdd.num_vars
    num = bdd.num_nodes
    reach = np.zeros(num, dtype=bool)
    reach[bdd.root] = True
    fed = np.zeros(num, dtype=bool)  # has an in-arc from R
    fed[bdd.root] = True
    for j in range(n):
        s, e = int(bdd.layer_start[j]), int(bdd.layer_start[j + 1])
        live = reach[s:e]
        for heads, is_open in ((bdd.zero_head, sp.open_zero), (bdd.one_head, sp.open_one)):
            h = heads[s:e]
            reach[h[live & is_open[s:e]]] = True
            fed[h[live & (h >= 0)]] = True
    pi = sp.pi.copy()
    inf = INT_INF if pi.dtype == np.int64 else float("inf")
    for j in range(n - 1, -1, -1):
        s, e = int(bdd.layer_start[j]), int(bdd.layer_start[j + 1])
        for u in range(s, e):
            if reach[u]:
                continue
            deep = not fed[u]
            best = inf
            zh, oh = bdd.zero_head[u], bdd.one_head[u]
            if zh >= 0 and (deep or sp.open_zero[u]):
                best = min(best, pi[zh])
            if oh >= 0 and (deep or sp.open_one[u]):
                best = min(best, pi[oh] + sp.one_cost[j])
            pi[u] = inf if best >= inf / 2 else best
    return pi


def cap_duals(bdd: Bdd, x: Sequence, truncate: bool = True, charge: str = "spread") -> DualSolution:
    """Shortest-path duals of a capacity BDD.

    Each blocked capacitated arc whose reduced cost pi_u - pi_v - c_a is
    positive puts that amount on one of its blocking links.  The link is
    picked per layer, arcs in node order:

    * ``charge="spread"``: prefer a link not yet charged in this layer, then
      the smallest surrogate value at x, fewest surrogate terms, lowest index;
    * ``charge="lowest"``: the lowest blocking index.
    """
    if bdd.kind != "cap":
        raise ModelError("cap_duals needs a capacity BDD")
    if charge not in ("spread", "lowest"):
        raise ModelError(f"unknown charge rule {charge!r}")
    sp = shortest_path(bdd, x)
    pi = _cap_potentials(bdd, sp)
    pi = _truncate(bdd, pi, sp, truncate)
    values = bdd.link_values(x)
    beta = {}
    charged: dict[int, set] = {}
    for u, v, bit, j, caps in bdd.arcs():
        if not caps:
            continue
        blocking = [i for i in caps if values[i] < 1]
        if not blocking:
            continue
        slack = pi[u] - pi[v] - (sp.one_cost[j] if bit else 0)
        if slack <= 0:
            continue
        if charge == "lowest":
            i = min(blocking)
        else:
            used = charged.setdefault(j, set())
            exprs = bdd.link_exprs
            i = min(blocking, key=lambda i: (exprs[i] in used, values[i], len(exprs[i].terms), i))
            used.add(exprs[i])
        beta[(u, bit, i)] = _clean(slack)
    return DualSolution(pi, beta=beta, value=sp.value)


def cost_duals(bdd: Bdd, x: Sequence, truncate: bool = True) -> DualSolution:
    """Shortest-path duals of a cost BDD; z_a = max(0, pi_u - pi_v - d2) on linked one-arcs."""
    if bdd.kind != "cost":
        raise ModelError("cost_duals needs a cost BDD")
    sp = shortest_path(bdd, x)
    pi = _truncate(bdd, sp.pi, sp, truncate)
    tails = bdd.linked_one_tails()
    layer = bdd.layer_of()[tails]
    d2 = bdd.cost2_array()[layer]
    vals = pi[tails] - pi[bdd.one_head[tails]] - d2
    keep = vals > 0
    z = {int(u): _clean(v) for u, v in zip(tails[keep], vals[keep])}
    return DualSolution(pi, z=z, value=sp.value)


def bdd_duals(bdd: Bdd, x: Sequence, truncate: bool = True) -> DualSolution:
    return cap_duals(bdd, x, truncate) if bdd.kind == "cap" else cost_duals(bdd, x, truncate)


# ------------------------------------------------------------------ cuts


def cap_cut(duals: DualSolution, bdd: Bdd, scenario: int) -> Cut:
    terms = [(bdd.link_exprs[i], b) for (_, _, i), b in duals.beta.items()]
    return Cut(scenario, duals.root, tuple(terms), CutKind.BDD_CAP)


def cap_cut_strong(duals: DualSolution, bdd: Bdd, scenario: int) -> Cut:
    layer = bdd.layer_of()
    best: dict = {}
    for (u, _, i), b in duals.beta.items():
        # links with equal expressions are one surrogate
        key = (int(layer[u]), bdd.link_exprs[i])
        if b > best.get(key, 0):
            best[key] = b
    terms = [(e, b) for (_, e), b in best.items()]
    return Cut(scenario, duals.root, tuple(terms), CutKind.BDD_CAP_STRONG)


def cost_cut(duals: DualSolution, bdd: Bdd, scenario: int) -> Cut:
    layer = bdd.layer_of()
    terms = [(bdd.cost_links[int(layer[u])], zv) for u, zv in duals.z.items()]
    return Cut(scenario, duals.root, tuple(terms), CutKind.BDD_COST)


def cost_cut_strong(duals: DualSolution, bdd: Bdd, scenario: int) -> Cut:
    layer = bdd.layer_of()
    best: dict = {}
    for u, zv in duals.z.items():
        j = int(layer[u])
        if zv > best.get(j, 0):
            best[j] = zv
    terms = [(bdd.cost_links[j], zv) for j, zv in best.items()]
    return Cut(scenario, duals.root, tuple(terms), CutKind.BDD_COST_STRONG)


def bdd_cut(bdd: Bdd, x: Sequence, scenario: int, strong: bool = True, truncate: bool = True,
            charge: str = "spread") -> Cut:
    """Convenience: duals plus (strengthened) cut in one call."""
    if bdd.kind == "cap":
        d = cap_duals(bdd, x, truncate, charge)
        return cap_cut_strong(d, bdd, scenario) if strong else cap_cut(d, bdd, scenario)
    d = cost_duals(bdd, x, truncate)
    return cost_cut_strong(d, bdd, scenario) if strong else cost_cut(d, bdd, scenario)


def lshaped_cut(tau, exprs: Sequence[IndicatorExpr], truths: Sequence[int], scenario: int, lower=0) -> Cut:
    """No-good cut around the point where the 0/1 expressions take ``truths``.

    eta >= tau - (tau - L) * (sum over true of (1 - mu) + sum over false of mu)
    """
    if len(exprs) != len(truths):
        raise ModelError("one truth value per expression")
    scale = _clean(to_number(tau) - to_number(lower))
    terms = []
    if scale != 0:
        for expr, t in zip(exprs, truths):
            terms.append((expr.one_minus() if t else expr, scale))
    return Cut(scenario, tau, tuple(terms), CutKind.LSHAPED)


def lshaped_cut_monotone(tau, xhat: Sequence[int], scenario: int, lower=0) -> Cut:
    """No-good cut for recourse values that never increase as x grows.

    eta >= tau - (tau - L) * sum over x̂_v = 0 of x_v
    """
    scale = _clean(to_number(tau) - to_number(lower))
    terms = [(IndicatorExpr.sum_of([v]), scale) for v, b in enumerate(xhat) if not b] if scale else []
    return Cut(scenario, tau, tuple(terms), CutKind.LSHAPED_MONOTONE)


# ----------------------------------------------------------- pure Benders


def pure_benders_duals(scenario: Scenario, x: Sequence, method: str = "simplex"):
    """Row duals of the relaxation at x and the duals of active y <= 1 bounds."""
    from .solver import Status, solve_lp
    from .solver.lp import LinearProgram

    rel = scenario.relaxation
    if rel is None:
        raise ModelError(f"scenario {scenario.id} has no LP relaxation")
    lp = LinearProgram()
    for c in rel.costs:
        lp.add_column(c, 0, float("inf"))
    for row in rel.rows:
        lp.add_row(dict(row.terms), row.sense, row.rhs_at(x))
    if rel.y_upper:
        for k in range(len(rel.costs)):
            lp.add_row({k: 1}, "<=", 1)
    res = solve_lp(lp, method)
    if res.status is not Status.OPTIMAL:
        raise ModelError(f"scenario {scenario.id}: LP relaxation is {res.status.value}")
    m = len(rel.rows)
    return res.objective, list(res.duals[:m]), list(res.duals[m:])


def _rationalize(v, limit: int = 10_000):
    """Snap a float dual to a nearby small-denominator rational."""
    f = Fraction(float(v)).limit_denominator(limit)
    return f if abs(float(f) - float(v)) < 1e-9 else float(v)


def pure_benders_cut(row_duals, upper_duals, scenario: Scenario, exact: bool = True) -> Cut:
    """eta >= sum_r delta_r * rhs_r(x) + sum of upper-bound duals."""
    rel = scenario.relaxation
    conv = _rationalize if exact else float
    const = sum((conv(d) for d in upper_duals), 0)
    terms = []
    for row, d in zip(rel.rows, row_duals):
        d = conv(d)
        if d == 0:
            continue
        const += d * row.rhs
        for expr, w in row.shift:
            # d * w * expr(x) enters with a plus sign
            terms.append((expr, -d * w))
    return Cut(scenario.id, const, tuple(terms), CutKind.PURE_BENDERS)


def pure_benders(scenario: Scenario, x: Sequence, method: str = "simplex") -> tuple[Cut, float]:
    obj, rows, uppers = pure_benders_duals(scenario, x, method)
    return pure_benders_cut(rows, uppers, scenario), obj


# -------------------------------------------------------------- text log
#
#   cut <kind> <target> <scenario> <constant> | <coef> [<expr>] ...


def dumps_cuts(cuts: Sequence[Cut]) -> str:
    out = io.StringIO()
    for c in cuts:
        terms = " ".join(f"{format_number(coef)} [{expr}]" for expr, coef in c.terms)
        out.write(f"cut {c.kind.value} {c.target} {c.scenario} {format_number(c.constant)} | {terms}".rstrip() + "\n")
    return out.getvalue()


_TERM = re.compile(r"(\S+)\s*\[([^\]]*)\]")


def loads_cuts(text: str) -> list[Cut]:
    cuts = []
    for ln in text.splitlines():
        ln = ln.strip()
        if not ln:
            continue
        head, _, rest = ln.partition("|")
        parts = head.split()
        if len(parts) != 5 or parts[0] != "cut":
            raise ModelError(f"malformed cut line {ln!r}")
        terms = tuple((IndicatorExpr.parse(e), to_number(c)) for c, e in _TERM.findall(rest))
        cuts.append(Cut(int(parts[3]), to_number(parts[4]), terms, CutKind(parts[1]), parts[2]))
    return cuts
