"""Exact BDDs for scenario recourse problems.

Two parameterizations are compiled from a scenario's transition function:

* capacity BDD: built with every link enforced.  When a move violates
  linked rows only, the arc goes to a bypass node whose state treats those
  rows as relaxed, and the arc carries the violated links as capacities.
  An arc is open at x when none of its capacity surrogates evaluates to 0.
  One-arcs cost d1 + d2, zero-arcs cost 0.
* cost BDD: the plain exact BDD of the feasible set; the one-arc of
  variable j costs d1_j * (1 - mu_j(x)) + d2_j.

Variables are fixed in natural order, one layer per variable.  Nodes are
numbered layer by layer; node 0 is the root and the last node the terminal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .model import IndicatorExpr, Mode, Scenario, Transition, format_number

DEFAULT_NODE_BUDGET = 5_000_000
DEFAULT_PATH_LIMIT = 1_000_000
INT_INF = 1 << 62


class DiagramError(RuntimeError):
    pass


class ResourceError(DiagramError):
    """Node or path budget exceeded."""


class RecourseInfeasibleError(DiagramError):
    """No r-t path is open: the recourse problem has no solution."""


@dataclass
class Bdd:
    kind: str  # "cap" or "cost"
    num_vars: int
    layer_start: np.ndarray  # node layer j holds nodes [layer_start[j], layer_start[j+1])
    zero_head: np.ndarray  # -1 when the node has no zero-arc
    one_head: np.ndarray
    zero_caps: list  # per node: tuple of link indices on its zero-arc
    one_caps: list
    states: list  # printable state per node
    cost1: tuple
    cost2: tuple
    cost_links: list  # cost BDD: discount indicator per variable (or None)
    link_exprs: list  # cap BDD: capacity surrogate per link index
    var_names: tuple | None = None
    _cache: dict = field(default_factory=dict, repr=False)  # lazily built lookup arrays

    # ------------------------------------------------------------ structure
    @property
    def num_nodes(self) -> int:
        return len(self.zero_head)

    @property
    def root(self) -> int:
        return 0

    @property
    def terminal(self) -> int:
        return self.num_nodes - 1

    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(int(v) for v in np.diff(self.layer_start))

    def layer_nodes(self, j: int) -> range:
        return range(int(self.layer_start[j]), int(self.layer_start[j + 1]))

    @property
    def num_one_arcs(self) -> int:
        return int((self.one_head >= 0).sum())

    @property
    def num_zero_arcs(self) -> int:
        return int((self.zero_head >= 0).sum())

    @property
    def num_arcs(self) -> int:
        return self.num_one_arcs + self.num_zero_arcs

    @property
    def num_capacitated_arcs(self) -> int:
        return sum(1 for c in self.zero_caps if c) + sum(1 for c in self.one_caps if c)

    def layer_of(self) -> np.ndarray:
        if "layer" not in self._cache:
            self._cache["layer"] = np.repeat(np.arange(self.num_vars + 1), np.diff(self.layer_start))
        return self._cache["layer"]

    def linked_one_tails(self) -> np.ndarray:
        """Tails of one-arcs whose variable carries a cost link."""
        if "linked" not in self._cache:
            linked = np.array([e is not None for e in self.cost_links] + [False], dtype=bool)
            mask = (self.one_head >= 0) & linked[self.layer_of()]
            self._cache["linked"] = np.nonzero(mask)[0]
        return self._cache["linked"]

    def cost2_array(self) -> np.ndarray:
        if "cost2" not in self._cache:
            vals = list(self.cost2)
            dtype = np.int64 if all(isinstance(v, int) for v in vals) else object
            self._cache["cost2"] = np.array(vals + [0], dtype=dtype)
        return self._cache["cost2"]

    def arcs(self):
        """Yield ``(tail, head, bit, var, caps)`` for every arc, layer by layer."""
        for j in range(self.num_vars):
            for u in self.layer_nodes(j):
                if self.zero_head[u] >= 0:
                    yield u, int(self.zero_head[u]), 0, j, self.zero_caps[u]
                if self.one_head[u] >= 0:
                    yield u, int(self.one_head[u]), 1, j, self.one_caps[u]

    def var_name(self, j: int) -> str:
        return self.var_names[j] if self.var_names else str(j)

    # --------------------------------------------------------- evaluation
    def _cap_entries(self):
        if 0 not in self._cache:
            for bit, caps in ((0, self.zero_caps), (1, self.one_caps)):
                nodes, links = [], []
                for u, cs in enumerate(caps):
                    for i in cs:
                        nodes.append(u)
                        links.append(i)
                self._cache[bit] = (np.array(nodes, dtype=np.int64), np.array(links, dtype=np.int64))
        return self._cache

    def link_values(self, x: Sequence) -> list:
        return [e.value(x) for e in self.link_exprs]

    def open_arcs(self, x: Sequence):
        """Boolean masks of open zero-arcs and one-arcs at x."""
        open_zero = self.zero_head >= 0
        open_one = self.one_head >= 0
        if self.kind == "cap" and self.link_exprs:
            enforced = np.array([v < 1 for v in self.link_values(x)], dtype=bool)
            entries = self._cap_entries()
            for bit, mask in ((0, open_zero), (1, open_one)):
                nodes, links = entries[bit]
                if len(nodes):
                    mask[nodes[enforced[links]]] = False
        return open_zero, open_one

    def one_costs(self, x: Sequence) -> list:
        """Cost of the one-arcs of each layer at x."""
        if self.kind == "cost":
            out = []
            for j in range(self.num_vars):
                expr = self.cost_links[j]
                mu = expr.value(x) if expr is not None else 0
                out.append(self.cost1[j] * (1 - mu) + self.cost2[j])
            return out
        return [a + b for a, b in zip(self.cost1, self.cost2)]


@dataclass(frozen=True)
class PathAssignment:
    bits: tuple
    cost: object


@dataclass
class ShortestPath:
    value: object
    pi: np.ndarray
    choice: np.ndarray  # 0/1 arc chosen at each node, -1 where no open arc
    path: PathAssignment
    one_cost: list
    open_zero: np.ndarray
    open_one: np.ndarray


# ----------------------------------------------------------------- compile


def build_cap_bdd(scenario: Scenario, transition: Transition | None = None,
                  node_budget: int = DEFAULT_NODE_BUDGET, reduced: bool = True) -> Bdd:
    """Capacity BDD of a capacity-linked scenario."""
    trans = transition or scenario.transition_for(Mode.CAPACITY)
    exprs = [link.expr for link in scenario.links]
    bdd = _compile(scenario, trans, "cap", exprs, [None] * scenario.num_vars, node_budget)
    return reduce(bdd) if reduced else bdd


def build_cost_bdd(scenario: Scenario, transition: Transition | None = None,
                   node_budget: int = DEFAULT_NODE_BUDGET, reduced: bool = True) -> Bdd:
    """Cost BDD of a cost-linked scenario."""
    trans = transition or scenario.transition_for(Mode.COST)
    links = scenario.cost_links_by_var()
    for expr in links:
        if expr is not None:
            lo, hi = expr.bounds()
            if lo < 0 or hi > 1:
                raise DiagramError(f"cost link {expr} is not 0/1-valued")
    bdd = _compile(scenario, trans, "cost", [], links, node_budget)
    return reduce(bdd) if reduced else bdd


def build_bdd(scenario: Scenario, mode: Mode, **kw) -> Bdd:
    return build_cap_bdd(scenario, **kw) if Mode(mode) is Mode.CAPACITY else build_cost_bdd(scenario, **kw)


def _compile(scenario, trans, kind, link_exprs, cost_links, node_budget) -> Bdd:
    n = scenario.num_vars
    layers_states = [[trans.initial_state]]
    arcs_per_layer = []  # per layer: list of ((zhead, zcaps), (ohead, ocaps))
    total = 1
    if n == 0 and not trans.is_accepting(trans.initial_state):
        raise RecourseInfeasibleError(f"scenario {scenario.id} has no feasible recourse")
    for k in range(n):
        last = k == n - 1
        index: dict = {}
        nxt = []
        layer_arcs = []
        for state in layers_states[-1]:
            out = []
            for bit in (0, 1):
                res = trans.step(state, k, bit)
                if res is None:
                    out.append((-1, ()))
                    continue
                if res.violated and kind != "cap":
                    raise DiagramError("soft link violation reported while compiling a cost BDD")
                if last:
                    if not trans.is_accepting(res.state):
                        out.append((-1, ()))
                        continue
                    head = 0
                    if not nxt:
                        nxt.append(res.state)
                else:
                    key = trans.state_key(res.state)
                    head = index.get(key)
                    if head is None:
                        head = index[key] = len(nxt)
                        nxt.append(res.state)
                out.append((head, tuple(sorted(set(res.violated)))))
            layer_arcs.append(out)
        total += len(nxt)
        if total > node_budget:
            raise ResourceError(f"BDD for scenario {scenario.id} exceeds the node budget of {node_budget}")
        arcs_per_layer.append(layer_arcs)
        if last:
            nxt = ["t"]
        layers_states.append(nxt)

    sizes = [len(s) for s in layers_states]
    start = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    num = int(start[-1])
    zero_head = np.full(num, -1, dtype=np.int64)
    one_head = np.full(num, -1, dtype=np.int64)
    zero_caps = [()] * num
    one_caps = [()] * num
    for j, layer_arcs in enumerate(arcs_per_layer):
        base, nbase = int(start[j]), int(start[j + 1])
        for local, ((zh, zc), (oh, oc)) in enumerate(layer_arcs):
            u = base + local
            if zh >= 0:
                zero_head[u] = nbase + zh
                zero_caps[u] = zc
            if oh >= 0:
                one_head[u] = nbase + oh
                one_caps[u] = oc
    states = [trans.describe(s) if s != "t" else "t" for layer in layers_states for s in layer]
    return Bdd(kind, n, start, zero_head, one_head, zero_caps, one_caps, states,
               scenario.cost1, scenario.cost2, list(cost_links), list(link_exprs), scenario.var_names)


# ------------------------------------------------------------------ reduce


def _caps_key(bdd: Bdd, caps) -> tuple:
    return tuple(sorted((bdd.link_exprs[i].constant, bdd.link_exprs[i].terms) for i in caps))


def reduce(bdd: Bdd) -> Bdd:
    """Merge equivalent nodes bottom-up and drop nodes with no path to t.

    Two nodes of a layer are equivalent when their arcs agree in kind, head
    and capacity multiset; arc costs depend on the layer only, so they agree
    automatically.  The first node of each class (in id order) survives.
    """
    n = bdd.num_vars
    if bdd.num_nodes == 0:
        return bdd
    keep_layers: list[list[int]] = [[] for _ in range(n + 1)]
    new_of = np.full(bdd.num_nodes, -1, dtype=np.int64)  # old node -> index within its layer
    keep_layers[n] = [bdd.terminal] if n > 0 else [0]
    new_of[keep_layers[n][0]] = 0
    arcs: dict[int, tuple] = {}
    for j in range(n - 1, -1, -1):
        classes: dict = {}
        for u in bdd.layer_nodes(j):
            zh = bdd.zero_head[u]
            oh = bdd.one_head[u]
            z = int(new_of[zh]) if zh >= 0 else -1
            o = int(new_of[oh]) if oh >= 0 else -1
            if z < 0 and o < 0:
                continue
            zc = bdd.zero_caps[u] if z >= 0 else ()
            oc = bdd.one_caps[u] if o >= 0 else ()
            sig = (z, _caps_key(bdd, zc), o, _caps_key(bdd, oc))
            local = classes.get(sig)
            if local is None:
                local = classes[sig] = len(keep_layers[j])
                keep_layers[j].append(u)
                arcs[u] = (z, zc, o, oc)
            new_of[u] = local
    if not keep_layers[0]:
        raise RecourseInfeasibleError("no feasible recourse: the root has no path to the terminal")

    sizes = [len(layer) for layer in keep_layers]
    start = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    num = int(start[-1])
    zero_head = np.full(num, -1, dtype=np.int64)
    one_head = np.full(num, -1, dtype=np.int64)
    zero_caps = [()] * num
    one_caps = [()] * num
    states = []
    for j, layer in enumerate(keep_layers):
        for local, u in enumerate(layer):
            v = int(start[j]) + local
            states.append(bdd.states[u])
            if j == n:
                continue
            z, zc, o, oc = arcs[u]
            if z >= 0:
                zero_head[v] = int(start[j + 1]) + z
                zero_caps[v] = zc
            if o >= 0:
                one_head[v] = int(start[j + 1]) + o
                one_caps[v] = oc
    return Bdd(bdd.kind, n, start, zero_head, one_head, zero_caps, one_caps, states,
               bdd.cost1, bdd.cost2, bdd.cost_links, bdd.link_exprs, bdd.var_names)


# ----------------------------------------------------------- shortest path


def _is_binary(x) -> bool:
    return all(v == 0 or v == 1 for v in x)


def _dtype_for(values) -> tuple:
    """Pick an exact array type when possible: int64, object (Fractions), float."""
    if all(isinstance(v, (int, np.integer)) for v in values):
        return np.int64, INT_INF
    if any(isinstance(v, float) for v in values):
        return np.float64, math.inf
    return object, math.inf


def shortest_path(bdd: Bdd, x: Sequence) -> ShortestPath:
    """Bottom-up shortest r-t path at x.

    ``pi[u]`` is the length of the shortest open u-t path (infinite when
    none exists).  Ties prefer the zero-arc.
    """
    x = [v.item() if hasattr(v, "item") else v for v in x]
    if _is_binary(x):
        x = [int(v) for v in x]
    one_cost = bdd.one_costs(x)
    dtype, inf = _dtype_for(list(one_cost) + [0])
    n = bdd.num_vars
    pi = np.empty(bdd.num_nodes, dtype=dtype)
    pi[bdd.terminal] = 0
    choice = np.full(bdd.num_nodes, -1, dtype=np.int8)
    open_zero, open_one = bdd.open_arcs(x)
    for j in range(n - 1, -1, -1):
        s, e = int(bdd.layer_start[j]), int(bdd.layer_start[j + 1])
        zh = bdd.zero_head[s:e]
        oh = bdd.one_head[s:e]
        oz = open_zero[s:e]
        oo = open_one[s:e]
        zc = np.full(e - s, inf, dtype=dtype)
        zc[oz] = pi[zh[oz]]
        oc = np.full(e - s, inf, dtype=dtype)
        oc[oo] = pi[oh[oo]] + one_cost[j]
        take_zero = zc <= oc
        best = np.where(take_zero, zc, oc)
        if dtype is np.int64:
            best = np.minimum(best, INT_INF)
        pi[s:e] = best
        reachable = best < inf
        choice[s:e] = np.where(reachable, np.where(take_zero, 0, 1), -1)
    value = pi[bdd.root]
    if not value < inf:
        raise RecourseInfeasibleError("no open r-t path at this first-stage point")
    bits = []
    u = bdd.root
    for j in range(n):
        b = int(choice[u])
        bits.append(b)
        u = int(bdd.zero_head[u] if b == 0 else bdd.one_head[u])
    value = value.item() if hasattr(value, "item") else value
    return ShortestPath(value, pi, choice, PathAssignment(tuple(bits), value), one_cost, open_zero, open_one)


def enumerate_paths(bdd: Bdd, x: Sequence, limit: int = DEFAULT_PATH_LIMIT) -> list[PathAssignment]:
    """All open r-t paths at x with their costs."""
    one_cost = bdd.one_costs(x)
    open_zero, open_one = bdd.open_arcs(x)
    out: list[PathAssignment] = []
    if bdd.num_vars == 0:
        return [PathAssignment((), 0)]
    stack = [(bdd.root, (), 0)]
    while stack:
        u, bits, cost = stack.pop()
        j = len(bits)
        if j == bdd.num_vars:
            out.append(PathAssignment(bits, cost))
            if len(out) > limit:
                raise ResourceError(f"more than {limit} paths")
            continue
        if open_one[u]:
            stack.append((int(bdd.one_head[u]), bits + (1,), cost + one_cost[j]))
        if open_zero[u]:
            stack.append((int(bdd.zero_head[u]), bits + (0,), cost))
    return out


# -------------------------------------------------------------------- dump


def dump_bdd(bdd: Bdd) -> str:
    """Text dump: one node per line, then one arc per line.

    node <layer> <id> <state>
    arc <tail> <head> one|zero <var> cost <d1> <d2> [<indicator>]   (cost BDD)
    arc <tail> <head> one|zero <var> cap [<surrogate>] ...           (cap BDD)
    """
    lines = [f"bdd {bdd.kind} vars {bdd.num_vars} nodes {bdd.num_nodes} arcs {bdd.num_arcs}"]
    layer = bdd.layer_of()
    for u in range(bdd.num_nodes):
        lines.append(f"node {int(layer[u])} {u} {bdd.states[u]}")
    for u, v, bit, j, caps in bdd.arcs():
        kind = "one" if bit else "zero"
        name = bdd.var_name(j)
        if bdd.kind == "cost":
            d1 = format_number(bdd.cost1[j]) if bit else "0"
            d2 = format_number(bdd.cost2[j]) if bit else "0"
            expr = bdd.cost_links[j]
            tag = f" [{expr}]" if bit and expr is not None else ""
            lines.append(f"arc {u} {v} {kind} {name} cost {d1} {d2}{tag}")
        else:
            capstr = " ".join(f"[{bdd.link_exprs[i]}]" for i in caps)
            lines.append(f"arc {u} {v} {kind} {name} cap {capstr}".rstrip())
    return "\n".join(lines) + "\n"


def as_exact(value):
    """Convert a numpy scalar or float with an exact binary value to int/Fraction."""
    if hasattr(value, "item"):
        value = value.item()
    if isinstance(value, float):
        return int(value) if value.is_integer() else Fraction(value)
    return value
