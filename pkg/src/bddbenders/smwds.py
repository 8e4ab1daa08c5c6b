"""Stochastic minimum-weight dominating set.

First stage: pick vertices x_v at weight c_v.  A scenario then reveals
second-stage weights d_v; weight 0 means the vertex failed and is removed
from the graph.  The second stage extends the selection to a dominating set
of the surviving graph.

A failed vertex never dominates anything, even when it was selected in the
first stage (its closed neighbourhood is empty in the scenario graph).

Recourse variables exist for survivors only, in ascending vertex order; a
scenario's variable k is survivor ``survivors[k]``.
"""

from __future__ import annotations

import io
import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np

from .model import (
    IndicatorExpr,
    Link,
    LinearRow,
    Mode,
    ModelError,
    Relaxation,
    RelaxedRow,
    Scenario,
    Step,
    StochasticProgram,
    Transition,
    format_number,
    to_number,
)

WEIGHT_LOW = 20
WEIGHT_HIGH = 70
CONNECT_RETRIES = 1000


class GenerationError(RuntimeError):
    pass


# ------------------------------------------------------------------- graph


@dataclass(frozen=True)
class Graph:
    n: int
    adj: tuple  # frozenset of neighbours per vertex

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        nbrs = [set() for _ in range(n)]
        for u, v in edges:
            if u == v or not (0 <= u < n and 0 <= v < n):
                raise ModelError(f"bad edge ({u}, {v}) for {n} vertices")
            nbrs[u].add(v)
            nbrs[v].add(u)
        return cls(n, tuple(frozenset(s) for s in nbrs))

    def edges(self) -> list[tuple[int, int]]:
        return sorted((u, v) for u in range(self.n) for v in self.adj[u] if u < v)

    @property
    def num_edges(self) -> int:
        return sum(len(a) for a in self.adj) // 2

    def is_connected(self) -> bool:
        if self.n == 0:
            return True
        seen = {0}
        todo = [0]
        while todo:
            u = todo.pop()
            for v in self.adj[u]:
                if v not in seen:
                    seen.add(v)
                    todo.append(v)
        return len(seen) == self.n


@dataclass(frozen=True)
class WeightDistribution:
    """Per vertex: two positive atoms and a failure atom.

    ``rows[v] = (w1, p1, w2, p2, p0)``; weight 0 has probability p0.
    """

    rows: tuple

    def __post_init__(self):
        rows = tuple(tuple(to_number(t) for t in r) for r in self.rows)
        for v, (w1, p1, w2, p2, p0) in enumerate(rows):
            if min(p1, p2, p0) < 0 or abs(p1 + p2 + p0 - 1) > 1e-9:
                raise ModelError(f"vertex {v}: atom probabilities must be nonnegative and sum to 1")
            if w1 <= 0 or w2 <= 0:
                raise ModelError(f"vertex {v}: nonzero atoms must be positive")
        object.__setattr__(self, "rows", rows)

    @classmethod
    def fixed(cls, weights: Sequence) -> "WeightDistribution":
        """Degenerate distribution: vertex v always has weight ``weights[v]``."""
        rows = []
        for w in weights:
            rows.append((w, 1, w, 0, 0) if w else (1, 0, 1, 0, 1))
        return cls(tuple(rows))

    def atoms(self, v: int):
        w1, p1, w2, p2, p0 = self.rows[v]
        return (w1, w2, 0), (p1, p2, p0)


@dataclass(frozen=True)
class SmwdsInstance:
    graph: Graph
    first_stage: tuple
    distribution: WeightDistribution
    name: str = "smwds"

    def __post_init__(self):
        object.__setattr__(self, "first_stage", tuple(to_number(c) for c in self.first_stage))
        if len(self.first_stage) != self.graph.n or len(self.distribution.rows) != self.graph.n:
            raise ModelError("first-stage weights and distribution need one entry per vertex")

    @property
    def n(self) -> int:
        return self.graph.n


@dataclass(frozen=True)
class SmwdsScenario:
    """Realized second-stage weights; a zero weight marks a failed vertex."""

    graph: Graph
    weights: tuple
    probability: object = 1
    id: int = 0
    survivors: tuple = field(init=False)
    local: dict = field(init=False, compare=False, repr=False)

    def __post_init__(self):
        weights = tuple(to_number(w) for w in self.weights)
        if len(weights) != self.graph.n or any(w < 0 for w in weights):
            raise ModelError("scenario weights must be nonnegative, one per vertex")
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "probability", to_number(self.probability))
        surv = tuple(v for v in range(self.graph.n) if weights[v] != 0)
        object.__setattr__(self, "survivors", surv)
        object.__setattr__(self, "local", {v: k for k, v in enumerate(surv)})

    def neighbours(self, v: int) -> tuple:
        """Surviving neighbours of v."""
        return tuple(sorted(u for u in self.graph.adj[v] if self.weights[u] != 0))

    def closed_neighbourhood(self, v: int) -> tuple:
        """Vertices able to dominate v in this scenario (empty if v failed)."""
        if self.weights[v] == 0:
            return ()
        return tuple(sorted((v,) + self.neighbours(v)))


# -------------------------------------------------------------- transition


class DominationTransition(Transition):
    """State: bitmask of survivors (local indices) not dominated yet.

    Choosing y_k = 1 dominates the closed neighbourhood of survivor k.
    Choosing y_k = 0 loses the last chance of every undominated survivor
    whose closed neighbourhood ends at k.  In cost mode that kills the move;
    in capacity mode those survivors' covering links are violated and the
    survivors leave the state (their row is treated as relaxed).
    """

    def __init__(self, scenario: SmwdsScenario, mode: Mode):
        self.mode = Mode(mode)
        surv = scenario.survivors
        loc = scenario.local
        self.names = tuple(str(v) for v in surv)
        self.cover = []
        last = [0] * len(surv)
        for k, v in enumerate(surv):
            mask = 0
            for u in scenario.closed_neighbourhood(v):
                mask |= 1 << loc[u]
            self.cover.append(mask)
            last[k] = max(loc[u] for u in scenario.closed_neighbourhood(v))
        self.deadline = [0] * len(surv)
        for k, j in enumerate(last):
            self.deadline[j] |= 1 << k
        self.initial_state = (1 << len(surv)) - 1

    def step(self, state, k, bit):
        if bit:
            return Step(state & ~self.cover[k])
        lost = state & self.deadline[k]
        if not lost:
            return Step(state)
        if self.mode is Mode.COST:
            return None
        violated = tuple(i for i in range(lost.bit_length()) if lost >> i & 1)
        return Step(state & ~lost, violated)

    def is_accepting(self, state):
        return state == 0

    def describe(self, state):
        items = [self.names[i] for i in range(len(self.names)) if state >> i & 1]
        return "[" + ",".join(items) + "]"


def smwds_transition(scenario: SmwdsScenario, mode: Mode = Mode.COST) -> DominationTransition:
    return DominationTransition(scenario, mode)


# ------------------------------------------------------------------- links


def domination_expr(scenario: SmwdsScenario, v: int) -> IndicatorExpr:
    """x_v plus the first-stage variables of v's surviving neighbours."""
    return IndicatorExpr.sum_of(scenario.closed_neighbourhood(v))


def encode_links(scenario: SmwdsScenario, mode: Mode) -> list[Link]:
    """One link per survivor; targets are local survivor indices.

    cost mode: x_v discounts the weight of y_v.
    capacity mode: the domination expression guards the covering row of v.
    """
    links = []
    for k, v in enumerate(scenario.survivors):
        expr = IndicatorExpr.sum_of([v]) if Mode(mode) is Mode.COST else domination_expr(scenario, v)
        links.append(Link(expr, k))
    return links


def covering_rows(scenario: SmwdsScenario) -> list[LinearRow]:
    loc = scenario.local
    return [
        LinearRow(tuple((loc[u], 1) for u in scenario.closed_neighbourhood(v)), ">=", 1)
        for v in scenario.survivors
    ]


def cover_relaxation(scenario: SmwdsScenario) -> Relaxation:
    """LP relaxation: sum over N'[v] of y_u >= 1 - S_v(x), y >= 0."""
    loc = scenario.local
    rows = []
    for v in scenario.survivors:
        terms = tuple((loc[u], 1) for u in scenario.closed_neighbourhood(v))
        rows.append(RelaxedRow(terms, ">=", 1, ((domination_expr(scenario, v), -1),)))
    costs = tuple(scenario.weights[v] for v in scenario.survivors)
    return Relaxation(costs, tuple(rows), False)


def to_scenario(scenario: SmwdsScenario, mode: Mode) -> Scenario:
    mode = Mode(mode)
    n_y = len(scenario.survivors)
    d1 = tuple(scenario.weights[v] for v in scenario.survivors)
    rows = covering_rows(scenario)
    kwargs = {"rows": rows} if mode is Mode.COST else {"linked_rows": rows}
    return Scenario(
        scenario.id,
        scenario.probability,
        n_y,
        d1,
        (0,) * n_y,
        links=tuple(encode_links(scenario, mode)),
        relaxation=cover_relaxation(scenario),
        var_names=tuple(str(v) for v in scenario.survivors),
        transition=DominationTransition(scenario, mode),
        **kwargs,
    )


def build_program(instance: SmwdsInstance, scenarios: Sequence[SmwdsScenario], mode: Mode) -> StochasticProgram:
    return StochasticProgram(
        instance.n,
        instance.first_stage,
        tuple(to_scenario(s, mode) for s in scenarios),
        Mode(mode),
    )


def attach_transitions(sp: StochasticProgram, instance: SmwdsInstance) -> StochasticProgram:
    """Re-attach domination transitions to a program loaded from text.

    The text format does not store transitions; a program loaded from disk
    falls back to the generic row transition, which is exact but slower.
    """
    graph = instance.graph
    scens = []
    for s in sp.scenarios:
        weights = [0] * graph.n
        for k, name in enumerate(s.var_names or ()):
            weights[int(name)] = s.cost1[k] + s.cost2[k]
        sm = SmwdsScenario(graph, tuple(weights), s.probability, s.id)
        scens.append(to_scenario(sm, sp.mode))
    return StochasticProgram(sp.num_first_stage, sp.first_stage_cost, tuple(scens), sp.mode, sp.first_stage_rows)


# ------------------------------------------------------- worked example


EXAMPLE_EDGES = ((3, 0), (0, 1), (1, 2), (2, 3), (3, 4), (4, 2))


def example_instance() -> SmwdsInstance:
    """Five-vertex instance with unit weights in both stages and no failures."""
    graph = Graph.from_edges(5, EXAMPLE_EDGES)
    return SmwdsInstance(graph, (1,) * 5, WeightDistribution.fixed((1,) * 5), "five-vertex")


def example_scenario() -> SmwdsScenario:
    inst = example_instance()
    return SmwdsScenario(inst.graph, (1,) * 5, 1, 0)


# ------------------------------------------------------------- generation


def edge_count(n: int, density: float) -> int:
    """round(density * n(n-1)/2), halves rounded up, in exact arithmetic."""
    exact = Fraction(str(density)) * n * (n - 1) / 2
    return math.floor(exact + Fraction(1, 2))


def generate_graph(n: int, density: float, rng: np.random.Generator) -> Graph:
    """Uniform graph with a fixed edge count, resampled until connected."""
    if n < 2:
        raise GenerationError("need at least two vertices")
    if not 0 < density <= 1:
        raise GenerationError("density must lie in (0, 1]")
    m = edge_count(n, density)
    if m < n - 1:
        raise GenerationError(f"{m} edges cannot connect {n} vertices")
    pairs = [(u, v) for u in range(n) for v in range(u + 1, n)]
    for _ in range(CONNECT_RETRIES):
        pick = rng.choice(len(pairs), size=m, replace=False)
        g = Graph.from_edges(n, (pairs[i] for i in sorted(pick)))
        if g.is_connected():
            return g
    raise GenerationError(f"no connected graph after {CONNECT_RETRIES} draws")


def generate_instance(n: int, density: float, seed: int, low: int = WEIGHT_LOW, high: int = WEIGHT_HIGH) -> SmwdsInstance:
    """Random connected graph, integer first-stage weights and a weight distribution.

    All randomness comes from ``numpy.random.default_rng(seed)``, drawn in
    this order: edges, first-stage weights, then per vertex two atoms and a
    Dirichlet(1,1,1) probability triple (rounded to 4 decimals, the
    failure probability absorbing the rounding).
    """
    rng = np.random.default_rng(seed)
    graph = generate_graph(n, density, rng)
    first = tuple(int(w) for w in rng.integers(low, high + 1, size=n))
    rows = []
    for _ in range(n):
        w1, w2 = (int(w) for w in rng.integers(low, high + 1, size=2))
        p = rng.dirichlet((1.0, 1.0, 1.0))
        p1 = Fraction(int(round(p[0] * 10000)), 10000)
        p2 = Fraction(int(round(p[1] * 10000)), 10000)
        p0 = 1 - p1 - p2
        if p0 < 0:
            p2 += p0
            p0 = Fraction(0)
        rows.append((w1, p1, w2, p2, p0))
    return SmwdsInstance(graph, first, WeightDistribution(tuple(rows)), f"smwds-n{n}-d{density}-s{seed}")


def sample_scenarios(instance: SmwdsInstance, count: int, seed: int) -> list[SmwdsScenario]:
    """i.i.d. draws of every vertex's weight; probability 1/count each."""
    if count < 1:
        raise ModelError("need at least one scenario")
    rng = np.random.default_rng(seed)
    n = instance.n
    dist = instance.distribution
    draws = rng.random((count, n))
    weights = np.zeros((count, n), dtype=np.int64)
    for v in range(n):
        (w1, w2, _), (p1, p2, _) = dist.atoms(v)
        c1, c2 = float(p1), float(p1 + p2)
        col = draws[:, v]
        weights[:, v] = np.where(col < c1, w1, np.where(col < c2, w2, 0))
    prob = Fraction(1, count)
    return [SmwdsScenario(instance.graph, tuple(int(w) for w in weights[s]), prob, s) for s in range(count)]


# ---------------------------------------------------------- instance file
#
#   smwds-instance 1
#   name <label>
#   vertices <n>
#   edge <u> <v>
#   first-stage <c_0> ... <c_{n-1}>
#   dist <v> <w1> <p1> <w2> <p2> <p0>


def dumps_instance(inst: SmwdsInstance) -> str:
    out = io.StringIO()
    out.write("smwds-instance 1\n")
    out.write(f"name {inst.name}\n")
    out.write(f"vertices {inst.n}\n")
    for u, v in inst.graph.edges():
        out.write(f"edge {u} {v}\n")
    out.write("first-stage " + " ".join(format_number(c) for c in inst.first_stage) + "\n")
    for v, row in enumerate(inst.distribution.rows):
        out.write(f"dist {v} " + " ".join(format_number(t) for t in row) + "\n")
    return out.getvalue()


def loads_instance(text: str) -> SmwdsInstance:
    lines = [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    if not lines or lines[0] != "smwds-instance 1":
        raise ModelError("missing 'smwds-instance 1' header")
    name, n, edges, first, dist = "smwds", None, [], None, {}
    for ln in lines[1:]:
        key, _, rest = ln.partition(" ")
        parts = rest.split()
        try:
            if key == "name":
                name = rest.strip()
            elif key == "vertices":
                n = int(rest)
            elif key == "edge":
                edges.append((int(parts[0]), int(parts[1])))
            elif key == "first-stage":
                first = tuple(to_number(t) for t in parts)
            elif key == "dist":
                dist[int(parts[0])] = tuple(to_number(t) for t in parts[1:6])
            else:
                raise ModelError(f"unexpected line {ln!r}")
        except (ValueError, IndexError) as exc:
            if isinstance(exc, ModelError):
                raise
            raise ModelError(f"malformed line {ln!r}") from exc
    if n is None or first is None or sorted(dist) != list(range(n)):
        raise ModelError("instance needs vertices, first-stage weights and one dist row per vertex")
    graph = Graph.from_edges(n, edges)
    return SmwdsInstance(graph, first, WeightDistribution(tuple(dist[v] for v in range(n))), name)


def save_instance(inst: SmwdsInstance, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_instance(inst))


def load_instance(path) -> SmwdsInstance:
    with open(path) as fh:
        return loads_instance(fh.read())


# -------------------------------------------------------------- brute force


def recourse_brute_force(scenario: SmwdsScenario, x: Sequence[int]):
    """Cheapest completion of x to a dominating set of the survivor graph.

    Enumerates subsets of survivors; exponential, for small checks only.
    """
    surv = scenario.survivors
    need = [v for v in surv if not any(x[u] for u in scenario.closed_neighbourhood(v))]
    best = None
    for mask in range(1 << len(surv)):
        chosen = {surv[k] for k in range(len(surv)) if mask >> k & 1}
        if all(chosen.intersection(scenario.closed_neighbourhood(v)) for v in need):
            cost = sum(0 if x[v] else scenario.weights[v] for v in chosen)
            if best is None or cost < best:
                best = cost
    return best


def mean_ci(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float, float]:
    """Mean and two-sided t confidence interval."""
    from scipy import stats

    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if len(arr) < 2:
        return mean, mean, mean
    half = float(stats.t.ppf(0.5 + confidence / 2, len(arr) - 1) * arr.std(ddof=1) / math.sqrt(len(arr)))
    return mean, mean - half, mean + half


# -------------------------------------------------------------------- SAA


@dataclass
class SaaRow:
    count: int
    replications: int
    lb_mean: float
    lb_lo: float
    lb_hi: float
    ub_mean: float
    ub_lo: float
    ub_hi: float
    solve_time: float
    x: tuple = ()

    @property
    def gap_pct(self) -> float:
        """Worst-case optimality gap in percent: (UB_hi - LB_lo) / UB_hi."""
        if self.ub_hi == 0:
            return 0.0
        return max(0.0, 100.0 * (self.ub_hi - self.lb_lo) / self.ub_hi)


SAA_FIELDS = ["scenarios", "replications", "lb_mean", "lb_ci_low", "lb_ci_high",
              "ub_mean", "ub_ci_low", "ub_ci_high", "worst_gap_pct", "mean_solve_time", "best_x"]


def evaluate_first_stage(instance: SmwdsInstance, scenarios: Sequence[SmwdsScenario], xs: Sequence[tuple]) -> np.ndarray:
    """Total cost c x + Q(x, w) of every candidate x in every scenario.

    One cost-BDD per scenario serves all candidates; returns an array of
    shape (len(xs), len(scenarios)).
    """
    from .diagram import build_cost_bdd, shortest_path

    out = np.zeros((len(xs), len(scenarios)))
    first = [sum(c * b for c, b in zip(instance.first_stage, x)) for x in xs]
    for s_idx, sm in enumerate(scenarios):
        bdd = build_cost_bdd(to_scenario(sm, Mode.COST))
        for i, x in enumerate(xs):
            out[i, s_idx] = float(first[i] + shortest_path(bdd, x).value)
    return out


def saa_analysis(instance: SmwdsInstance, counts: Sequence[int], replications: int, eval_size: int | None,
                 seed: int = 0, method: str = "bdd-cost", options=None, confidence: float = 0.95) -> list[SaaRow]:
    """Sample average approximation bounds for a range of sample sizes.

    For each count, ``replications`` independent samples are solved; their
    optimal values give the lower-bound interval.  Every replication's
    solution is scored on one independent evaluation sample of
    ``eval_size`` scenarios and the best one gives the upper-bound interval.
    ``eval_size=None`` scores on the training sample itself; the estimate is
    then exact for that sample and its interval has zero width.
    """
    from .benders import Options, solve_risk_neutral
    from .solver import Status

    if replications < 1 or not counts:
        raise ModelError("need at least one replication and one sample size")
    mode = Mode.CAPACITY if method == "bdd-cap" else Mode.COST
    opts = options or Options(pure_benders=True)
    ss = np.random.SeedSequence(seed)
    eval_seed, *rep_seeds = ss.generate_state(1 + len(counts) * replications)
    evaluation = None if eval_size is None else sample_scenarios(instance, eval_size, int(eval_seed))
    rows = []
    for ci, count in enumerate(counts):
        objs, xs, times = [], [], []
        for r in range(replications):
            sample = sample_scenarios(instance, count, int(rep_seeds[ci * replications + r]))
            t0 = time.perf_counter()
            sol = solve_risk_neutral(build_program(instance, sample, mode), method, opts)
            times.append(time.perf_counter() - t0)
            if sol.x is None:
                raise ModelError(f"SAA replication ended with status {sol.status.value}")
            # a stopped solve still gives a valid lower bound through its bound
            objs.append(float(sol.objective) if sol.status is Status.OPTIMAL else float(sol.bound))
            xs.append(sol.x)
        lb_mean, lb_lo, lb_hi = mean_ci(objs, confidence)
        if evaluation is None:
            # scored on its own training sample: the SAA optimum itself
            best = int(np.argmin(objs))
            ub_mean = ub_lo = ub_hi = objs[best]
        else:
            costs = evaluate_first_stage(instance, evaluation, xs)
            best = int(np.argmin(costs.mean(axis=1)))
            ub_mean, ub_lo, ub_hi = mean_ci(costs[best], confidence)
        rows.append(SaaRow(count, replications, lb_mean, lb_lo, lb_hi, ub_mean, ub_lo, ub_hi,
                           float(np.mean(times)), tuple(xs[best])))
    return rows


def saa_table(rows: Sequence[SaaRow]) -> list[list]:
    """Rows in CSV order (see ``SAA_FIELDS``)."""
    return [[r.count, r.replications, f"{r.lb_mean:.4f}", f"{r.lb_lo:.4f}", f"{r.lb_hi:.4f}",
             f"{r.ub_mean:.4f}", f"{r.ub_lo:.4f}", f"{r.ub_hi:.4f}", f"{r.gap_pct:.2f}",
             f"{r.solve_time:.3f}", "".join(str(b) for b in r.x)] for r in rows]
