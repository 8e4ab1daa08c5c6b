"""Problem abstraction for two-stage programs with binary recourse.

A program has binary first-stage variables x, a finite scenario set, and
per-scenario binary recourse y.  Scenarios tie back to x through *links*:

* capacity-linked programs: link i guards a second-stage row W_i.  The link
  expression is the capacity surrogate S_i(x); the row is enforced exactly
  when S_i(x) == 0 and is redundant once S_i(x) >= 1.
* cost-linked programs: link i discounts the cost d1 of variable q(i) to
  zero when its expression evaluates to 1.

Scenario feasibility is described twice: as a transition function (used to
compile decision diagrams) and, optionally, as explicit linear rows (used by
the deterministic equivalent and LP relaxations).
"""

from __future__ import annotations

import io
import re
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import Hashable, Iterable, NamedTuple, Sequence

Number = int | Fraction | float


class ModelError(ValueError):
    """Structural problem in a program, scenario or expression."""


# ---------------------------------------------------------------- numbers


def to_number(value) -> Number:
    """Normalize ints, Fractions, floats, numpy scalars and strings."""
    if hasattr(value, "item") and not isinstance(value, (int, float, Fraction)):
        value = value.item()
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, int):
        return value
    if isinstance(value, Fraction):
        return int(value) if value.denominator == 1 else value
    if isinstance(value, float):
        return int(value) if value.is_integer() else value
    if isinstance(value, str):
        text = value.strip()
        if "/" in text:
            return to_number(Fraction(text))
        try:
            return int(text)
        except ValueError:
            return to_number(float(text))
    raise ModelError(f"not a number: {value!r}")


def format_number(value: Number) -> str:
    value = to_number(value)
    if isinstance(value, Fraction):
        return f"{value.numerator}/{value.denominator}"
    return repr(value) if isinstance(value, float) else str(value)


# ------------------------------------------------------ indicator expressions


@dataclass(frozen=True)
class IndicatorExpr:
    """Affine integer expression ``constant + sum(coef * x[idx])``."""

    constant: int = 0
    terms: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        merged: dict[int, int] = {}
        for idx, coef in self.terms:
            if int(idx) != idx or int(coef) != coef or idx < 0:
                raise ModelError(f"bad indicator term ({idx}, {coef})")
            merged[int(idx)] = merged.get(int(idx), 0) + int(coef)
        if int(self.constant) != self.constant:
            raise ModelError("indicator constant must be an integer")
        object.__setattr__(self, "constant", int(self.constant))
        object.__setattr__(
            self, "terms", tuple(sorted((i, c) for i, c in merged.items() if c))
        )

    @classmethod
    def sum_of(cls, indices: Iterable[int]) -> "IndicatorExpr":
        return cls(0, tuple((i, 1) for i in indices))

    @classmethod
    def complement_of(cls, index: int) -> "IndicatorExpr":
        return cls(1, ((index, -1),))

    def one_minus(self) -> "IndicatorExpr":
        return IndicatorExpr(1 - self.constant, tuple((i, -c) for i, c in self.terms))

    def value(self, x: Sequence) -> Number:
        total = self.constant
        for idx, coef in self.terms:
            total += coef * x[idx]
        return total

    def bounds(self) -> tuple[int, int]:
        """Range of the value over the binary cube."""
        lo = self.constant + sum(c for _, c in self.terms if c < 0)
        hi = self.constant + sum(c for _, c in self.terms if c > 0)
        return lo, hi

    @property
    def max_index(self) -> int:
        return max((i for i, _ in self.terms), default=-1)

    def __str__(self) -> str:
        parts = []
        if self.constant or not self.terms:
            parts.append(str(self.constant))
        for idx, coef in self.terms:
            sign = "-" if coef < 0 else "+"
            mag = abs(coef)
            body = f"x{idx}" if mag == 1 else f"{mag}*x{idx}"
            if not parts:
                parts.append(body if sign == "+" else "-" + body)
            else:
                parts.append(sign + body)
        return "".join(parts)

    _TOKEN = re.compile(r"\s*([+-]?)\s*(\d+)?\s*(\*?\s*x(\d+))?")

    @classmethod
    def parse(cls, text: str) -> "IndicatorExpr":
        text = text.strip()
        if not text:
            raise ModelError("empty indicator expression")
        pos, constant, terms = 0, 0, []
        while pos < len(text):
            m = cls._TOKEN.match(text, pos)
            if not m or m.end() == pos or (m.group(2) is None and m.group(3) is None):
                raise ModelError(f"cannot parse indicator expression {text!r}")
            sign = -1 if m.group(1) == "-" else 1
            if pos > 0 and not m.group(1):
                raise ModelError(f"missing operator in {text!r}")
            mag = int(m.group(2)) if m.group(2) else 1
            if m.group(3):
                terms.append((int(m.group(4)), sign * mag))
            else:
                constant += sign * mag
            pos = m.end()
        return cls(constant, tuple(terms))


def eval_indicator(expr: IndicatorExpr, x: Sequence[int], num_first_stage: int | None = None):
    """Return ``(affine value, truth)`` of an indicator at a binary point."""
    n = len(x) if num_first_stage is None else num_first_stage
    if expr.max_index >= n or expr.max_index >= len(x):
        raise ModelError(f"indicator {expr} references x{expr.max_index} beyond {n} variables")
    if any(v not in (0, 1) for v in x):
        raise ModelError("indicator evaluation needs a binary point")
    value = expr.value(x)
    return value, value >= 1


# ---------------------------------------------------------------- rows


SENSES = (">=", "<=", "==")


@dataclass(frozen=True)
class LinearRow:
    """``sum(coef * var[idx]) sense rhs`` over one block of variables."""

    terms: tuple[tuple[int, Number], ...]
    sense: str
    rhs: Number

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ModelError(f"unknown row sense {self.sense!r}")
        object.__setattr__(self, "terms", tuple((int(i), to_number(c)) for i, c in self.terms))
        object.__setattr__(self, "rhs", to_number(self.rhs))

    def activity(self, values: Sequence) -> Number:
        return sum(c * values[i] for i, c in self.terms)

    def satisfied(self, values: Sequence, tol: float = 0.0) -> bool:
        lhs = self.activity(values)
        if self.sense == ">=":
            return lhs >= self.rhs - tol
        if self.sense == "<=":
            return lhs <= self.rhs + tol
        return abs(lhs - self.rhs) <= tol


@dataclass(frozen=True)
class RelaxedRow:
    """Row of an LP relaxation whose right-hand side moves with x.

    ``sum(coef * y[idx]) sense rhs + sum(weight * expr(x))``
    """

    terms: tuple[tuple[int, Number], ...]
    sense: str
    rhs: Number
    shift: tuple[tuple[IndicatorExpr, Number], ...] = ()

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ModelError(f"unknown row sense {self.sense!r}")
        object.__setattr__(self, "terms", tuple((int(i), to_number(c)) for i, c in self.terms))
        object.__setattr__(self, "rhs", to_number(self.rhs))
        object.__setattr__(self, "shift", tuple((e, to_number(w)) for e, w in self.shift))

    def rhs_at(self, x: Sequence) -> Number:
        return self.rhs + sum(w * e.value(x) for e, w in self.shift)


@dataclass(frozen=True)
class Relaxation:
    """LP relaxation of a scenario subproblem, used for pure Benders cuts."""

    costs: tuple[Number, ...]
    rows: tuple[RelaxedRow, ...]
    y_upper: bool = False

    def __post_init__(self):
        object.__setattr__(self, "costs", tuple(to_number(c) for c in self.costs))
        object.__setattr__(self, "rows", tuple(self.rows))


@dataclass(frozen=True)
class Link:
    expr: IndicatorExpr
    target: int


class Mode(str, Enum):
    CAPACITY = "capacity"
    COST = "cost"


# ---------------------------------------------------------- transitions


class Step(NamedTuple):
    """Successful transition.  A non-empty ``violated`` marks a soft violation:
    the listed links had to be relaxed to reach ``state``."""

    state: Hashable
    violated: tuple[int, ...] = ()


class Transition:
    """Dynamic-programming view of a scenario's feasible set.

    ``step`` returns a :class:`Step`, or ``None`` when the move is infeasible
    no matter what the first stage does.
    """

    initial_state: Hashable = None

    def step(self, state, k: int, bit: int) -> Step | None:
        raise NotImplementedError

    def is_accepting(self, state) -> bool:
        return True

    def state_key(self, state) -> Hashable:
        return state

    def describe(self, state) -> str:
        return repr(state)


class LinearRowsTransition(Transition):
    """Generic transition compiled from a scenario's linear rows.

    The state holds, for every row that is still undecided, the partial
    activity of the variables fixed so far; settled rows hold ``None``.  A
    hard row that can no longer be met kills the move; a linked row that can
    no longer be met is relaxed (soft violation) in capacity mode.
    """

    def __init__(self, scenario: "Scenario", mode: Mode):
        self.n = scenario.num_vars
        rows = [(row, ()) for row in scenario.rows]
        owners: dict[int, list[int]] = {}
        for i, link in enumerate(scenario.links):
            if mode is Mode.CAPACITY:
                owners.setdefault(link.target, []).append(i)
        for r, row in enumerate(scenario.linked_rows):
            rows.append((row, tuple(owners.get(r, ())) if mode is Mode.CAPACITY else ()))
        self.rows = rows
        self.coef = [[0] * self.n for _ in rows]
        for r, (row, _) in enumerate(rows):
            for idx, c in row.terms:
                if idx >= self.n:
                    raise ModelError(f"row references y{idx} beyond {self.n} variables")
                self.coef[r][idx] += c
        # suffix sums of the best and worst remaining contributions
        self.rem_max = []
        self.rem_min = []
        for coefs in self.coef:
            hi, lo = [0] * (self.n + 1), [0] * (self.n + 1)
            for k in range(self.n - 1, -1, -1):
                hi[k] = hi[k + 1] + max(coefs[k], 0)
                lo[k] = lo[k + 1] + min(coefs[k], 0)
            self.rem_max.append(hi)
            self.rem_min.append(lo)
        state = []
        for r in range(len(rows)):
            status = self._status(r, 0, 0)
            if status == "violated":
                raise ModelError("a scenario row is infeasible before any variable is fixed")
            state.append(None if status == "settled" else 0)
        self.initial_state = tuple(state)

    def _status(self, r: int, partial, k: int) -> str:
        row = self.rows[r][0]
        lo = partial + self.rem_min[r][k]
        hi = partial + self.rem_max[r][k]
        if row.sense == ">=":
            if hi < row.rhs:
                return "violated"
            return "settled" if lo >= row.rhs else "open"
        if row.sense == "<=":
            if lo > row.rhs:
                return "violated"
            return "settled" if hi <= row.rhs else "open"
        if not lo <= row.rhs <= hi:
            return "violated"
        return "settled" if lo == hi == row.rhs else "open"

    def step(self, state, k, bit):
        new = list(state)
        violated: list[int] = []
        for r, partial in enumerate(state):
            if partial is None:
                continue
            partial = partial + self.coef[r][k] * bit
            status = self._status(r, partial, k + 1)
            if status == "violated":
                links = self.rows[r][1]
                if not links:
                    return None
                violated.extend(links)
                new[r] = None
            else:
                new[r] = None if status == "settled" else partial
        return Step(tuple(new), tuple(sorted(violated)))

    def is_accepting(self, state):
        return all(p is None for p in state)


# ---------------------------------------------------------------- scenario


@dataclass(frozen=True)
class Scenario:
    """One realization of the second stage."""

    id: int
    probability: Number
    num_vars: int
    cost1: tuple[Number, ...]
    cost2: tuple[Number, ...]
    links: tuple[Link, ...] = ()
    rows: tuple[LinearRow, ...] = ()
    linked_rows: tuple[LinearRow, ...] = ()
    relaxation: Relaxation | None = None
    var_names: tuple[str, ...] | None = None
    transition: Transition | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "probability", to_number(self.probability))
        object.__setattr__(self, "cost1", tuple(to_number(c) for c in self.cost1))
        object.__setattr__(self, "cost2", tuple(to_number(c) for c in self.cost2))
        for name in ("links", "rows", "linked_rows"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if len(self.cost1) != self.num_vars or len(self.cost2) != self.num_vars:
            raise ModelError(f"scenario {self.id}: cost vectors must have {self.num_vars} entries")
        if any(c < 0 for c in self.cost1):
            raise ModelError(f"scenario {self.id}: d1 must be nonnegative")
        if not 0 < self.probability <= 1:
            raise ModelError(f"scenario {self.id}: probability must lie in (0, 1]")

    def name(self, k: int) -> str:
        return self.var_names[k] if self.var_names else str(k)

    def transition_for(self, mode: Mode) -> Transition:
        return self.transition if self.transition is not None else LinearRowsTransition(self, mode)

    def total_cost(self) -> tuple[Number, ...]:
        return tuple(a + b for a, b in zip(self.cost1, self.cost2))

    def cost_links_by_var(self) -> list[IndicatorExpr | None]:
        """For cost-linked scenarios: the discount indicator of each variable."""
        out: list[IndicatorExpr | None] = [None] * self.num_vars
        for link in self.links:
            out[link.target] = link.expr
        return out


@dataclass(frozen=True)
class StochasticProgram:
    num_first_stage: int
    first_stage_cost: tuple[Number, ...]
    scenarios: tuple[Scenario, ...]
    mode: Mode
    first_stage_rows: tuple[LinearRow, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        object.__setattr__(self, "first_stage_cost", tuple(to_number(c) for c in self.first_stage_cost))
        object.__setattr__(self, "scenarios", tuple(self.scenarios))
        object.__setattr__(self, "first_stage_rows", tuple(self.first_stage_rows))
        self.validate()

    def validate(self):
        n = self.num_first_stage
        if len(self.first_stage_cost) != n:
            raise ModelError(f"first-stage cost needs {n} entries")
        for row in self.first_stage_rows:
            if any(i >= n for i, _ in row.terms):
                raise ModelError("first-stage row references an unknown variable")
        if self.scenarios:
            total = sum(s.probability for s in self.scenarios)
            if abs(total - 1) > 1e-9:
                raise ModelError(f"scenario probabilities sum to {total}, not 1")
        for s in self.scenarios:
            targets = set()
            for link in s.links:
                if link.expr.max_index >= n:
                    raise ModelError(f"scenario {s.id}: link {link.expr} references x{link.expr.max_index}")
                lo, hi = link.expr.bounds()
                if self.mode is Mode.COST:
                    if not 0 <= link.target < s.num_vars:
                        raise ModelError(f"scenario {s.id}: link target y{link.target} out of range")
                    if lo < 0 or hi > 1:
                        raise ModelError(f"scenario {s.id}: cost link {link.expr} is not 0/1-valued")
                else:
                    if not 0 <= link.target < len(s.linked_rows):
                        raise ModelError(f"scenario {s.id}: link target row {link.target} out of range")
                    if lo < 0:
                        raise ModelError(f"scenario {s.id}: capacity surrogate {link.expr} can be negative")
                if link.target in targets:
                    raise ModelError(f"scenario {s.id}: two links share target {link.target}")
                targets.add(link.target)
            if self.mode is Mode.CAPACITY and len(targets) != len(s.linked_rows):
                raise ModelError(f"scenario {s.id}: every linked row needs exactly one link")
            if self.mode is Mode.COST and s.linked_rows:
                raise ModelError(f"scenario {s.id}: cost-linked scenarios cannot carry linked rows")
            for row in s.rows + s.linked_rows:
                if any(i >= s.num_vars for i, _ in row.terms):
                    raise ModelError(f"scenario {s.id}: row references an unknown variable")

    def first_stage_feasible(self, x: Sequence) -> bool:
        return all(row.satisfied(x, 1e-9) for row in self.first_stage_rows)


# ---------------------------------------------- deterministic equivalent


def build_deterministic_equivalent(sp: StochasticProgram):
    """Monolithic MILP: one binary copy of y per scenario.

    Columns are x first, then each scenario's y block (and, in cost mode,
    the linearization columns w_j = y_j * (1 - mu_j)).
    """
    from .solver.lp import LinearProgram

    lp = LinearProgram()
    for j in range(sp.num_first_stage):
        lp.add_column(sp.first_stage_cost[j], 0, 1, binary=True, name=f"x{j}")
    for row in sp.first_stage_rows:
        lp.add_row(dict(row.terms), row.sense, row.rhs)

    for s in sp.scenarios:
        p = s.probability
        base = lp.num_columns
        cost_link = s.cost_links_by_var() if sp.mode is Mode.COST else [None] * s.num_vars
        for k in range(s.num_vars):
            own = s.cost2[k] if cost_link[k] is not None else s.cost1[k] + s.cost2[k]
            lp.add_column(p * own, 0, 1, binary=True, name=f"y{s.id}_{s.name(k)}")
        for row in s.rows:
            lp.add_row({base + i: c for i, c in row.terms}, row.sense, row.rhs)
        if sp.mode is Mode.COST:
            for k, expr in enumerate(cost_link):
                if expr is None or s.cost1[k] == 0:
                    continue
                w = lp.add_column(p * s.cost1[k], 0, 1, name=f"w{s.id}_{s.name(k)}")
                # w >= y - mu(x)
                coeffs = {w: 1, base + k: -1}
                for idx, c in expr.terms:
                    coeffs[idx] = coeffs.get(idx, 0) + c
                lp.add_row(coeffs, ">=", -expr.constant)
        else:
            for link in s.links:
                row = s.linked_rows[link.target]
                _add_big_m_rows(lp, row, base, link.expr)
    return lp


def _add_big_m_rows(lp, row: LinearRow, base: int, surrogate: IndicatorExpr):
    hi = sum(c for _, c in row.terms if c > 0)
    lo = sum(c for _, c in row.terms if c < 0)
    senses = [">=", "<="] if row.sense == "==" else [row.sense]
    for sense in senses:
        big_m = row.rhs - lo if sense == ">=" else hi - row.rhs
        if big_m <= 0:
            continue
        sign = 1 if sense == ">=" else -1
        coeffs = {base + i: c for i, c in row.terms}
        for idx, c in surrogate.terms:
            coeffs[idx] = coeffs.get(idx, 0) + sign * big_m * c
        lp.add_row(coeffs, sense, row.rhs - sign * big_m * surrogate.constant)


def capacity_relaxation(s: Scenario, y_upper: bool = True) -> Relaxation:
    """Big-M LP relaxation of a capacity-linked scenario."""
    rows = [RelaxedRow(r.terms, r.sense, r.rhs) for r in s.rows]
    for link in s.links:
        row = s.linked_rows[link.target]
        hi = sum(c for _, c in row.terms if c > 0)
        lo = sum(c for _, c in row.terms if c < 0)
        senses = [">=", "<="] if row.sense == "==" else [row.sense]
        for sense in senses:
            big_m = row.rhs - lo if sense == ">=" else hi - row.rhs
            if big_m <= 0:
                continue
            weight = -big_m if sense == ">=" else big_m
            rows.append(RelaxedRow(row.terms, sense, row.rhs, ((link.expr, weight),)))
    return Relaxation(s.total_cost(), tuple(rows), y_upper)


def check_complete_recourse(sp: StochasticProgram, limit: int = 12) -> bool:
    """Exhaustive check that every feasible x admits a recourse in every scenario."""
    import itertools

    if sp.num_first_stage > limit or any(s.num_vars > limit for s in sp.scenarios):
        raise ModelError("exhaustive recourse check is limited to tiny programs")
    ys = {n: list(itertools.product((0, 1), repeat=n)) for n in {s.num_vars for s in sp.scenarios}}
    for x in itertools.product((0, 1), repeat=sp.num_first_stage):
        if not sp.first_stage_feasible(x):
            continue
        for s in sp.scenarios:
            if not any(recourse_feasible(sp, s, x, y) for y in ys[s.num_vars]):
                return False
    return True


def recourse_feasible(sp: StochasticProgram, s: Scenario, x: Sequence, y: Sequence) -> bool:
    if not all(row.satisfied(y) for row in s.rows):
        return False
    if sp.mode is Mode.CAPACITY:
        for link in s.links:
            if link.expr.value(x) == 0 and not s.linked_rows[link.target].satisfied(y):
                return False
    return True


def recourse_cost(sp: StochasticProgram, s: Scenario, x: Sequence, y: Sequence) -> Number:
    if sp.mode is Mode.COST:
        mu = [e.value(x) if e is not None else 0 for e in s.cost_links_by_var()]
        return sum((s.cost1[k] * (1 - mu[k]) + s.cost2[k]) * y[k] for k in range(s.num_vars))
    return sum((s.cost1[k] + s.cost2[k]) * y[k] for k in range(s.num_vars))


# ------------------------------------------------------------- text format
#
#   stochastic-program 1
#   mode capacity|cost
#   first-stage <n>
#   cost <c_0> ... <c_{n-1}>
#   constraint <sense> <rhs> | <idx>:<coef> ...
#   scenario <id>
#   probability <p>
#   vars <n_y>
#   names <label> ...                    (optional)
#   d1 ... / d2 ...
#   row <sense> <rhs> | <idx>:<coef> ...  (hard rows of the scenario)
#   linked <sense> <rhs> | ...            (rows guarded by links)
#   link <expr> -> <target>
#   relax-costs ... / relax-upper 0|1
#   relax-row <sense> <rhs> | <terms> | <weight> [<expr>] ...
#   end
#
# Numbers are integers, p/q fractions or Python float reprs.


def _fmt_terms(terms) -> str:
    return " ".join(f"{i}:{format_number(c)}" for i, c in terms)


def _parse_terms(text: str):
    out = []
    for tok in text.split():
        idx, _, coef = tok.partition(":")
        out.append((int(idx), to_number(coef)))
    return tuple(out)


def dumps_program(sp: StochasticProgram) -> str:
    out = io.StringIO()
    w = out.write
    w("stochastic-program 1\n")
    w(f"mode {sp.mode.value}\n")
    w(f"first-stage {sp.num_first_stage}\n")
    w("cost " + " ".join(format_number(c) for c in sp.first_stage_cost) + "\n")
    for row in sp.first_stage_rows:
        w(f"constraint {row.sense} {format_number(row.rhs)} | {_fmt_terms(row.terms)}\n")
    for s in sp.scenarios:
        w(f"scenario {s.id}\n")
        w(f"probability {format_number(s.probability)}\n")
        w(f"vars {s.num_vars}\n")
        if s.var_names is not None:
            w("names " + " ".join(s.var_names) + "\n")
        w("d1 " + " ".join(format_number(c) for c in s.cost1) + "\n")
        w("d2 " + " ".join(format_number(c) for c in s.cost2) + "\n")
        for row in s.rows:
            w(f"row {row.sense} {format_number(row.rhs)} | {_fmt_terms(row.terms)}\n")
        for row in s.linked_rows:
            w(f"linked {row.sense} {format_number(row.rhs)} | {_fmt_terms(row.terms)}\n")
        for link in s.links:
            w(f"link {link.expr} -> {link.target}\n")
        if s.relaxation is not None:
            rel = s.relaxation
            w("relax-costs " + " ".join(format_number(c) for c in rel.costs) + "\n")
            w(f"relax-upper {int(rel.y_upper)}\n")
            for row in rel.rows:
                shift = " ".join(f"{format_number(wt)} [{e}]" for e, wt in row.shift)
                w(f"relax-row {row.sense} {format_number(row.rhs)} | {_fmt_terms(row.terms)} | {shift}\n")
        w("end\n")
    return out.getvalue()


def loads_program(text: str) -> StochasticProgram:
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines or lines[0] != "stochastic-program 1":
        raise ModelError("missing 'stochastic-program 1' header")
    head: dict = {"rows": []}
    scenarios = []
    cur: dict | None = None
    for ln in lines[1:]:
        key, _, rest = ln.partition(" ")
        try:
            if cur is None:
                if key == "mode":
                    head["mode"] = Mode(rest.strip())
                elif key == "first-stage":
                    head["n"] = int(rest)
                elif key == "cost":
                    head["cost"] = tuple(to_number(t) for t in rest.split())
                elif key == "constraint":
                    head["rows"].append(_parse_row(rest))
                elif key == "scenario":
                    cur = {"id": int(rest), "rows": [], "linked": [], "links": [], "relax_rows": []}
                else:
                    raise ModelError(f"unexpected line {ln!r}")
                continue
            if key == "probability":
                cur["p"] = to_number(rest)
            elif key == "vars":
                cur["n"] = int(rest)
            elif key == "names":
                cur["names"] = tuple(rest.split())
            elif key in ("d1", "d2"):
                cur[key] = tuple(to_number(t) for t in rest.split())
            elif key == "row":
                cur["rows"].append(_parse_row(rest))
            elif key == "linked":
                cur["linked"].append(_parse_row(rest))
            elif key == "link":
                expr, _, target = rest.rpartition("->")
                cur["links"].append(Link(IndicatorExpr.parse(expr), int(target)))
            elif key == "relax-costs":
                cur["relax_costs"] = tuple(to_number(t) for t in rest.split())
            elif key == "relax-upper":
                cur["relax_upper"] = bool(int(rest))
            elif key == "relax-row":
                cur["relax_rows"].append(_parse_relaxed_row(rest))
            elif key == "end":
                relaxation = None
                if "relax_costs" in cur:
                    relaxation = Relaxation(cur["relax_costs"], tuple(cur["relax_rows"]), cur.get("relax_upper", False))
                n_y = cur["n"]
                scenarios.append(
                    Scenario(
                        cur["id"], cur["p"], n_y,
                        cur.get("d1", (0,) * n_y), cur.get("d2", (0,) * n_y),
                        tuple(cur["links"]), tuple(cur["rows"]), tuple(cur["linked"]),
                        relaxation, cur.get("names"),
                    )
                )
                cur = None
            else:
                raise ModelError(f"unexpected line {ln!r}")
        except (KeyError, ValueError) as exc:
            if isinstance(exc, ModelError):
                raise
            raise ModelError(f"malformed line {ln!r}: {exc}") from exc
    if cur is not None:
        raise ModelError("scenario block not terminated by 'end'")
    try:
        return StochasticProgram(head["n"], head["cost"], tuple(scenarios), head["mode"], tuple(head["rows"]))
    except KeyError as exc:
        raise ModelError(f"missing header field {exc}") from exc


def _parse_row(rest: str) -> LinearRow:
    lhs, _, terms = rest.partition("|")
    sense, rhs = lhs.split()
    return LinearRow(_parse_terms(terms), sense, to_number(rhs))


_SHIFT = re.compile(r"(\S+)\s*\[([^\]]*)\]")


def _parse_relaxed_row(rest: str) -> RelaxedRow:
    lhs, terms, shift = (part.strip() for part in rest.split("|"))
    sense, rhs = lhs.split()
    pairs = tuple((IndicatorExpr.parse(e), to_number(wt)) for wt, e in _SHIFT.findall(shift))
    return RelaxedRow(_parse_terms(terms), sense, to_number(rhs), pairs)


def save_program(sp: StochasticProgram, path) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_program(sp))


def load_program(path) -> StochasticProgram:
    with open(path) as fh:
        return loads_program(fh.read())
