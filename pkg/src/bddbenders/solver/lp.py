"""Linear program container, result type and the plain-text LP dump."""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

INF = math.inf


class Status(str, Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"


class SolverError(RuntimeError):
    pass


@dataclass
class Row:
    coeffs: dict[int, float]
    sense: str
    rhs: float
    name: str | None = None


class LinearProgram:
    """Columns with bounds and kinds, rows ``coeffs sense rhs``."""

    def __init__(self, sense: str = "min"):
        if sense not in ("min", "max"):
            raise SolverError(f"unknown objective sense {sense!r}")
        self.sense = sense
        self.cost: list[float] = []
        self.lb: list[float] = []
        self.ub: list[float] = []
        self.binary: list[bool] = []
        self.names: list[str] = []
        self.rows: list[Row] = []

    @property
    def num_columns(self) -> int:
        return len(self.cost)

    @property
    def num_rows(self) -> int:
        return len(self.rows)

    def add_column(self, cost, lb=0.0, ub=INF, binary=False, name=None) -> int:
        if binary:
            lb, ub = max(lb, 0), min(ub, 1)
        if lb > ub:
            raise SolverError(f"column bounds [{lb}, {ub}] are empty")
        self.cost.append(cost)
        self.lb.append(lb)
        self.ub.append(ub)
        self.binary.append(bool(binary))
        self.names.append(name or f"c{len(self.cost) - 1}")
        return len(self.cost) - 1

    def add_row(self, coeffs: dict, sense: str, rhs, name=None) -> int:
        if sense not in (">=", "<=", "=="):
            raise SolverError(f"unknown row sense {sense!r}")
        clean = {}
        for j, v in coeffs.items():
            if not 0 <= j < self.num_columns:
                raise SolverError(f"row references column {j} of {self.num_columns}")
            if v:
                clean[int(j)] = v
        self.rows.append(Row(clean, sense, rhs, name))
        return len(self.rows) - 1

    def copy(self) -> "LinearProgram":
        other = LinearProgram(self.sense)
        other.cost, other.lb, other.ub = list(self.cost), list(self.lb), list(self.ub)
        other.binary, other.names = list(self.binary), list(self.names)
        other.rows = [Row(dict(r.coeffs), r.sense, r.rhs, r.name) for r in self.rows]
        return other

    def dense(self):
        """``(c, A, senses, b, lb, ub)`` as float arrays."""
        c = np.array(self.cost, dtype=float)
        a = np.zeros((self.num_rows, self.num_columns))
        for i, row in enumerate(self.rows):
            for j, v in row.coeffs.items():
                a[i, j] = float(v)
        b = np.array([float(r.rhs) for r in self.rows])
        senses = [r.sense for r in self.rows]
        return c, a, senses, b, np.array(self.lb, float), np.array(self.ub, float)

    def objective_value(self, x) -> float:
        return float(sum(c * v for c, v in zip(self.cost, x)))

    def is_feasible(self, x, tol=1e-7) -> bool:
        for j, v in enumerate(x):
            if v < self.lb[j] - tol or v > self.ub[j] + tol:
                return False
        for row in self.rows:
            lhs = sum(c * x[j] for j, c in row.coeffs.items())
            if row.sense == ">=" and lhs < row.rhs - tol:
                return False
            if row.sense == "<=" and lhs > row.rhs + tol:
                return False
            if row.sense == "==" and abs(lhs - row.rhs) > tol:
                return False
        return True

    # ------------------------------------------------------------ text dump
    #
    #   lp min|max
    #   col <name> <cost> <lb> <ub> continuous|binary
    #   row <name> <sense> <rhs> | <col>:<coef> ...
    #   end

    def dumps(self) -> str:
        out = io.StringIO()
        out.write(f"lp {self.sense}\n")
        for j in range(self.num_columns):
            kind = "binary" if self.binary[j] else "continuous"
            out.write(f"col {self.names[j]} {_num(self.cost[j])} {_num(self.lb[j])} {_num(self.ub[j])} {kind}\n")
        for i, row in enumerate(self.rows):
            terms = " ".join(f"{j}:{_num(v)}" for j, v in sorted(row.coeffs.items()))
            out.write(f"row {row.name or f'r{i}'} {row.sense} {_num(row.rhs)} | {terms}\n")
        out.write("end\n")
        return out.getvalue()

    @classmethod
    def loads(cls, text: str) -> "LinearProgram":
        lp = None
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            key, _, rest = line.partition(" ")
            if key == "lp":
                lp = cls(rest.strip())
            elif lp is None:
                raise SolverError("LP dump must start with 'lp min|max'")
            elif key == "col":
                name, cost, lb, ub, kind = rest.split()
                lp.add_column(_parse(cost), _parse(lb), _parse(ub), kind == "binary", name)
            elif key == "row":
                head, _, terms = rest.partition("|")
                name, sense, rhs = head.split()
                coeffs = {}
                for tok in terms.split():
                    j, _, v = tok.partition(":")
                    coeffs[int(j)] = _parse(v)
                lp.add_row(coeffs, sense, _parse(rhs), name)
            elif key == "end":
                break
            else:
                raise SolverError(f"unexpected LP dump line {line!r}")
        if lp is None:
            raise SolverError("empty LP dump")
        return lp


def _num(v) -> str:
    if isinstance(v, float):
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(int(v)) if v.is_integer() else repr(v)
    return str(v)


def _parse(tok: str):
    if tok in ("inf", "-inf"):
        return float(tok)
    if "/" in tok:
        from fractions import Fraction

        return Fraction(tok)
    try:
        return int(tok)
    except ValueError:
        return float(tok)


@dataclass
class SolveResult:
    status: Status
    x: np.ndarray | None = None
    duals: np.ndarray | None = None
    objective: float | None = None
    bound: float | None = None
    nodes: int = 0
    wall_time: float = 0.0
    iterations: int = 0
    payload: object = None
    stats: dict = field(default_factory=dict)

    @property
    def gap(self) -> float:
        if self.objective is None or self.bound is None:
            return INF
        return abs(self.objective - self.bound) / max(abs(self.objective), 1.0)
