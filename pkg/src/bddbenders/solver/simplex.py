"""Dense two-phase primal simplex on a full tableau.

Desk-scale only.  Dantzig pricing until 1000 consecutive degenerate pivots,
then Bland's rule for the rest of the solve (anti-cycling).
"""

from __future__ import annotations

import math

import numpy as np

from .lp import LinearProgram, SolveResult, Status

TOL = 1e-9
BLAND_AFTER = 1000


def solve_lp_simplex(lp: LinearProgram, max_iterations: int = 50_000) -> SolveResult:
    c, a, senses, b, lb, ub = lp.dense()
    if lp.sense == "max":
        c = -c
    status, x, duals, obj, iters = _solve(c, a, senses, b, lb, ub, max_iterations)
    if status is not Status.OPTIMAL:
        return SolveResult(status, iterations=iters)
    if lp.sense == "max":
        obj, duals = -obj, -duals
    return SolveResult(Status.OPTIMAL, x=x, duals=duals, objective=obj, bound=obj, iterations=iters)


def _solve(c, a, senses, b, lb, ub, max_iterations):
    m, n = a.shape
    # substitute x = shift + M @ z with z >= 0
    cols = []  # (original column, sign)
    shift = np.zeros(n)
    bound_rows = []  # (z index, bound)
    for j in range(n):
        if math.isfinite(lb[j]):
            shift[j] = lb[j]
            cols.append((j, 1.0))
            if math.isfinite(ub[j]):
                bound_rows.append((len(cols) - 1, ub[j] - lb[j]))
        elif math.isfinite(ub[j]):
            shift[j] = ub[j]
            cols.append((j, -1.0))
        else:
            cols.append((j, 1.0))
            cols.append((j, -1.0))
    nz = len(cols)
    rows_a = np.zeros((m + len(bound_rows), nz))
    for k, (j, sign) in enumerate(cols):
        rows_a[:m, k] = sign * a[:, j]
    rhs = np.concatenate([b - a @ shift, [u for _, u in bound_rows]]) if m or bound_rows else np.zeros(0)
    row_senses = list(senses) + ["<="] * len(bound_rows)
    for r, (k, _) in enumerate(bound_rows):
        rows_a[m + r, k] = 1.0
    cz = np.array([sign * c[j] for j, sign in cols])
    const = float(c @ shift)

    total_rows = rows_a.shape[0]
    if total_rows == 0:
        # no rows: every z sits at its lower bound 0 unless that is not optimal
        if (cz < -TOL).any():
            return Status.UNBOUNDED, None, None, None, 0
        return Status.OPTIMAL, shift.copy(), np.zeros(0), const, 0
    n_slack = sum(s != "==" for s in row_senses)
    width = nz + n_slack + total_rows
    tab = np.zeros((total_rows, width + 1))
    tab[:, :nz] = rows_a
    k = nz
    for r, sense in enumerate(row_senses):
        if sense == "<=":
            tab[r, k] = 1.0
            k += 1
        elif sense == ">=":
            tab[r, k] = -1.0
            k += 1
    tab[:, -1] = rhs
    flipped = tab[:, -1] < 0
    tab[flipped] *= -1
    art0 = nz + n_slack
    for r in range(total_rows):
        tab[r, art0 + r] = 1.0
    basis = list(range(art0, art0 + total_rows))

    # phase 1: minimize the sum of artificials
    cost1 = np.zeros(width)
    cost1[art0:] = 1.0
    allowed = np.ones(width, bool)
    status, iters = _iterate(tab, basis, cost1, allowed, max_iterations)
    if status is not Status.OPTIMAL:
        return status, None, None, None, iters
    if tab[:, -1] @ cost1[basis] > 1e-7:
        return Status.INFEASIBLE, None, None, None, iters
    # drive remaining zero-level artificials out of the basis
    for r, var in enumerate(basis):
        if var >= art0:
            cand = np.nonzero(np.abs(tab[r, :art0]) > 1e-9)[0]
            if len(cand):
                _pivot(tab, basis, r, int(cand[0]))

    cost2 = np.zeros(width)
    cost2[:nz] = cz
    allowed[art0:] = False
    status, more = _iterate(tab, basis, cost2, allowed, max_iterations - iters)
    iters += more
    if status is not Status.OPTIMAL:
        return status, None, None, None, iters

    z = np.zeros(width)
    z[basis] = tab[:, -1]
    x = shift.copy()
    for k2, (j, sign) in enumerate(cols):
        x[j] += sign * z[k2]
    # duals: y = c_B B^{-1}; B^{-1} sits in the artificial columns
    binv = tab[:, art0:art0 + total_rows]
    y = cost2[basis] @ binv
    y[flipped] *= -1
    duals = y[:m].copy()
    obj = float(cz @ z[:nz]) + const
    return Status.OPTIMAL, x, duals, obj, iters


def _pivot(tab, basis, r, col):
    tab[r] /= tab[r, col]
    colv = tab[:, col].copy()
    colv[r] = 0.0
    tab -= np.outer(colv, tab[r])
    basis[r] = col


def _iterate(tab, basis, cost, allowed, max_iterations):
    iters = 0
    degenerate = 0
    bland = False
    while True:
        cb = cost[basis]
        reduced = cost - cb @ tab[:, :-1]
        reduced[~allowed] = 0.0
        reduced[basis] = 0.0
        if bland:
            neg = np.nonzero(reduced < -TOL)[0]
            if not len(neg):
                return Status.OPTIMAL, iters
            col = int(neg[0])
        else:
            col = int(np.argmin(reduced))
            if reduced[col] >= -TOL:
                return Status.OPTIMAL, iters
        column = tab[:, col]
        pos = column > TOL
        if not pos.any():
            return Status.UNBOUNDED, iters
        ratios = np.full(len(column), np.inf)
        ratios[pos] = tab[pos, -1] / column[pos]
        best = ratios.min()
        ties = np.nonzero(ratios <= best + 1e-12)[0]
        r = int(min(ties, key=lambda i: basis[i]))
        degenerate = degenerate + 1 if best <= 1e-12 else 0
        if degenerate >= BLAND_AFTER:
            bland = True
        _pivot(tab, basis, r, col)
        iters += 1
        if iters >= max_iterations:
            return Status.LIMIT, iters
