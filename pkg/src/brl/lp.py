"""Small dense linear programs: two-phase tableau simplex with Bland's rule.

Solves ``min c^T x  s.t.  A x <= b, x >= 0``. Problems here are tiny
(tens of variables, a few hundred rows) so the tableau is kept dense and
pivoting favours robustness over speed. Optimality is certified by an explicit
dual solution and duality gap.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PIVOT_TOL = 1e-7
COST_TOL = 1e-9
GAP_TOL = 1e-9
RHS_TOL = 1e-9
CLEAN_TOL = 1e-13
REFACTOR_EVERY = 50
CLEANUP_ROUNDS = 5


class LPError(RuntimeError):
    pass


class InfeasibleError(LPError):
    pass


class UnboundedError(LPError):
    pass


@dataclass
class LPResult:
    x: np.ndarray
    objective: float
    dual: np.ndarray
    duality_gap: float
    iterations: int


def _pivot(T: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    others = np.arange(T.shape[0]) != row
    T[others] -= np.outer(T[others, col], T[row])


def _refactor(T: np.ndarray, original: np.ndarray, basis: list[int]) -> None:
    """Rebuild the tableau for ``basis`` from the unpivoted one, discarding drift."""
    m = len(basis)
    try:
        T[:m] = np.linalg.solve(original[:m, basis], original[:m])
    except np.linalg.LinAlgError as exc:
        raise LPError("simplex basis became singular") from exc
    T[m:] = original[m:] - original[m:, basis] @ T[:m]
    T[np.arange(m), basis] = 1.0


def _run(T: np.ndarray, basis: list[int], cost_row: int, allowed: np.ndarray, max_iter: int,
         original: np.ndarray) -> int:
    """Primal simplex on the objective stored (as reduced costs) in ``T[cost_row]``."""
    m = len(basis)
    fresh = False
    for it in range(max_iter):
        if it and it % REFACTOR_EVERY == 0:
            _refactor(T, original, basis)
        reduced = T[cost_row, :-1]
        # reduced costs are compared relative to the cost row's own scale
        tol = COST_TOL * max(1.0, np.abs(reduced[allowed]).max())
        candidates = np.flatnonzero((reduced < -tol) & allowed)
        if candidates.size == 0:
            return it
        col = candidates[0]  # Bland: lowest index enters
        column = T[:m, col]
        # relative threshold: round-off-sized entries must never become pivots
        pos = column > PIVOT_TOL * max(1.0, np.abs(column).max())
        if not np.any(pos):
            if not fresh:
                # rule out drift before declaring unboundedness
                _refactor(T, original, basis)
                fresh = True
                continue
            raise UnboundedError("objective is unbounded below")
        fresh = False
        ratios = np.full(m, np.inf)
        ratios[pos] = np.maximum(T[:m, -1][pos], 0.0) / column[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + PIVOT_TOL * max(1.0, abs(best)))
        row = min(ties, key=lambda r: basis[r])  # Bland: lowest basic index leaves
        _pivot(T, row, col)
        basis[row] = col
        # round-off leaves tiny negative right-hand sides; left alone they compound
        rhs = T[:m, -1]
        rhs[(rhs < 0.0) & (rhs > -RHS_TOL * max(1.0, np.abs(rhs).max()))] = 0.0
    raise LPError("simplex iteration limit reached")


def _dual_cleanup(T: np.ndarray, basis: list[int], cost_row: int, allowed: np.ndarray,
                  max_iter: int) -> int:
    """Dual simplex pivots until no basic variable is negative.

    Used after refactoring exposes a slightly infeasible basis that the drifted
    tableau had reported as feasible. Keeps the reduced costs nonnegative.
    """
    m = len(basis)
    for it in range(max_iter):
        rhs = T[:m, -1]
        row = int(np.argmin(rhs))
        if rhs[row] >= -CLEAN_TOL * max(1.0, np.abs(rhs).max()):
            return it
        entries = T[row, :-1]
        neg = (entries < -PIVOT_TOL * max(1.0, np.abs(entries).max())) & allowed
        if not np.any(neg):
            raise InfeasibleError("no feasible basis near the simplex optimum")
        ratios = np.full(entries.size, np.inf)
        ratios[neg] = np.maximum(T[cost_row, :-1][neg], 0.0) / -entries[neg]
        col = int(np.argmin(ratios))
        _pivot(T, row, col)
        basis[row] = col
    raise LPError("dual cleanup iteration limit reached")


def solve_lp(c, A_ub, b_ub, max_iter: int = 50_000) -> LPResult:
    c = np.asarray(c, dtype=float)
    A = np.atleast_2d(np.asarray(A_ub, dtype=float))
    b = np.asarray(b_ub, dtype=float)
    m, n = A.shape
    if c.shape != (n,) or b.shape != (m,):
        raise ValueError("inconsistent LP dimensions")

    sign = np.where(b < 0, -1.0, 1.0)
    art_rows = np.flatnonzero(b < 0)
    p = art_rows.size
    width = n + m + p
    # rows 0..m-1 constraints, row m phase-2 cost, row m+1 phase-1 cost
    T = np.zeros((m + 2, width + 1))
    T[:m, :n] = A * sign[:, None]
    T[:m, n:n + m] = np.diag(sign)
    T[:m, -1] = b * sign
    basis = [n + i for i in range(m)]
    for j, i in enumerate(art_rows):
        T[i, n + m + j] = 1.0
        basis[i] = n + m + j
    T[m, :n] = c
    if p:
        T[m + 1, n + m:width] = 1.0
        for i in art_rows:
            T[m + 1] -= T[i]

    original = T.copy()
    allowed = np.ones(width, dtype=bool)
    iters = 0
    if p:
        iters += _run(T, basis, m + 1, allowed, max_iter, original)
        if -T[m + 1, -1] > 1e-9 * max(1.0, np.abs(b).max()):
            raise InfeasibleError("phase 1 could not reach a feasible point")
        for r in range(m):
            if basis[r] >= n + m:
                row = np.abs(T[r, :n + m])
                j = int(np.argmax(row))
                if row[j] <= PIVOT_TOL:
                    raise LPError("degenerate artificial row could not be eliminated")
                _pivot(T, r, j)
                basis[r] = j
        allowed[n + m:] = False
    # phase-2 reduced costs for the current basis
    for r, j in enumerate(basis):
        if T[m, j] != 0.0:
            T[m] -= T[m, j] * T[r]
    iters += _run(T, basis, m, allowed, max_iter, original)
    for _ in range(CLEANUP_ROUNDS):
        _refactor(T, original, basis)
        steps = _dual_cleanup(T, basis, m, allowed, max_iter)
        steps += _run(T, basis, m, allowed, max_iter, original)
        iters += steps
        if steps == 0:
            break

    # recompute primal and dual from the final basis in the original orientation
    full = np.hstack([A, np.eye(m)])
    cost = np.concatenate([c, np.zeros(m)])
    B = full[:, basis]
    xb = np.linalg.solve(B, b)
    x_full = np.zeros(n + m)
    x_full[basis] = np.maximum(xb, 0.0)
    y = np.linalg.solve(B.T, cost[basis])
    x = x_full[:n]
    primal = float(c @ x)
    gap = abs(primal - float(b @ y))
    reduced = cost - full.T @ y
    scale = max(1.0, np.abs(A).max(), np.abs(b).max(), np.abs(c).max())
    if xb.min() < -1e-8 * scale or np.max(A @ x - b) > 1e-8 * scale:
        raise LPError("final basis is not primal feasible")
    if reduced.min() < -1e-8 * scale or gap > GAP_TOL * scale:
        raise LPError(f"optimality certificate failed (gap {gap:.3e}, min reduced cost {reduced.min():.3e})")
    return LPResult(x=x, objective=primal, dual=y, duality_gap=gap, iterations=iters)
