"""Dense two-phase tableau simplex with Bland's rule.

Solves ``min c·x  s.t.  A x = b, x >= 0``. Phase 1 minimizes the sum of
artificial variables; when that optimum is positive the artificial reduced
costs give a Farkas ray ``y`` with ``yᵀA <= 0`` and ``yᵀb > 0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from loguru import logger

from ..core.config import TOL
from ..core.errors import NumericalFailure


@dataclass
class LpResult:
    status: str                          # "optimal" | "infeasible" | "unbounded"
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    farkas: Optional[np.ndarray] = None  # set when infeasible
    infeasibility: float = 0.0           # phase-1 optimum
    iterations: int = 0


def _pivot(T: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    basis[row] = col


def _iterate(T: np.ndarray, basis: np.ndarray, allowed: np.ndarray, tol: float,
             max_iterations: int) -> tuple[str, int]:
    """Pivot until no allowed column has a negative reduced cost (last row of T)."""
    m = T.shape[0] - 1
    for it in range(max_iterations):
        entering = np.flatnonzero((T[-1, :-1] < -tol) & allowed)
        if entering.size == 0:
            return "optimal", it
        col = int(entering[0])
        column = T[:m, col]
        positive = column > tol
        if not positive.any():
            return "unbounded", it
        ratios = np.full(m, np.inf)
        ratios[positive] = T[:m, -1][positive] / column[positive]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol)
        row = int(ties[np.argmin(basis[ties])])
        _pivot(T, basis, row, col)
    raise NumericalFailure(f"simplex iteration limit ({max_iterations}) reached")


def solve_standard_form(c: Optional[np.ndarray], A: np.ndarray, b: np.ndarray, *,
                        tol: float = TOL.lp, max_iterations: int = 50_000) -> LpResult:
    """Pure feasibility when `c` is None (phase 1 only)."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    m, n = A.shape
    sign = np.where(b < 0, -1.0, 1.0)
    A = A * sign[:, None]
    b = b * sign

    T = np.zeros((m + 1, n + m + 1))
    T[:m, :n] = A
    T[:m, n:n + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :n] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = np.arange(n, n + m)

    status, it1 = _iterate(T, basis, np.ones(n + m, dtype=bool), tol, max_iterations)
    if status != "optimal":
        raise NumericalFailure(f"phase 1 ended {status}")
    infeasibility = -T[-1, -1]
    logger.debug("Simplex phase 1: {} pivots, residual {:.3g}", it1, infeasibility)
    if infeasibility > tol:
        y = (1.0 - T[-1, n:n + m]) * sign
        return LpResult("infeasible", farkas=y, infeasibility=float(infeasibility), iterations=it1)

    if c is None:
        x = np.zeros(n)
        structural = basis < n
        x[basis[structural]] = T[:m, -1][structural]
        return LpResult("optimal", x=x, objective=0.0, infeasibility=float(infeasibility), iterations=it1)

    # drive artificials out of the basis; rows that cannot pivot are redundant
    keep = np.ones(m + 1, dtype=bool)
    for row in range(m):
        if basis[row] < n:
            continue
        candidates = np.flatnonzero(np.abs(T[row, :n]) > tol)
        if candidates.size:
            _pivot(T, basis, row, int(candidates[0]))
        else:
            keep[row] = False
    T = np.delete(T[keep], np.s_[n:n + m], axis=1)
    basis = basis[keep[:m]]

    c = np.asarray(c, dtype=float)
    cb = c[basis]
    T[-1, :n] = c - cb @ T[:-1, :n]
    T[-1, -1] = -cb @ T[:-1, -1]
    status, it2 = _iterate(T, basis, np.ones(n, dtype=bool), tol, max_iterations)
    logger.debug("Simplex phase 2: {} pivots, status {}", it2, status)
    if status == "unbounded":
        return LpResult("unbounded", iterations=it1 + it2)
    x = np.zeros(n)
    x[basis] = T[:-1, -1]
    return LpResult("optimal", x=x, objective=float(c @ x), infeasibility=float(infeasibility),
                    iterations=it1 + it2)
