"""Support-enumeration equilibria for two-player one-shot games.

Both players are minimizers: a pair of mixed actions ``(x, y)`` is an
equilibrium of cost matrices ``(A, B)`` when ``x`` minimizes ``x' A y`` and
``y`` minimizes ``x' B y``.  Equal-size supports are enumerated in
lexicographic order; each support pair yields one square indifference system
per player, and solutions are kept only when the mixture is a probability
vector and no action outside the support does strictly better.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Equilibrium:
    """One mixed equilibrium with both players' values (costs)."""

    x: np.ndarray
    y: np.ndarray
    value_a: float
    value_b: float
    support_x: tuple[int, ...]
    support_y: tuple[int, ...]

    def sort_key(self):
        return (
            self.support_x,
            self.support_y,
            tuple(np.round(self.x, 12)),
            tuple(np.round(self.y, 12)),
        )


def _indifference_solve(M: np.ndarray) -> tuple[np.ndarray, float] | None:
    """Solve sum_i p_i M[i, :] = w (all columns), sum p = 1; None if singular."""
    s = M.shape[0]
    sys = np.zeros((s + 1, s + 1))
    sys[:s, :s] = M.T
    sys[:s, s] = -1.0
    sys[s, :s] = 1.0
    rhs = np.zeros(s + 1)
    rhs[s] = 1.0
    try:
        sol = np.linalg.solve(sys, rhs)
    except np.linalg.LinAlgError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    if np.max(np.abs(sys @ sol - rhs)) > 1e-8 * max(1.0, float(np.abs(M).max())):
        return None
    return sol[:s], float(sol[s])


def bimatrix_nash(
    A: np.ndarray,
    B: np.ndarray,
    support_cap: int = 8,
    tol: float = 1e-9,
) -> list[Equilibrium]:
    """All equilibria found by equal-size support enumeration.

    Supports larger than ``support_cap`` are not searched.  Numerically
    degenerate support systems are skipped (and logged); every returned pair
    satisfies both one-sided minimality conditions within ``tol`` relative to
    the matrix scale.  Finite games always admit an equilibrium; an empty
    result raises.
    """
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    if A.shape != B.shape or A.ndim != 2:
        raise ValueError(f"A and B must share a 2-D shape, got {A.shape}, {B.shape}")
    m, n = A.shape
    scale = max(1.0, float(np.abs(A).max()), float(np.abs(B).max()))
    atol = tol * scale
    skipped = 0
    found: list[Equilibrium] = []
    seen: set[tuple] = set()

    for s in range(1, min(m, n, support_cap) + 1):
        for rows in itertools.combinations(range(m), s):
            for cols in itertools.combinations(range(n), s):
                # y makes player 1 indifferent across `rows` (via A);
                # x makes player 2 indifferent across `cols` (via B).
                sol_y = _indifference_solve(A[np.ix_(rows, cols)].T)
                sol_x = _indifference_solve(B[np.ix_(rows, cols)])
                if sol_y is None or sol_x is None:
                    skipped += 1
                    continue
                y_s, w1 = sol_y
                x_s, w2 = sol_x
                if np.any(x_s < -atol) or np.any(y_s < -atol):
                    continue
                x = np.zeros(m)
                y = np.zeros(n)
                x[list(rows)] = np.clip(x_s, 0.0, None)
                y[list(cols)] = np.clip(y_s, 0.0, None)
                x /= x.sum()
                y /= y.sum()
                # minimizer best-response conditions over all actions
                row_costs = A @ y
                col_costs = x @ B
                w1 = float(row_costs[list(rows)].mean())
                w2 = float(col_costs[list(cols)].mean())
                if np.any(row_costs < w1 - atol) or np.any(col_costs < w2 - atol):
                    continue
                if np.max(np.abs(row_costs[list(rows)] - w1)) > atol:
                    continue
                if np.max(np.abs(col_costs[list(cols)] - w2)) > atol:
                    continue
                key = (tuple(np.round(x, 9)), tuple(np.round(y, 9)))
                if key in seen:
                    continue
                seen.add(key)
                found.append(
                    Equilibrium(
                        x=x, y=y,
                        value_a=float(x @ A @ y), value_b=float(x @ B @ y),
                        support_x=rows, support_y=cols,
                    )
                )

    if skipped:
        logger.debug("bimatrix_nash skipped %d degenerate support systems", skipped)
    if not found:
        raise RuntimeError(
            "support enumeration found no equilibrium within tolerance "
            f"(cap {support_cap}); this should not happen for finite games"
        )
    found.sort(key=Equilibrium.sort_key)
    return found


def select_equilibrium(equilibria: list[Equilibrium]) -> Equilibrium:
    """Deterministic pick: lexicographically smallest support pair, then
    smallest probability vectors."""
    return min(equilibria, key=Equilibrium.sort_key)
