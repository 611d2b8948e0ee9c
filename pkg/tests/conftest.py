"""Shared fixture builders for the test suite."""

from __future__ import annotations

import numpy as np

from rsgames.markov import max_feasible_R
from rsgames.model import GameSpec, StationaryProfile


def random_game(
    seed: int,
    n: int = 3,
    nu: int = 2,
    nv: int = 2,
    theta: float = 0.5,
    alpha: float = 0.4,
    cost_scale: float = 1.0,
    nonneg_costs: bool = True,
) -> GameSpec:
    """Dense random game: Dirichlet kernel rows, uniform costs."""
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.ones(n), size=(n, nu, nv))
    lo = 0.0 if nonneg_costs else -cost_scale
    r1 = rng.uniform(lo, cost_scale, size=(n, nu, nv))
    r2 = rng.uniform(lo, cost_scale, size=(n, nu, nv))
    return GameSpec(r1=r1, r2=r2, q=q, theta=theta, theta_max=theta, alpha=alpha)


def small_cost_game(
    seed: int,
    n: int = 3,
    nu: int = 2,
    nv: int = 2,
    theta: float = 0.5,
    alpha: float = 0.4,
    margin: float = 0.9,
) -> GameSpec:
    """Random game with costs scaled under the small-cost threshold.

    The threshold depends only on the kernel (through R0), so the kernel is
    drawn first and the costs rescaled to ``margin`` times the threshold.
    """
    rng = np.random.default_rng(seed)
    q = rng.dirichlet(np.ones(n), size=(n, nu, nv))
    zero = np.zeros((n, nu, nv))
    probe = GameSpec(r1=zero, r2=zero, q=q, theta=theta, theta_max=theta, alpha=alpha)
    R0, _ = max_feasible_R(probe)
    cmax = margin * np.log(R0) / (3.0 * theta)
    r1 = rng.uniform(0, cmax, size=(n, nu, nv))
    r2 = rng.uniform(0, cmax, size=(n, nu, nv))
    return GameSpec(r1=r1, r2=r2, q=q, theta=theta, theta_max=theta, alpha=alpha)


def random_profile(spec: GameSpec, seed: int) -> StationaryProfile:
    rng = np.random.default_rng(seed)
    return StationaryProfile(
        mu=rng.dirichlet(np.ones(spec.n_actions_u), size=spec.n_states),
        nu=rng.dirichlet(np.ones(spec.n_actions_v), size=spec.n_states),
    )


def two_state_chain(p: float, q: float) -> np.ndarray:
    """2-state kernel with P(0->1)=p, P(1->0)=q."""
    return np.array([[1.0 - p, p], [q, 1.0 - q]])


def chain_spec(P: np.ndarray, theta: float = 0.5, alpha: float = 0.4) -> GameSpec:
    """Single-action game whose induced kernel is exactly P."""
    n = P.shape[0]
    q = P.reshape(n, 1, 1, n)
    r = np.zeros((n, 1, 1))
    return GameSpec(r1=r, r2=r, q=q, theta=theta, theta_max=theta, alpha=alpha)
