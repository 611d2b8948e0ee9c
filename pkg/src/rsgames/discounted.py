"""Discounted-criterion solver: backward induction on exponential values.

The discounted risk-sensitive value of a strategy pair is the expectation of
``exp(theta * sum_t alpha^t r_i)``; on the log scale divided by the stage
risk weight it becomes the familiar certainty-equivalent value.  The
infinite horizon is truncated at the smallest ``T`` whose residual tail can
multiply the exponential value by at most ``1 + eps``; beyond the horizon
continuation values are exactly 1.

Backward induction couples the stage-``t`` value at risk weight
``theta * alpha^t`` to the stage-``t+1`` value at ``theta * alpha^(t+1)``.
Each stage and state yields a small two-player cost game whose entries are
``exp(stage weight * cost) * (transition-averaged continuation)``; one
equilibrium is installed per (stage, state) via support enumeration with a
deterministic selection rule.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from rsgames.bimatrix import bimatrix_nash, select_equilibrium
from rsgames.model import (
    GameSpec,
    MarkovProfile,
    StationaryProfile,
    validate,
)

ARGMIN_RTOL = 1e-9  # relative tolerance for membership in an argmin set


@dataclass(frozen=True)
class StageGame:
    """Per-(stage, state) cost matrices; both players minimize."""

    A: np.ndarray
    B: np.ndarray


@dataclass(frozen=True)
class ExpValueTable:
    """Stage-indexed exponential values and their certainty equivalents.

    ``phi*[t, k]`` is the stage-t exponential value at risk weight
    ``theta * alpha^t`` (row ``horizon`` is the unit tail);
    ``psi*[t, k] = ln(phi*[t, k]) / (theta * alpha^t)``.
    """

    phi1: np.ndarray
    phi2: np.ndarray
    psi1: np.ndarray
    psi2: np.ndarray
    horizon: int
    tail_bound: float


@dataclass(frozen=True)
class DiscountedDeviationReport:
    """Best-response gaps for both players, per start state.

    ``gap_exp_rel`` is ``zeta_profile / zeta_best_response - 1`` (relative,
    exponential scale); ``gap_psi`` the same gap on the certainty-equivalent
    scale.  The verdict allows the tolerance plus twice the tail slack of the
    profile horizon.
    """

    gap_exp_rel: np.ndarray  # shape (2, n)
    gap_psi: np.ndarray
    max_gap: float
    tol: float
    tail_slack: float
    passed: bool


def horizon_for_tail(spec: GameSpec, eps: float) -> int:
    """Smallest horizon whose truncated tail inflates the exponential value
    by at most ``1 + eps`` (floor of 1)."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    r_inf = spec.cost_sup_max()
    if r_inf == 0.0 or spec.alpha == 0.0:
        return 1
    x = math.log1p(eps) * (1.0 - spec.alpha) / (spec.theta * r_inf)
    if x >= 1.0:
        return 1
    return max(1, math.ceil(math.log(x) / math.log(spec.alpha)))


def tail_slack_for_horizon(spec: GameSpec, T: int) -> float:
    """Multiplicative tail slack ``exp(theta alpha^T ||r|| / (1-alpha)) - 1``."""
    r_inf = spec.cost_sup_max()
    return math.expm1(spec.theta * spec.alpha**T * r_inf / (1.0 - spec.alpha))


def exp_bellman_apply(
    spec: GameSpec,
    theta_s: float,
    continuation: np.ndarray,
    opponent_action: np.ndarray,
    state: int,
    player: int,
    argmin_rtol: float = ARGMIN_RTOL,
) -> tuple[float, tuple[int, ...]]:
    """One-state Bellman minimization for the exponential cost.

    Minimizes, over the player's own pure actions, the opponent-averaged
    ``exp(theta_s r) * (q . continuation)``; pure actions suffice because the
    objective is linear in the player's own mixture.  Returns the minimum and
    the set of actions within relative tolerance of it.
    """
    continuation = np.asarray(continuation, dtype=float)
    if np.any(continuation <= 0.0):
        raise ValueError("continuation values must be strictly positive")
    r = spec.cost(player)[state]
    w = np.exp(theta_s * r) * (spec.q[state] @ continuation)  # (n_u, n_v)
    vals = w @ opponent_action if player == 1 else opponent_action @ w
    vmin = float(vals.min())
    argmin = tuple(int(i) for i in np.flatnonzero(vals <= vmin * (1.0 + argmin_rtol)))
    return vmin, argmin


def build_stage_game(
    spec: GameSpec,
    state: int,
    theta_t: float,
    phi1_next: np.ndarray,
    phi2_next: np.ndarray,
) -> StageGame:
    """Stage cost matrices at one state from both continuations."""
    if np.any(phi1_next <= 0.0) or np.any(phi2_next <= 0.0):
        raise ValueError("continuation values must be strictly positive")
    qk = spec.q[state]
    A = np.exp(theta_t * spec.r1[state]) * (qk @ phi1_next)
    B = np.exp(theta_t * spec.r2[state]) * (qk @ phi2_next)
    return StageGame(A=A, B=B)


def solve_discounted(
    spec: GameSpec, eps: float = 1e-8, workers: int = 1
) -> tuple[MarkovProfile, ExpValueTable]:
    """Equilibrium Markov profile and value table for the discounted game.

    Backward induction over ``horizon_for_tail(spec, eps)`` stages; at each
    (stage, state) the installed pair is the deterministic selection among
    the stage game's support-enumeration equilibria.
    """
    validate(spec).raise_if_failed()
    n = spec.n_states
    T = horizon_for_tail(spec, eps)
    phi1 = np.ones((T + 1, n))
    phi2 = np.ones((T + 1, n))
    stages: list[StationaryProfile] = [None] * T  # type: ignore[list-item]

    def stage_state(args):
        t, k, theta_t = args
        game = build_stage_game(spec, k, theta_t, phi1[t + 1], phi2[t + 1])
        eq = select_equilibrium(bimatrix_nash(game.A, game.B))
        return k, eq

    for t in range(T - 1, -1, -1):
        theta_t = spec.theta * spec.alpha**t
        mu_t = np.zeros((n, spec.n_actions_u))
        nu_t = np.zeros((n, spec.n_actions_v))
        tasks = [(t, k, theta_t) for k in range(n)]
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                results = list(pool.map(stage_state, tasks))
        else:
            results = [stage_state(task) for task in tasks]
        for k, eq in sorted(results, key=lambda item: item[0]):
            mu_t[k] = eq.x
            nu_t[k] = eq.y
            phi1[t, k] = eq.value_a
            phi2[t, k] = eq.value_b
        stages[t] = StationaryProfile(mu=mu_t, nu=nu_t)

    weights = spec.theta * spec.alpha ** np.arange(T + 1)
    psi1 = np.log(phi1) / weights[:, None]
    psi2 = np.log(phi2) / weights[:, None]
    profile = MarkovProfile(stages=tuple(stages))
    table = ExpValueTable(
        phi1=phi1, phi2=phi2, psi1=psi1, psi2=psi2, horizon=T, tail_bound=eps
    )
    return profile, table


def evaluate_exp_cost(
    spec: GameSpec, profile: MarkovProfile, player: int
) -> np.ndarray:
    """Exact exponential value of a Markov profile (unit tail), per start state."""
    zeta = np.ones(spec.n_states)
    r = spec.cost(player)
    for t in range(profile.horizon - 1, -1, -1):
        theta_t = spec.theta * spec.alpha**t
        stage = profile.stages[t]
        w = np.exp(theta_t * r) * (spec.q @ zeta)
        zeta = np.einsum("ku,kv,kuv->k", stage.mu, stage.nu, w)
    return zeta


def evaluate_linear_cost(
    spec: GameSpec, profile: MarkovProfile, player: int
) -> np.ndarray:
    """Risk-neutral discounted value of the same profile (diagnostic baseline)."""
    J = np.zeros(spec.n_states)
    r = spec.cost(player)
    for t in range(profile.horizon - 1, -1, -1):
        stage = profile.stages[t]
        w = spec.alpha**t * r + (spec.q @ J)
        J = np.einsum("ku,kv,kuv->k", stage.mu, stage.nu, w)
    return J


def best_response_value_discounted(
    spec: GameSpec,
    opponent_stages: Sequence[np.ndarray],
    player: int,
    horizon: int | None = None,
) -> np.ndarray:
    """Optimal exponential value against an announced opponent Markov strategy.

    Single-controller backward induction; optimal over all own Markov
    strategies on the same horizon (pure stage minimizers suffice).
    """
    T = len(opponent_stages) if horizon is None else horizon
    if T != len(opponent_stages):
        raise ValueError(
            f"opponent defined for {len(opponent_stages)} stages, horizon is {T}"
        )
    zeta = np.ones(spec.n_states)
    r = spec.cost(player)
    for t in range(T - 1, -1, -1):
        theta_t = spec.theta * spec.alpha**t
        opp = np.asarray(opponent_stages[t], dtype=float)
        w = np.exp(theta_t * r) * (spec.q @ zeta)  # (n, n_u, n_v)
        if player == 1:
            vals = np.einsum("kuv,kv->ku", w, opp)
        else:
            vals = np.einsum("kuv,ku->kv", w, opp)
        zeta = vals.min(axis=1)
    return zeta


def verify_nash_discounted(
    spec: GameSpec, profile: MarkovProfile, tol: float = 1e-8
) -> DiscountedDeviationReport:
    """Best-response deviation gaps of a Markov profile for both players."""
    n = spec.n_states
    gap_exp = np.zeros((2, n))
    gap_psi = np.zeros((2, n))
    for player in (1, 2):
        opponent = [stage.opponent_side(player) for stage in profile.stages]
        zeta_prof = evaluate_exp_cost(spec, profile, player)
        zeta_br = best_response_value_discounted(spec, opponent, player)
        gap_exp[player - 1] = zeta_prof / zeta_br - 1.0
        gap_psi[player - 1] = np.log(zeta_prof / zeta_br) / spec.theta
    tail = tail_slack_for_horizon(spec, profile.horizon)
    max_gap = float(gap_exp.max())
    return DiscountedDeviationReport(
        gap_exp_rel=gap_exp,
        gap_psi=gap_psi,
        max_gap=max_gap,
        tol=tol,
        tail_slack=tail,
        passed=max_gap <= tol + 2.0 * tail,
    )
