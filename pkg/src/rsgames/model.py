"""Game data model: cost/transition tensors, risk parameters, strategy profiles.

A game instance holds, for a finite state space ``{0, .., n-1}`` and finite
action sets for the two players, the per-stage cost tensors ``r1``/``r2``
(indexed ``[state][u][v]``), the transition tensor ``q`` (indexed
``[state][u][v][next_state]``), the risk parameter ``theta`` with its cap
``theta_max``, the discount factor ``alpha`` and a reference state.

Mixed actions are plain probability vectors (1-D numpy arrays).  A stationary
profile stores one mixed action per state per player; a Markov profile is a
stage-indexed sequence of stationary profiles with a unit exponential tail.
All containers are immutable after construction and safe to share between
workers; the operations in this module are pure functions.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

PROB_TOL = 1e-12  # tolerance on probability-mass invariants


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=float))
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class GameSpec:
    """Immutable description of a two-player finite stochastic game.

    Attributes
    ----------
    r1, r2 : ndarray, shape (n, n_u, n_v)
        Per-stage costs for players I and II (both players minimize).
    q : ndarray, shape (n, n_u, n_v, n)
        Transition probabilities ``q[k, u, v, j] = P(next=j | k, u, v)``.
    theta : float
        Risk parameter, ``0 < theta <= theta_max``.
    theta_max : float
        Cap on the risk parameter (enters the small-cost condition).
    alpha : float
        Discount factor in ``[0, 1)``; only the discounted criterion uses it.
    ref_state : int
        Reference state used to anchor return times and normalizations.
    """

    r1: np.ndarray
    r2: np.ndarray
    q: np.ndarray
    theta: float
    theta_max: float
    alpha: float = 0.0
    ref_state: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "r1", _frozen(self.r1))
        object.__setattr__(self, "r2", _frozen(self.r2))
        object.__setattr__(self, "q", _frozen(self.q))

    @property
    def n_states(self) -> int:
        return self.q.shape[0]

    @property
    def n_actions_u(self) -> int:
        return self.q.shape[1]

    @property
    def n_actions_v(self) -> int:
        return self.q.shape[2]

    def cost(self, player: int) -> np.ndarray:
        """Cost tensor of ``player`` (1 or 2)."""
        if player == 1:
            return self.r1
        if player == 2:
            return self.r2
        raise ValueError(f"player must be 1 or 2, got {player}")

    def cost_sup(self, player: int) -> float:
        """Sup norm of the player's cost tensor."""
        return float(np.max(np.abs(self.cost(player))))

    def cost_sup_max(self) -> float:
        """max(||r1||_inf, ||r2||_inf)."""
        return max(self.cost_sup(1), self.cost_sup(2))


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate`: all violations, with offending indices."""

    passed: bool
    violations: tuple[str, ...]

    def raise_if_failed(self) -> None:
        if not self.passed:
            raise ValueError("invalid game spec: " + "; ".join(self.violations))


@dataclass(frozen=True)
class StationaryProfile:
    """Per-state mixed actions for both players.

    ``mu`` has shape ``(n, n_u)`` (player I), ``nu`` has shape ``(n, n_v)``
    (player II); each row is a probability vector.
    """

    mu: np.ndarray
    nu: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "mu", _frozen(self.mu))
        object.__setattr__(self, "nu", _frozen(self.nu))

    def side(self, player: int) -> np.ndarray:
        return self.mu if player == 1 else self.nu

    def opponent_side(self, player: int) -> np.ndarray:
        return self.nu if player == 1 else self.mu


@dataclass(frozen=True)
class MarkovProfile:
    """Stage-indexed strategy pair for ``t = 0 .. horizon-1``.

    The tail beyond the horizon carries no cost: continuation values are 1 on
    the exponential scale (``tail_rule`` records this convention).
    """

    stages: tuple[StationaryProfile, ...]
    tail_rule: str = "unit-exponential-tail"

    def __post_init__(self) -> None:
        object.__setattr__(self, "stages", tuple(self.stages))

    @property
    def horizon(self) -> int:
        return len(self.stages)


def validate(spec: GameSpec) -> ValidationReport:
    """Check every structural invariant of a game spec.

    Reports all violations (with indices) rather than failing on the first;
    callers treat a failing report as fatal.
    """
    bad: list[str] = []
    r1, r2, q = spec.r1, spec.r2, spec.q

    if q.ndim != 4 or q.shape[0] != q.shape[3]:
        bad.append(f"q must have shape (n, n_u, n_v, n), got {q.shape}")
        return ValidationReport(False, tuple(bad))
    n, nu, nv = q.shape[0], q.shape[1], q.shape[2]
    if n < 1 or nu < 1 or nv < 1:
        bad.append(f"state/action counts must be positive, got {(n, nu, nv)}")
    for name, r in (("r1", r1), ("r2", r2)):
        if r.shape != (n, nu, nv):
            bad.append(f"{name} must have shape {(n, nu, nv)}, got {r.shape}")
        elif not np.all(np.isfinite(r)):
            k, u, v = np.argwhere(~np.isfinite(r))[0]
            bad.append(f"{name}[{k}][{u}][{v}] is not finite")

    if np.any(q < 0):
        k, u, v, j = np.argwhere(q < 0)[0]
        bad.append(f"q[{k}][{u}][{v}][{j}] = {q[k, u, v, j]} is negative")
    if not np.all(np.isfinite(q)):
        k, u, v, j = np.argwhere(~np.isfinite(q))[0]
        bad.append(f"q[{k}][{u}][{v}][{j}] is not finite")
    else:
        sums = q.sum(axis=3)
        off = np.abs(sums - 1.0) > PROB_TOL
        if np.any(off):
            k, u, v = np.argwhere(off)[0]
            bad.append(
                f"q row (k={k}, u={u}, v={v}) sums to {sums[k, u, v]!r}, not 1"
            )

    if not (0.0 < spec.theta <= spec.theta_max):
        bad.append(
            f"require 0 < theta <= theta_max, got theta={spec.theta}, "
            f"theta_max={spec.theta_max}"
        )
    if not (0.0 <= spec.alpha < 1.0):
        bad.append(f"require 0 <= alpha < 1, got alpha={spec.alpha}")
    if not (0 <= spec.ref_state < n):
        bad.append(f"ref_state {spec.ref_state} outside 0..{n - 1}")

    return ValidationReport(len(bad) == 0, tuple(bad))


def validate_profile(spec: GameSpec, profile: StationaryProfile) -> None:
    """Raise on dimension or probability-mass violations of a profile."""
    n, nu, nv = spec.n_states, spec.n_actions_u, spec.n_actions_v
    if profile.mu.shape != (n, nu):
        raise ValueError(f"mu must have shape {(n, nu)}, got {profile.mu.shape}")
    if profile.nu.shape != (n, nv):
        raise ValueError(f"nu must have shape {(n, nv)}, got {profile.nu.shape}")
    for name, rows in (("mu", profile.mu), ("nu", profile.nu)):
        if np.any(rows < 0):
            raise ValueError(f"{name} has a negative weight")
        if np.any(np.abs(rows.sum(axis=1) - 1.0) > PROB_TOL):
            k = int(np.argmax(np.abs(rows.sum(axis=1) - 1.0)))
            raise ValueError(f"{name}[{k}] does not sum to 1")


def uniform_profile(spec: GameSpec) -> StationaryProfile:
    """Uniform mixture over both action sets at every state."""
    n, nu, nv = spec.n_states, spec.n_actions_u, spec.n_actions_v
    return StationaryProfile(
        mu=np.full((n, nu), 1.0 / nu), nu=np.full((n, nv), 1.0 / nv)
    )


def pure_stationary_profile(
    spec: GameSpec, u_map: Sequence[int], v_map: Sequence[int]
) -> StationaryProfile:
    """Point-mass profile from per-state action indices."""
    n, nu, nv = spec.n_states, spec.n_actions_u, spec.n_actions_v
    mu = np.zeros((n, nu))
    nv_w = np.zeros((n, nv))
    mu[np.arange(n), list(u_map)] = 1.0
    nv_w[np.arange(n), list(v_map)] = 1.0
    return StationaryProfile(mu=mu, nu=nv_w)


def induced_kernel(spec: GameSpec, profile: StationaryProfile) -> np.ndarray:
    """Strategy-averaged transition matrix.

    ``P[k, j] = sum_{u,v} mu[k,u] nu[k,v] q[k,u,v,j]``; rows of the result
    sum to 1 within :data:`PROB_TOL` for any valid profile.
    """
    validate_profile(spec, profile)
    P = np.einsum("ku,kv,kuvj->kj", profile.mu, profile.nu, spec.q)
    return P


def expected_exp_cost(
    spec: GameSpec, profile: StationaryProfile, player: int, scale: float
) -> np.ndarray:
    """Per-state strategy average of ``exp(scale * r_player)``.

    The scale is a positive risk weight (e.g. ``theta * alpha**t`` in the
    discounted recursion).
    """
    if scale <= 0:
        raise ValueError(f"scale must be positive, got {scale}")
    validate_profile(spec, profile)
    w = np.exp(scale * spec.cost(player))
    return np.einsum("ku,kv,kuv->k", profile.mu, profile.nu, w)


# --- JSON interchange -------------------------------------------------------
#
# Spec files are UTF-8 JSON documents with fields n_states, n_actions_u,
# n_actions_v, r1, r2, q, theta, theta_max, alpha, ref_state; tensors as
# nested arrays in the index order of GameSpec.  NaN/Infinity are rejected.


def _reject_constant(token: str) -> float:
    raise ValueError(f"non-finite literal {token!r} not allowed in spec file")


def spec_from_dict(doc: dict) -> GameSpec:
    """Build a :class:`GameSpec` from a parsed JSON document."""
    required = ("n_states", "n_actions_u", "n_actions_v", "r1", "r2", "q", "theta")
    missing = [key for key in required if key not in doc]
    if missing:
        raise ValueError(f"spec document missing fields: {missing}")
    n = int(doc["n_states"])
    nu = int(doc["n_actions_u"])
    nv = int(doc["n_actions_v"])
    r1 = np.asarray(doc["r1"], dtype=float)
    r2 = np.asarray(doc["r2"], dtype=float)
    q = np.asarray(doc["q"], dtype=float)
    if q.shape != (n, nu, nv, n):
        raise ValueError(
            f"q has shape {q.shape}, expected {(n, nu, nv, n)} from the counts"
        )
    if r1.shape != (n, nu, nv) or r2.shape != (n, nu, nv):
        raise ValueError(
            f"cost tensors must have shape {(n, nu, nv)}, "
            f"got r1 {r1.shape}, r2 {r2.shape}"
        )
    for name, a in (("r1", r1), ("r2", r2), ("q", q)):
        if not np.all(np.isfinite(a)):
            raise ValueError(f"{name} contains non-finite entries")
    theta = float(doc["theta"])
    theta_max = float(doc.get("theta_max", theta))
    alpha = float(doc.get("alpha", 0.0))
    ref_state = int(doc.get("ref_state", 0))
    if not all(math.isfinite(x) for x in (theta, theta_max, alpha)):
        raise ValueError("theta/theta_max/alpha must be finite")
    return GameSpec(
        r1=r1, r2=r2, q=q, theta=theta, theta_max=theta_max,
        alpha=alpha, ref_state=ref_state,
    )


def load_spec(path: str | Path) -> GameSpec:
    """Load and structurally check a game spec from a JSON file."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh, parse_constant=_reject_constant)
    if not isinstance(doc, dict):
        raise ValueError("spec file must contain a JSON object")
    return spec_from_dict(doc)


def spec_to_dict(spec: GameSpec) -> dict:
    """JSON-serializable document for a game spec (inverse of spec_from_dict)."""
    return {
        "n_states": spec.n_states,
        "n_actions_u": spec.n_actions_u,
        "n_actions_v": spec.n_actions_v,
        "r1": spec.r1.tolist(),
        "r2": spec.r2.tolist(),
        "q": spec.q.tolist(),
        "theta": spec.theta,
        "theta_max": spec.theta_max,
        "alpha": spec.alpha,
        "ref_state": spec.ref_state,
    }
