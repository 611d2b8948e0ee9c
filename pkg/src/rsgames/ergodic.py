"""Ergodic-criterion solver: per-player optimal response and Nash search.

For a fixed stationary profile, the long-run risk-sensitive cost of a player
is the root ``lam`` of ``E_ref[exp(theta * sum_{t<sigma} (r - lam))] = 1``,
where ``sigma`` is the first return time to the reference state.  The root
is found by bisection on the bracket ``[-||r||, ||r||]`` (the first-passage
expectation is strictly decreasing in ``lam``) and cross-checked by the
principal eigenvalue of the multiplicative kernel.

A player's optimal response against a fixed opponent mixture solves the
multiplicative dynamic-programming equation
``exp(theta lam) h(k) = min_u sum_v nu(v) exp(theta r) sum_j h(j) q(j|.)``,
computed by normalized value iteration; since the minimand is linear in the
player's own mixture, pure stage actions suffice.  Nash profiles are sought
by damped iterated best response with cycle detection and an enumeration
fallback; the search can fail structurally (existence holds, but no
constructive algorithm is guaranteed), in which case a failure report is
returned instead of a solution.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from rsgames.bimatrix import bimatrix_nash
from rsgames.model import (
    GameSpec,
    StationaryProfile,
    uniform_profile,
    validate_profile,
)

ARGMIN_RTOL = 1e-9


@dataclass(frozen=True)
class GpeResult:
    """Root of the first-passage equation with the solved expectations."""

    lam: float
    g: np.ndarray
    iterations: int


@dataclass(frozen=True)
class RsViResult:
    """Converged multiplicative value iteration against a fixed opponent."""

    lam: float
    h: np.ndarray
    argmin_sets: tuple[tuple[int, ...], ...]
    sweeps: int


@dataclass(frozen=True)
class ErgodicSolution:
    lambda1: float
    lambda2: float
    h1: np.ndarray
    h2: np.ndarray
    profile: StationaryProfile
    normalization: tuple[float, float]  # (h1, h2) at the reference state


@dataclass(frozen=True)
class ErgodicSearchFailure:
    """Structured outcome when best-response iteration finds no equilibrium."""

    reason: str
    rounds: int
    cycle_detected: bool
    fallback_exhausted: bool
    last_profile: StationaryProfile


@dataclass(frozen=True)
class ErgodicDeviationReport:
    gap1: float
    gap2: float
    lam_profile: tuple[float, float]
    lam_best_response: tuple[float, float]
    tol: float
    passed: bool


@dataclass(frozen=True)
class NashSearchConfig:
    max_rounds: int = 200
    damping: float = 0.5
    hash_resolution: float = 1e-9
    enumeration_cap: int = 10_000
    verify_tol: float = 1e-7
    vi_tol: float = 1e-12


def weighted_kernel(
    spec: GameSpec, profile: StationaryProfile, player: int, lam: float
) -> np.ndarray:
    """W[k, j] = sum_{u,v} mu nu exp(theta (r - lam)) q(j | k, u, v)."""
    w = np.exp(spec.theta * (spec.cost(player) - lam))
    return np.einsum("ku,kv,kuv,kuvj->kj", profile.mu, profile.nu, w, spec.q)


def multiplicative_kernel(
    spec: GameSpec, profile: StationaryProfile, player: int
) -> np.ndarray:
    """M[k, j] = sum_{u,v} mu nu exp(theta r) q(j | k, u, v)."""
    return weighted_kernel(spec, profile, player, 0.0)


def first_passage_exp(
    spec: GameSpec, profile: StationaryProfile, player: int, lam: float
) -> np.ndarray:
    """Per-state E_k[exp(theta sum_{t<sigma_ref} (r - lam))].

    The entry at the reference state is the full return-cycle expectation
    started there.  Solves the taboo linear system on the complement of the
    reference state; diverges when the spectral radius of the off-reference
    weighted kernel reaches 1.
    """
    validate_profile(spec, profile)
    W = weighted_kernel(spec, profile, player, lam)
    ref = spec.ref_state
    outside = [k for k in range(spec.n_states) if k != ref]
    g = np.empty(spec.n_states)
    if not outside:
        g[ref] = W[ref, ref]
        return g
    Wt = W[np.ix_(outside, outside)]
    rho = float(np.max(np.abs(np.linalg.eigvals(Wt))))
    if rho >= 1.0 - 1e-13:
        raise ValueError(
            f"first-passage series diverges: weighted taboo spectral radius {rho:.6g}"
        )
    g_out = np.linalg.solve(np.eye(len(outside)) - Wt, W[outside, ref])
    g[outside] = g_out
    g[ref] = W[ref, ref] + W[ref, outside] @ g_out
    return g


def gpe_bisection(
    spec: GameSpec, profile: StationaryProfile, player: int, tol: float = 1e-10
) -> GpeResult:
    """Long-run cost of a fixed profile: root of g(ref) = 1 in lam.

    Bisects on ``[-||r||, ||r||]``; the expectation is strictly decreasing in
    ``lam`` (a divergent first-passage series counts as above 1).  Returns
    the smallest bracket endpoint known to satisfy ``g(ref) <= 1``.
    """
    r_inf = spec.cost_sup(player)

    def g_ref(lam: float) -> float:
        try:
            return float(first_passage_exp(spec, profile, player, lam)[spec.ref_state])
        except ValueError:
            return math.inf

    lo, hi = -r_inf, r_inf
    if g_ref(hi) > 1.0 + 1e-9:
        raise ValueError(
            "no sign change on [-||r||, ||r||]; uniform-recurrence assumptions "
            "likely fail for this profile"
        )
    iterations = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if g_ref(mid) > 1.0:
            lo = mid
        else:
            hi = mid
        iterations += 1
    return GpeResult(lam=hi, g=first_passage_exp(spec, profile, player, hi), iterations=iterations)


def spectral_lambda(
    spec: GameSpec,
    profile: StationaryProfile,
    player: int,
    tol: float = 1e-12,
    max_iter: int = 100_000,
) -> tuple[float, np.ndarray]:
    """Independent oracle for the long-run cost: ``ln(rho(M)) / theta`` with
    ``M`` the multiplicative kernel, via shifted power iteration.

    A unit diagonal shift makes the iteration converge for periodic chains;
    Collatz-Wielandt ratios bracket the Perron root at every step.  Also
    returns the positive right eigenvector normalized at the reference state.
    """
    validate_profile(spec, profile)
    M = multiplicative_kernel(spec, profile, player)
    shift = 1.0
    x = np.ones(spec.n_states)
    rho = None
    for it in range(max_iter):
        y = M @ x + shift * x
        ratios = y / x
        lo, hi = float(ratios.min()), float(ratios.max())
        x = y / y.max()
        if hi - lo <= tol * hi:
            rho = 0.5 * (lo + hi) - shift
            break
    if rho is None:
        raise RuntimeError(
            f"power iteration did not converge in {max_iter} iterations"
        )
    if x[spec.ref_state] <= 0:
        raise RuntimeError("power iteration produced a non-positive eigenvector")
    return math.log(rho) / spec.theta, x / x[spec.ref_state]


def relative_value_h(
    spec: GameSpec, profile: StationaryProfile, player: int, lam_star: float
) -> np.ndarray:
    """Relative value from the inclusive hitting-time representation.

    ``h(k) = E_k[exp(theta sum_{t=0}^{tau_ref} (r - lam_star))]`` where the
    sum includes the arrival step at the reference state; at the reference
    state itself this is the averaged one-step weight, which pins the
    normalization.  With ``lam_star`` the profile's long-run cost, ``(h,
    lam_star)`` solves the multiplicative Poisson equation.
    """
    validate_profile(spec, profile)
    W = weighted_kernel(spec, profile, player, lam_star)
    ref = spec.ref_state
    h_ref = float(W[ref].sum())
    outside = [k for k in range(spec.n_states) if k != ref]
    h = np.empty(spec.n_states)
    h[ref] = h_ref
    if outside:
        Wt = W[np.ix_(outside, outside)]
        rho = float(np.max(np.abs(np.linalg.eigvals(Wt))))
        if rho >= 1.0 - 1e-13:
            raise ValueError(
                f"relative-value series diverges: taboo spectral radius {rho:.6g}"
            )
        h[outside] = np.linalg.solve(
            np.eye(len(outside)) - Wt, W[outside, ref] * h_ref
        )
    if np.any(h <= 0):
        raise ValueError("relative value must be strictly positive")
    return h


def _own_action_kernels(
    spec: GameSpec, opponent: np.ndarray, player: int
) -> np.ndarray:
    """M[k, a, j]: multiplicative kernel per own action, opponent averaged."""
    w = np.exp(spec.theta * spec.cost(player))
    if player == 1:
        return np.einsum("kv,kuv,kuvj->kuj", opponent, w, spec.q)
    return np.einsum("ku,kuv,kuvj->kvj", opponent, w, spec.q)


def rs_value_iteration(
    spec: GameSpec,
    opponent: np.ndarray,
    player: int,
    tol: float = 1e-12,
    max_sweeps: int = 200_000,
) -> RsViResult:
    """Optimal long-run response against a fixed opponent mixture.

    Normalized multiplicative value iteration on
    ``(T f)(k) = min_a sum_j M[k, a, j] f(j)``, renormalized at the reference
    state each sweep; stops when the log-span of successive ratios drops to
    ``tol``.  The long-run cost comes from the limiting normalization factor
    and the relative value is rescaled to the one-step normalization at the
    reference state.
    """
    M = _own_action_kernels(spec, np.asarray(opponent, dtype=float), player)
    ref = spec.ref_state
    f = np.ones(spec.n_states)
    lam = None
    for sweep in range(1, max_sweeps + 1):
        tf_actions = M @ f  # (n, own_actions)
        tf = tf_actions.min(axis=1)
        ratios = tf / f
        span = math.log(float(ratios.max())) - math.log(float(ratios.min()))
        norm = float(tf[ref])
        f = tf / norm
        if span <= tol:
            lam = math.log(norm) / spec.theta
            break
    if lam is None:
        raise RuntimeError(
            f"value iteration did not converge in {max_sweeps} sweeps "
            f"(final log-span {span:.3g})"
        )
    tf_actions = M @ f
    tf = tf_actions.min(axis=1)
    argmin_sets = tuple(
        tuple(int(a) for a in np.flatnonzero(row <= row.min() * (1.0 + ARGMIN_RTOL)))
        for row in tf_actions
    )
    # pin the additive constant: h(ref) is the minimal averaged one-step weight
    if player == 1:
        one_step = np.exp(spec.theta * (spec.r1[ref] - lam)) @ opponent[ref]
    else:
        one_step = opponent[ref] @ np.exp(spec.theta * (spec.r2[ref] - lam))
    h = f / f[ref] * float(one_step.min())
    return RsViResult(lam=lam, h=h, argmin_sets=argmin_sets, sweeps=sweep)


def twisted_kernel(
    spec: GameSpec,
    profile: StationaryProfile,
    player: int,
    f: np.ndarray,
    lam: float,
) -> np.ndarray:
    """Change-of-measure kernel ``W[k, j] f(j) / f(k)``.

    Stochastic exactly when ``(f, lam)`` solves the multiplicative Poisson
    equation for this profile; raw row sums within 1e-8 of 1 are required
    (else the pair is rejected) and the returned rows are normalized by
    their own sums, which are then 1 to machine precision.
    """
    f = np.asarray(f, dtype=float)
    if np.any(f <= 0):
        raise ValueError("f must be strictly positive")
    W = weighted_kernel(spec, profile, player, lam)
    raw = W * f[None, :] / f[:, None]
    sums = raw.sum(axis=1)
    worst = float(np.max(np.abs(sums - 1.0)))
    if worst > 1e-8:
        raise ValueError(
            f"(f, lam) does not solve the multiplicative Poisson equation: "
            f"twisted row sums deviate by {worst:.3g}"
        )
    return raw / sums[:, None]


def mpe_residual(
    spec: GameSpec,
    profile: StationaryProfile,
    player: int,
    h: np.ndarray,
    lam: float,
) -> float:
    """Relative residual of the multiplicative Poisson equation."""
    h = np.asarray(h, dtype=float)
    if np.any(h <= 0):
        raise ValueError("h must be strictly positive")
    M = multiplicative_kernel(spec, profile, player)
    lhs = M @ h
    rhs = math.exp(spec.theta * lam) * h
    return float(np.max(np.abs(lhs - rhs) / rhs))


@dataclass(frozen=True)
class BestResponseErgodic:
    """Optimal-response set against a fixed opponent: any per-state mixture
    supported on the argmin sets attains the optimal long-run cost."""

    lam: float
    argmin_sets: tuple[tuple[int, ...], ...]
    h: np.ndarray


def best_response_ergodic(
    spec: GameSpec, opponent: np.ndarray, player: int, vi_tol: float = 1e-12
) -> BestResponseErgodic:
    res = rs_value_iteration(spec, opponent, player, tol=vi_tol)
    return BestResponseErgodic(lam=res.lam, argmin_sets=res.argmin_sets, h=res.h)


def verify_nash_ergodic(
    spec: GameSpec,
    profile: StationaryProfile,
    tol: float = 1e-7,
    vi_tol: float = 1e-12,
) -> ErgodicDeviationReport:
    """Unilateral-deviation gaps: profile cost minus optimal-response cost.

    Pure deviations suffice because the dynamic-programming minimand is
    linear in the deviating player's mixture.
    """
    lam_prof = []
    lam_br = []
    for player in (1, 2):
        lam_prof.append(gpe_bisection(spec, profile, player).lam)
        opp = profile.opponent_side(player)
        lam_br.append(rs_value_iteration(spec, opp, player, tol=vi_tol).lam)
    gap1 = lam_prof[0] - lam_br[0]
    gap2 = lam_prof[1] - lam_br[1]
    return ErgodicDeviationReport(
        gap1=gap1,
        gap2=gap2,
        lam_profile=(lam_prof[0], lam_prof[1]),
        lam_best_response=(lam_br[0], lam_br[1]),
        tol=tol,
        passed=(gap1 <= tol and gap2 <= tol),
    )


def _pure_rows(n_actions: int, picks: np.ndarray) -> np.ndarray:
    rows = np.zeros((picks.size, n_actions))
    rows[np.arange(picks.size), picks] = 1.0
    return rows


def _profile_hash(profile: StationaryProfile, resolution: float) -> bytes:
    grid = np.concatenate(
        [np.round(profile.mu / resolution).ravel(), np.round(profile.nu / resolution).ravel()]
    )
    return grid.astype(np.int64).tobytes()


def _solution_at(
    spec: GameSpec, profile: StationaryProfile, config: NashSearchConfig
) -> ErgodicSolution | None:
    report = verify_nash_ergodic(spec, profile, tol=config.verify_tol, vi_tol=config.vi_tol)
    if not report.passed:
        return None
    r1 = rs_value_iteration(spec, profile.nu, 1, tol=config.vi_tol)
    r2 = rs_value_iteration(spec, profile.mu, 2, tol=config.vi_tol)
    return ErgodicSolution(
        lambda1=r1.lam,
        lambda2=r2.lam,
        h1=r1.h,
        h2=r2.h,
        profile=profile,
        normalization=(float(r1.h[spec.ref_state]), float(r2.h[spec.ref_state])),
    )


def _fallback_single_state(
    spec: GameSpec, config: NashSearchConfig
) -> ErgodicSolution | None:
    # single state: the return cycle is one step, so the long-run game is the
    # bimatrix game with entries exp(theta r_i)
    support_space = (2**spec.n_actions_u - 1) * (2**spec.n_actions_v - 1)
    if support_space > config.enumeration_cap:
        return None
    A = np.exp(spec.theta * spec.r1[0])
    B = np.exp(spec.theta * spec.r2[0])
    for eq in bimatrix_nash(A, B):
        profile = StationaryProfile(mu=eq.x[None, :], nu=eq.y[None, :])
        solution = _solution_at(spec, profile, config)
        if solution is not None:
            return solution
    return None


def _fallback_pure_enumeration(
    spec: GameSpec, config: NashSearchConfig
) -> ErgodicSolution | None:
    n, nu, nv = spec.n_states, spec.n_actions_u, spec.n_actions_v
    if (nu * nv) ** n > config.enumeration_cap:
        return None
    for u_map in itertools.product(range(nu), repeat=n):
        mu = _pure_rows(nu, np.asarray(u_map))
        for v_map in itertools.product(range(nv), repeat=n):
            profile = StationaryProfile(mu=mu, nu=_pure_rows(nv, np.asarray(v_map)))
            # cheap mutual-best-response screen before the full verification
            br1 = rs_value_iteration(spec, profile.nu, 1, tol=config.vi_tol)
            if any(u_map[k] not in br1.argmin_sets[k] for k in range(n)):
                continue
            br2 = rs_value_iteration(spec, profile.mu, 2, tol=config.vi_tol)
            if any(v_map[k] not in br2.argmin_sets[k] for k in range(n)):
                continue
            solution = _solution_at(spec, profile, config)
            if solution is not None:
                return solution
    return None


def nash_search_ergodic(
    spec: GameSpec, config: NashSearchConfig | None = None
) -> ErgodicSolution | ErgodicSearchFailure:
    """Stationary Nash profile via damped iterated best response.

    Starts from the uniform profile and alternates damped moves toward each
    player's lowest-index optimal response.  Once the candidate pure response
    pair repeats, it is tested for mutual optimality and verified.  On a
    cycle (profile hash repeat) or round exhaustion, falls back to exact
    support enumeration (single-state games) or pure-assignment enumeration
    under the configured cap; if everything fails, a structured failure
    report is returned (equilibrium existence is guaranteed, a constructive
    algorithm is not).
    """
    config = config or NashSearchConfig()
    n = spec.n_states
    profile = uniform_profile(spec)
    seen = {_profile_hash(profile, config.hash_resolution)}
    prev_candidate: tuple[tuple[int, ...], tuple[int, ...]] | None = None
    cycle = False
    rounds = 0

    for rounds in range(1, config.max_rounds + 1):
        br1 = rs_value_iteration(spec, profile.nu, 1, tol=config.vi_tol)
        u_pick = tuple(s[0] for s in br1.argmin_sets)
        mu_new = (1.0 - config.damping) * profile.mu + config.damping * _pure_rows(
            spec.n_actions_u, np.asarray(u_pick)
        )
        br2 = rs_value_iteration(spec, mu_new, 2, tol=config.vi_tol)
        v_pick = tuple(s[0] for s in br2.argmin_sets)
        nu_new = (1.0 - config.damping) * profile.nu + config.damping * _pure_rows(
            spec.n_actions_v, np.asarray(v_pick)
        )
        candidate = (u_pick, v_pick)
        if candidate == prev_candidate:
            cand_profile = StationaryProfile(
                mu=_pure_rows(spec.n_actions_u, np.asarray(u_pick)),
                nu=_pure_rows(spec.n_actions_v, np.asarray(v_pick)),
            )
            cand_br1 = rs_value_iteration(spec, cand_profile.nu, 1, tol=config.vi_tol)
            cand_br2 = rs_value_iteration(spec, cand_profile.mu, 2, tol=config.vi_tol)
            mutual = all(
                u_pick[k] in cand_br1.argmin_sets[k]
                and v_pick[k] in cand_br2.argmin_sets[k]
                for k in range(n)
            )
            if mutual:
                solution = _solution_at(spec, cand_profile, config)
                if solution is not None:
                    return solution
        prev_candidate = candidate
        profile = StationaryProfile(mu=mu_new, nu=nu_new)
        key = _profile_hash(profile, config.hash_resolution)
        if key in seen:
            cycle = True
            break
        seen.add(key)

    fallback: ErgodicSolution | None
    if n == 1:
        fallback = _fallback_single_state(spec, config)
    else:
        fallback = _fallback_pure_enumeration(spec, config)
    if fallback is not None:
        return fallback
    return ErgodicSearchFailure(
        reason=(
            "best-response iteration "
            + ("cycled" if cycle else "exhausted its rounds")
            + " and fallback enumeration found no verifiable equilibrium"
        ),
        rounds=rounds,
        cycle_detected=cycle,
        fallback_exhausted=True,
        last_profile=profile,
    )
