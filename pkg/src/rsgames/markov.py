"""Ergodicity and recurrence certificates for the controlled chain.

Everything here quantifies how fast the state process forgets its start,
uniformly over both players' stationary strategies:

- the Dobrushin coefficient ``delta`` (contraction of one-step kernels),
- irreducibility/aperiodicity of every pure stationary profile,
- invariant measures and the geometric decay of t-step kernels,
- return-time moments ``E_k[sigma_A]`` and ``E_k[R^sigma_A]``,
- the largest geometric rate ``R0`` that is uniformly feasible, with its
  moment bound ``B0`` and mean-return bound ``L0``,
- a Lyapunov drift certificate ``(V, eta, b, C)``,
- the small-cost verdict ``||r_i||_inf <= ln(R0) / (3 * theta_max)``.

Quantities that are suprema over *all* pure stationary profiles are computed
with max-Bellman operators: per-state action choices are independent, so the
supremum over profiles of a first-passage functional satisfies a one-step
maximization recursion, and the worst-case spectral radius of the taboo
kernel is the growth rate of the corresponding monotone max-operator.  This
gives the exact all-profile value without enumerating the profile space.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import networkx as nx
import numpy as np

from rsgames.model import GameSpec, validate

SLACK_TOL = 1e-9  # tolerance on the uniform-ergodicity slack check


@dataclass(frozen=True)
class A1Result:
    """Verdict for irreducibility + aperiodicity over all pure profiles."""

    holds: bool
    reason: str
    method: str
    witness_u: tuple[int, ...] | None = None  # violating pure profile, if any
    witness_v: tuple[int, ...] | None = None


@dataclass(frozen=True)
class LyapunovCertificate:
    """Verified drift certificate: sum_j V(j) q(j|i,u,v) <= eta V(i) + b 1_C(i)."""

    V: np.ndarray
    eta: float
    b: float
    C: tuple[int, ...]
    verified: bool


@dataclass(frozen=True)
class ErgodicityDecay:
    """Per-step total-variation distances against the 2 delta^t envelope."""

    t: np.ndarray
    tv: np.ndarray
    bound: np.ndarray
    slack: np.ndarray
    passed: bool


@dataclass(frozen=True)
class RecurrenceReport:
    delta: float
    a1_holds: bool
    a2_holds: bool
    a3_holds: bool
    diagnostics: tuple[str, ...]
    R0: float | None
    B0: float | None
    L0: float | None
    lyapunov: LyapunovCertificate | None
    small_cost_threshold: float | None

    @property
    def all_hold(self) -> bool:
        return self.a1_holds and self.a2_holds and self.a3_holds

    def to_dict(self) -> dict:
        lyap = None
        if self.lyapunov is not None:
            lyap = {
                "V": self.lyapunov.V.tolist(),
                "eta": self.lyapunov.eta,
                "b": self.lyapunov.b,
                "C": list(self.lyapunov.C),
                "verified": self.lyapunov.verified,
            }
        return {
            "delta": self.delta,
            "a1_holds": self.a1_holds,
            "a2_holds": self.a2_holds,
            "a3_holds": self.a3_holds,
            "all_hold": self.all_hold,
            "diagnostics": list(self.diagnostics),
            "R0": self.R0,
            "B0": self.B0,
            "L0": self.L0,
            "small_cost_threshold": self.small_cost_threshold,
            "lyapunov": lyap,
        }


def dobrushin_delta(spec: GameSpec) -> float:
    """Half the largest total-variation distance between any two kernel rows.

    The maximum ranges over all (state, u, v) index triples on both sides, so
    the resulting coefficient bounds the contraction of the one-step kernel
    uniformly over states and both players' actions.
    """
    rows = spec.q.reshape(-1, spec.n_states)
    worst = 0.0
    for i in range(rows.shape[0] - 1):
        d = np.abs(rows[i + 1 :] - rows[i]).sum(axis=1).max()
        worst = max(worst, float(d))
    return 0.5 * worst


def _state_supports(spec: GameSpec) -> list[list[tuple[frozenset, tuple[int, int]]]]:
    """Distinct next-state supports per state, each with a witness (u, v)."""
    out: list[list[tuple[frozenset, tuple[int, int]]]] = []
    for k in range(spec.n_states):
        seen: dict[frozenset, tuple[int, int]] = {}
        for u in range(spec.n_actions_u):
            for v in range(spec.n_actions_v):
                supp = frozenset(np.flatnonzero(spec.q[k, u, v] > 0.0).tolist())
                seen.setdefault(supp, (u, v))
        out.append(list(seen.items()))
    return out


def _graph_period(graph: nx.DiGraph, nodes: list[int]) -> int:
    """gcd of cycle lengths within one strongly connected node set (0 if acyclic)."""
    sub = graph.subgraph(nodes)
    root = nodes[0]
    depth = {root: 0}
    order = [root]
    for a in order:
        for b in sub.successors(a):
            if b not in depth:
                depth[b] = depth[a] + 1
                order.append(b)
    g = 0
    for a, b in sub.edges():
        if a in depth and b in depth:
            g = math.gcd(g, depth[a] + 1 - depth[b])
    return abs(g)


def _closable_witness(supports, n):
    """Closed proper subset reachable by some pure profile, or None.

    A set S is closable when each of its states has an action pair whose
    support stays inside S; such an S (proper, nonempty) certifies a
    reducible pure profile.  Largest closable subsets avoiding each state are
    computed by fixed-point pruning, so no profile enumeration is needed.
    """
    for j in range(n):
        alive = set(range(n)) - {j}
        changed = True
        while changed and alive:
            changed = False
            for k in list(alive):
                if not any(s <= alive for s, _ in supports[k]):
                    alive.discard(k)
                    changed = True
        if alive:
            u_map, v_map = [0] * n, [0] * n
            for k in alive:
                for s, (u, v) in supports[k]:
                    if s <= alive:
                        u_map[k], v_map[k] = u, v
                        break
            return sorted(alive), tuple(u_map), tuple(v_map)
    return None


def _periodic_witness(supports, n, node_cap=200_000):
    """Search for a pure profile whose graph is d-periodic for some d >= 2.

    Backtracks over cyclic level assignments gamma: states -> Z_d with
    gamma(0) = 0; a state is satisfiable if some support maps entirely to
    level gamma(k)+1.  Returns (profile, d), None if no witness exists, or
    the string "cap" when the node budget runs out.
    """
    for d in range(2, n + 1):
        gamma = [-1] * n
        gamma[0] = 0
        budget = [node_cap]

        def consistent(k: int) -> bool:
            want = (gamma[k] + 1) % d
            for s, _ in supports[k]:
                if all(gamma[j] in (-1, want) for j in s):
                    return True
            return False

        def assign(i: int):
            if budget[0] <= 0:
                return "cap"
            budget[0] -= 1
            if i == n:
                u_map, v_map = [0] * n, [0] * n
                for k in range(n):
                    want = (gamma[k] + 1) % d
                    for s, (u, v) in supports[k]:
                        if all(gamma[j] == want for j in s):
                            u_map[k], v_map[k] = u, v
                            break
                    else:
                        return None
                return (tuple(u_map), tuple(v_map), d)
            choices = [gamma[i]] if gamma[i] >= 0 else list(range(d))
            for level in choices:
                gamma[i] = level
                if all(consistent(k) for k in range(i + 1) if gamma[k] >= 0):
                    hit = assign(i + 1)
                    if hit is not None:
                        return hit
            if i > 0:
                gamma[i] = -1
            return None

        found = assign(1 if n > 1 else n)
        if found == "cap":
            return "cap"
        if found is not None:
            return found
    return None


def check_irreducible_aperiodic(
    spec: GameSpec, enumeration_cap: int = 20_000
) -> A1Result:
    """Decide whether every pure stationary profile induces an irreducible,
    aperiodic chain.

    Mixed profiles only add edges to some pure profile's support graph, so
    the pure-profile universe is sufficient for all stationary profiles.
    When the number of distinct per-state support combinations is small the
    check enumerates them directly; otherwise reducibility is decided by the
    closable-set fixed point and periodicity by the cyclic-level search.
    """
    n = spec.n_states
    supports = _state_supports(spec)
    combos = 1
    for per_state in supports:
        combos *= len(per_state)
        if combos > enumeration_cap:
            break

    if combos <= enumeration_cap:
        for picks in itertools.product(*supports):
            graph = nx.DiGraph()
            graph.add_nodes_from(range(n))
            for k, (supp, _uv) in enumerate(picks):
                graph.add_edges_from((k, j) for j in supp)
            u_map = tuple(uv[0] for _s, uv in picks)
            v_map = tuple(uv[1] for _s, uv in picks)
            if not nx.is_strongly_connected(graph):
                return A1Result(
                    False, "reducible pure profile", "enumeration", u_map, v_map
                )
            if _graph_period(graph, list(range(n))) != 1:
                return A1Result(
                    False, "periodic pure profile", "enumeration", u_map, v_map
                )
        return A1Result(True, "all pure support profiles pass", "enumeration")

    reducible = _closable_witness(supports, n)
    if reducible is not None:
        closed, u_map, v_map = reducible
        return A1Result(
            False,
            f"pure profile keeps the chain inside states {closed}",
            "closable-set",
            u_map,
            v_map,
        )

    # Edges common to every action pair at a state appear in every profile;
    # a cycle-gcd of 1 among them makes every (irreducible) profile aperiodic.
    common = nx.DiGraph()
    common.add_nodes_from(range(n))
    for k, per_state in enumerate(supports):
        shared = frozenset.intersection(*(s for s, _uv in per_state))
        common.add_edges_from((k, j) for j in shared)
    for comp in nx.strongly_connected_components(common):
        nodes = sorted(comp)
        if common.subgraph(nodes).number_of_edges() == 0:
            continue
        if _graph_period(common, nodes) == 1:
            return A1Result(True, "common-edge cycles have gcd 1", "closable-set")

    periodic = _periodic_witness(supports, n)
    if periodic == "cap":
        return A1Result(
            False,
            "aperiodicity undecided within the search budget (conservative fail)",
            "period-search",
        )
    if periodic is not None:
        u_map, v_map, d = periodic
        return A1Result(
            False, f"pure profile with period {d}", "period-search", u_map, v_map
        )
    return A1Result(True, "no periodic pure profile exists", "period-search")


def _require_square_stochastic(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"P must be square, got shape {P.shape}")
    if np.any(P < 0) or np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-10):
        raise ValueError("P is not row-stochastic")
    return P


def invariant_measure(P: np.ndarray, residual_tol: float = 1e-10) -> np.ndarray:
    """Unique stationary distribution of an irreducible stochastic matrix.

    Solves ``eta P = eta`` with the normalization ``sum(eta) = 1`` by a dense
    linear solve plus one step of iterative refinement.
    """
    P = _require_square_stochastic(P)
    n = P.shape[0]
    graph = nx.DiGraph((int(a), int(b)) for a, b in np.argwhere(P > 0))
    graph.add_nodes_from(range(n))
    if not nx.is_strongly_connected(graph):
        raise ValueError("P is reducible; invariant measure is not unique")
    A = P.T - np.eye(n)
    A[-1, :] = 1.0
    b = np.zeros(n)
    b[-1] = 1.0
    eta = np.linalg.solve(A, b)
    eta += np.linalg.solve(A, b - A @ eta)
    eta = np.clip(eta, 0.0, None)
    eta /= eta.sum()
    resid = float(np.max(np.abs(eta @ P - eta)))
    if resid > residual_tol:
        raise ValueError(f"invariant-measure residual {resid} exceeds {residual_tol}")
    return eta


def uniform_ergodicity_check(
    P: np.ndarray, eta: np.ndarray, delta: float, t_max: int = 20
) -> ErgodicityDecay:
    """Compare worst-start total variation of ``P^t`` rows against ``2 delta^t``."""
    P = _require_square_stochastic(P)
    ts = np.arange(1, t_max + 1)
    tv = np.empty(t_max)
    Pt = np.eye(P.shape[0])
    for i, _t in enumerate(ts):
        Pt = Pt @ P
        tv[i] = np.abs(Pt - eta[None, :]).sum(axis=1).max()
    bound = 2.0 * delta**ts.astype(float)
    slack = bound - tv
    return ErgodicityDecay(
        t=ts, tv=tv, bound=bound, slack=slack, passed=bool(np.all(slack >= -SLACK_TOL))
    )


def _taboo_system(P: np.ndarray, target: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Index split (inside, outside) for a target state set."""
    n = P.shape[0]
    inside = np.asarray(sorted(set(int(a) for a in target)), dtype=int)
    if inside.size == 0:
        raise ValueError("target set must be nonempty")
    if inside.min() < 0 or inside.max() >= n:
        raise ValueError(f"target set {inside.tolist()} outside 0..{n - 1}")
    mask = np.ones(n, dtype=bool)
    mask[inside] = False
    outside = np.flatnonzero(mask)
    return inside, outside


def expected_return_time(P: np.ndarray, target) -> np.ndarray:
    """Per-state expected first return time to a target set.

    From outside the set the return time equals the hitting time, which
    satisfies the taboo linear system ``m = 1 + Q m``; from anywhere the
    first-step decomposition gives ``m(k) = 1 + sum_{j not in A} P[k,j] m(j)``.
    """
    P = _require_square_stochastic(P)
    _inside, outside = _taboo_system(P, np.asarray(target))
    if outside.size == 0:
        return np.ones(P.shape[0])
    Q = P[np.ix_(outside, outside)]
    if np.max(np.abs(np.linalg.eigvals(Q))) >= 1.0 - 1e-12:
        raise ValueError("taboo system singular: target set unreachable from outside")
    m_out = np.linalg.solve(np.eye(outside.size) - Q, np.ones(outside.size))
    return 1.0 + P[:, outside] @ m_out


def geometric_moment(P: np.ndarray, R: float, target) -> np.ndarray:
    """Per-state ``E_k[R^{sigma_A}]`` for the return time to a target set.

    Finite exactly when the spectral radius of ``R * Q`` is below 1, with
    ``Q`` the kernel restricted to the complement of the target set.
    """
    P = _require_square_stochastic(P)
    if R <= 1.0:
        raise ValueError(f"R must exceed 1, got {R}")
    inside, outside = _taboo_system(P, np.asarray(target))
    if outside.size == 0:
        return np.full(P.shape[0], R)
    Q = P[np.ix_(outside, outside)]
    rho = float(np.max(np.abs(np.linalg.eigvals(R * Q))))
    if rho >= 1.0:
        raise ValueError(
            f"E[R^sigma] diverges: spectral radius of R*Q is {rho:.6g} >= 1"
        )
    hit_mass = P[np.ix_(outside, inside)].sum(axis=1)
    g_out = np.linalg.solve(np.eye(outside.size) - R * Q, R * hit_mass)
    return R * (P[:, inside].sum(axis=1) + P[:, outside] @ g_out)


# --- all-profile (max-operator) certificates --------------------------------


def _taboo_max_apply(q_out: np.ndarray, f: np.ndarray) -> np.ndarray:
    """One sweep of (T f)(k) = max_{u,v} sum_{j outside} q[k,u,v,j] f(j)."""
    return np.einsum("kuvj,j->kuv", q_out, f).reshape(q_out.shape[0], -1).max(axis=1)


def worst_taboo_spectral_radius(
    spec: GameSpec,
    ref_state: int | None = None,
    tol: float = 1e-12,
    max_iter: int = 200_000,
) -> tuple[float, float]:
    """Bracket sup over pure profiles of the taboo-kernel spectral radius.

    Power iteration with a unit diagonal shift on the monotone max-operator;
    Collatz-Wielandt ratios of any positive iterate bracket the growth rate.
    Returns ``(rho_lo, rho_hi)`` with the guarantee rho <= rho_hi.
    """
    ref = spec.ref_state if ref_state is None else ref_state
    outside = [k for k in range(spec.n_states) if k != ref]
    if not outside:
        return 0.0, 0.0
    q_out = spec.q[np.ix_(outside, range(spec.n_actions_u), range(spec.n_actions_v), outside)]
    shift = 1.0
    f = np.ones(len(outside))
    lo, hi = 0.0, math.inf
    stall = 0
    for _ in range(max_iter):
        tf = _taboo_max_apply(q_out, f) + shift * f
        ratios = tf / f
        new_lo = max(lo, float(ratios.min()) - shift)
        new_hi = min(hi, float(ratios.max()) - shift)
        improved = (new_lo - lo) + (hi - new_hi) if math.isfinite(hi) else 1.0
        lo, hi = new_lo, new_hi
        f = tf / tf.max()
        if hi - lo <= tol * max(1.0, abs(hi)):
            break
        stall = stall + 1 if improved <= 1e-16 else 0
        if stall >= 500:  # reducible taboo structure: brackets stop tightening
            break
    return max(lo, 0.0), max(hi, lo, 0.0)


def max_feasible_R(
    spec: GameSpec,
    ref_state: int | None = None,
    safety_margin: float = 0.01,
    r_cap: float = 1e6,
    bisect_tol: float = 1e-7,
) -> tuple[float, float]:
    """Largest uniformly feasible geometric rate for returns to the reference
    state, shrunk by a relative safety margin, with its moment bound.

    Bisects R over ``(1, r_cap]`` on the test "spectral radius of R times the
    worst-case taboo operator < 1"; the supremum over profiles of the moment
    ``E_k[R0^{sigma_ref}]`` is then the fixed point of the corresponding
    max-Bellman recursion, and ``B0`` is its maximum over start states.
    """
    ref = spec.ref_state if ref_state is None else ref_state
    _rho_lo, rho_hi = worst_taboo_spectral_radius(spec, ref)
    if rho_hi >= 1.0:
        raise ValueError(
            f"no feasible R > 1: worst-case taboo spectral radius is {rho_hi:.6g}"
        )
    if r_cap * rho_hi < 1.0:
        # every R up to the cap is feasible; the cap is exact, no margin needed
        R0 = r_cap
    else:
        lo, hi = 1.0, r_cap
        while hi - lo > bisect_tol * hi:
            mid = 0.5 * (lo + hi)
            if mid * rho_hi < 1.0:
                lo = mid
            else:
                hi = mid
        R0 = (1.0 - safety_margin) * lo
        if R0 <= 1.0:
            # near-critical mixing: take the margin on the excess over 1 so
            # that 1 < R0 < sup still holds strictly
            R0 = 1.0 + (1.0 - safety_margin) * (lo - 1.0)
        if R0 <= 1.0:
            raise ValueError(f"no usable geometric rate: boundary estimate {lo}")

    B0 = float(np.max(hitting_moment_upper(spec, R0, ref)[1]))
    return R0, B0


def hitting_moment_upper(
    spec: GameSpec, R: float, ref: int, tol: float = 1e-13, max_iter: int = 1_000_000
) -> tuple[np.ndarray, np.ndarray]:
    """sup over pure profiles of E_k[R^{tau_ref}] (outside) and E_k[R^{sigma_ref}] (all k).

    Monotone value iteration on g = R max_{u,v} (q(ref|.) + sum_out q g).
    """
    n = spec.n_states
    outside = [k for k in range(n) if k != ref]
    if not outside:
        return np.zeros(0), np.full(n, R)
    q_out = spec.q[np.ix_(outside, range(spec.n_actions_u), range(spec.n_actions_v), outside)]
    hit = spec.q[outside, :, :, ref]
    g = np.zeros(len(outside))
    for _ in range(max_iter):
        g_new = (
            R
            * (hit + np.einsum("kuvj,j->kuv", q_out, g))
            .reshape(len(outside), -1)
            .max(axis=1)
        )
        if np.max(np.abs(g_new - g)) <= tol * max(1.0, float(g_new.max())):
            g = g_new
            break
        g = g_new
    else:
        raise ValueError(f"moment recursion did not settle in {max_iter} sweeps")
    stage = spec.q[:, :, :, ref] + np.einsum("kuvj,j->kuv", spec.q[:, :, :, outside], g)
    full = R * stage.reshape(n, -1).max(axis=1)
    return g, full


def uniform_mean_return_bound(
    spec: GameSpec, ref: int, tol: float = 1e-13, max_iter: int = 1_000_000
) -> float:
    """L0: sup over pure profiles and start states of E_k[sigma_ref]."""
    n = spec.n_states
    outside = [k for k in range(n) if k != ref]
    if not outside:
        return 1.0
    q_out = spec.q[np.ix_(outside, range(spec.n_actions_u), range(spec.n_actions_v), outside)]
    m = np.zeros(len(outside))
    for _ in range(max_iter):
        m_new = 1.0 + np.einsum("kuvj,j->kuv", q_out, m).reshape(len(outside), -1).max(
            axis=1
        )
        if np.max(np.abs(m_new - m)) <= tol * max(1.0, float(m_new.max())):
            m = m_new
            break
        m = m_new
    else:
        raise ValueError(f"mean-return recursion did not settle in {max_iter} sweeps")
    stage = 1.0 + np.einsum("kuvj,j->kuv", spec.q[:, :, :, outside], m).reshape(n, -1).max(
        axis=1
    )
    return float(stage.max())


def lyapunov_certificate(
    spec: GameSpec, R0: float, ref_state: int | None = None
) -> LyapunovCertificate:
    """Drift certificate with C = {ref}, V the worst-case hitting moment.

    ``V(k) = sup over pure profiles of E_k[R0^{tau_C}]`` satisfies the drift
    inequality off C with ``eta = 1/R0`` by construction; the certificate is
    re-verified against every (state, u, v) triple and the minimal ``b`` on C
    is reported.
    """
    ref = spec.ref_state if ref_state is None else ref_state
    n = spec.n_states
    g_out, _full = hitting_moment_upper(spec, R0, ref)
    V = np.ones(n)
    outside = [k for k in range(n) if k != ref]
    V[outside] = g_out
    V = np.maximum(V, 1.0)
    eta = 1.0 / R0

    drift = np.einsum("kuvj,j->kuv", spec.q, V).reshape(n, -1).max(axis=1)
    b_needed = drift - eta * V
    off = [k for k in range(n) if k != ref]
    bad = [k for k in off if b_needed[k] > 1e-9 * max(1.0, abs(drift[k]))]
    if bad:
        k = bad[0]
        flat = int(np.argmax(np.einsum("uvj,j->uv", spec.q[k], V).reshape(-1)))
        u, v = divmod(flat, spec.n_actions_v)
        raise ValueError(
            f"drift inequality fails off C at state {k} under actions (u={u}, v={v})"
        )
    b = float(b_needed[ref])
    return LyapunovCertificate(V=V, eta=eta, b=b, C=(ref,), verified=True)


def check_assumptions(spec: GameSpec) -> RecurrenceReport:
    """Aggregate verdicts for the irreducibility, uniform-ergodicity and
    small-cost assumptions, together with the recurrence constants."""
    validate(spec).raise_if_failed()
    notes: list[str] = []

    a1 = check_irreducible_aperiodic(spec)
    if not a1.holds:
        witness = ""
        if a1.witness_u is not None:
            witness = f" (witness u={list(a1.witness_u)}, v={list(a1.witness_v)})"
        notes.append(f"(A1) fails: {a1.reason}{witness}")
    delta = dobrushin_delta(spec)
    a2 = delta < 1.0
    if not a2:
        notes.append(f"(A2) fails: Dobrushin coefficient delta={delta} is not < 1")

    R0 = B0 = L0 = threshold = None
    lyap = None
    a3 = False
    if a1.holds and a2:
        R0, B0 = max_feasible_R(spec)
        L0 = uniform_mean_return_bound(spec, spec.ref_state)
        lyap = lyapunov_certificate(spec, R0)
        threshold = math.log(R0) / (3.0 * spec.theta_max)
        sup1, sup2 = spec.cost_sup(1), spec.cost_sup(2)
        a3 = sup1 <= threshold and sup2 <= threshold
        if not a3:
            notes.append(
                f"(A3) fails: need max(||r1||, ||r2||) = {max(sup1, sup2)} <= "
                f"ln(R0)/(3 theta_max) = {threshold}"
            )
        else:
            notes.append(
                f"(A3) margin: threshold {threshold}, ||r1||={sup1}, ||r2||={sup2}"
            )
    else:
        notes.append("(A3) not evaluated: requires (A1) and (A2) for R0")

    return RecurrenceReport(
        delta=delta,
        a1_holds=a1.holds,
        a2_holds=a2,
        a3_holds=a3,
        diagnostics=tuple(notes),
        R0=R0,
        B0=B0,
        L0=L0,
        lyapunov=lyap,
        small_cost_threshold=threshold,
    )
