import itertools

import numpy as np
import pytest

from conftest import random_game
from rsgames.discounted import (
    best_response_value_discounted,
    build_stage_game,
    evaluate_exp_cost,
    evaluate_linear_cost,
    exp_bellman_apply,
    horizon_for_tail,
    solve_discounted,
    tail_slack_for_horizon,
    verify_nash_discounted,
)
from rsgames.model import GameSpec, MarkovProfile, StationaryProfile


def enumerate_paths_exp(spec, profile, player, k0):
    """Oracle: explicit sum over all (state, u, v) paths of p * exp(theta S)."""
    r = spec.cost(player)
    T = profile.horizon
    total = 0.0
    stack = [(0, k0, 1.0, 0.0)]
    while stack:
        t, k, prob, cost = stack.pop()
        if t == T:
            total += prob * np.exp(spec.theta * cost)
            continue
        stage = profile.stages[t]
        for u in range(spec.n_actions_u):
            pu = stage.mu[k, u]
            if pu == 0.0:
                continue
            for v in range(spec.n_actions_v):
                pv = stage.nu[k, v]
                if pv == 0.0:
                    continue
                w = cost + spec.alpha**t * r[k, u, v]
                for j in range(spec.n_states):
                    pj = spec.q[k, u, v, j]
                    if pj > 0.0:
                        stack.append((t + 1, j, prob * pu * pv * pj, w))
    return total


def pure_markov_strategies(n_states, n_actions, T):
    """All maps (t, k) -> action, as (T, n_states) index arrays."""
    per_stage = list(itertools.product(range(n_actions), repeat=n_states))
    for combo in itertools.product(per_stage, repeat=T):
        yield np.array(combo)


def constant_cost_spec(q, c, theta=0.8, alpha=0.3):
    n, nu, nv = q.shape[0], q.shape[1], q.shape[2]
    r = np.full((n, nu, nv), c)
    return GameSpec(r1=r, r2=r.copy(), q=q, theta=theta, theta_max=theta, alpha=alpha)


class TestExpBellmanApply:
    def test_flat_objective(self):
        spec = random_game(0, n=2, cost_scale=0.0)
        value, argmin = exp_bellman_apply(
            spec, 0.5, np.ones(2), np.full(spec.n_actions_v, 0.5), 0, 1
        )
        assert value == pytest.approx(1.0)
        assert argmin == tuple(range(spec.n_actions_u))

    def test_single_action_no_choice(self):
        rng = np.random.default_rng(1)
        q = rng.dirichlet(np.ones(3), size=(3, 1, 2))
        r = rng.uniform(size=(3, 1, 2))
        spec = GameSpec(r1=r, r2=r, q=q, theta=0.5, theta_max=0.5, alpha=0.4)
        cont = rng.uniform(0.5, 2.0, size=3)
        opp = np.array([0.3, 0.7])
        value, argmin = exp_bellman_apply(spec, 0.5, cont, opp, 1, 1)
        direct = sum(
            opp[v] * np.exp(0.5 * r[1, 0, v]) * (q[1, 0, v] @ cont) for v in range(2)
        )
        assert value == pytest.approx(direct)
        assert argmin == (0,)

    def test_matches_bruteforce_over_actions(self):
        spec = random_game(2, n=2, nu=3, nv=2)
        rng = np.random.default_rng(3)
        cont = rng.uniform(0.5, 2.0, size=2)
        opp = rng.dirichlet(np.ones(2))
        value, argmin = exp_bellman_apply(spec, 0.7, cont, opp, 0, 1)
        per_action = [
            sum(
                opp[v] * np.exp(0.7 * spec.r1[0, u, v]) * (spec.q[0, u, v] @ cont)
                for v in range(2)
            )
            for u in range(3)
        ]
        assert value == pytest.approx(min(per_action))
        assert argmin == (int(np.argmin(per_action)),)

    def test_monotone_in_continuation(self):
        spec = random_game(4, n=3)
        rng = np.random.default_rng(5)
        for _ in range(10):
            f = rng.uniform(0.5, 1.5, size=3)
            g = f + rng.uniform(0.0, 0.5, size=3)
            opp = rng.dirichlet(np.ones(spec.n_actions_v))
            vf, _ = exp_bellman_apply(spec, 0.6, f, opp, 0, 1)
            vg, _ = exp_bellman_apply(spec, 0.6, g, opp, 0, 1)
            assert vf <= vg + 1e-12

    def test_rejects_nonpositive_continuation(self):
        spec = random_game(6, n=2)
        with pytest.raises(ValueError):
            exp_bellman_apply(spec, 0.5, np.array([1.0, 0.0]), np.ones(2) / 2, 0, 1)


class TestBuildStageGame:
    def test_symmetric_costs_give_equal_matrices(self):
        spec = random_game(7, n=2)
        spec = GameSpec(
            r1=spec.r1, r2=spec.r1, q=spec.q,
            theta=spec.theta, theta_max=spec.theta_max, alpha=spec.alpha,
        )
        game = build_stage_game(spec, 0, 0.5, np.ones(2), np.ones(2))
        assert np.allclose(game.A, game.B)

    def test_zero_weight_limit(self):
        spec = random_game(8, n=2)
        rng = np.random.default_rng(9)
        phi = rng.uniform(0.5, 2.0, size=2)
        game = build_stage_game(spec, 1, 1e-14, phi, phi)
        assert np.allclose(game.A, spec.q[1] @ phi, rtol=1e-10)

    def test_two_by_two_hand_computation(self):
        spec = random_game(10, n=2, nu=2, nv=2)
        rng = np.random.default_rng(11)
        phi1 = rng.uniform(0.5, 2.0, size=2)
        phi2 = rng.uniform(0.5, 2.0, size=2)
        theta_t = 0.37
        game = build_stage_game(spec, 0, theta_t, phi1, phi2)
        for u in range(2):
            for v in range(2):
                a = np.exp(theta_t * spec.r1[0, u, v]) * sum(
                    phi1[j] * spec.q[0, u, v, j] for j in range(2)
                )
                assert game.A[u, v] == pytest.approx(a)

    def test_shift_covariance_scales_entries_and_keeps_equilibria(self):
        from rsgames.bimatrix import bimatrix_nash

        spec = random_game(12, n=2, nu=2, nv=2)
        c = 0.25
        shifted = GameSpec(
            r1=spec.r1 + c, r2=spec.r2, q=spec.q,
            theta=spec.theta, theta_max=spec.theta_max, alpha=spec.alpha,
        )
        theta_t = 0.5
        rng = np.random.default_rng(13)
        phi1 = rng.uniform(0.5, 2.0, size=2)
        phi2 = rng.uniform(0.5, 2.0, size=2)
        g0 = build_stage_game(spec, 0, theta_t, phi1, phi2)
        g1 = build_stage_game(shifted, 0, theta_t, phi1, phi2)
        assert np.allclose(g1.A, np.exp(theta_t * c) * g0.A)
        assert np.allclose(g1.B, g0.B)
        e0 = bimatrix_nash(g0.A, g0.B)
        e1 = bimatrix_nash(g1.A, g1.B)
        assert [e.support_x for e in e0] == [e.support_x for e in e1]
        assert [e.support_y for e in e0] == [e.support_y for e in e1]


class TestHorizon:
    def test_formula_and_floor(self):
        spec = random_game(14, theta=0.8, alpha=0.3, cost_scale=1.0)
        T = horizon_for_tail(spec, 1e-6)
        r_inf = spec.cost_sup_max()
        assert spec.theta * spec.alpha**T * r_inf / (1 - spec.alpha) <= np.log1p(1e-6)
        assert spec.theta * spec.alpha ** (T - 1) * r_inf / (1 - spec.alpha) > np.log1p(1e-6)

    def test_zero_cost_and_zero_alpha(self):
        spec = random_game(15, cost_scale=0.0)
        assert horizon_for_tail(spec, 1e-12) == 1
        spec2 = random_game(16, alpha=0.0)
        assert horizon_for_tail(spec2, 1e-12) == 1

    def test_huge_eps(self):
        spec = random_game(17)
        assert horizon_for_tail(spec, 1e6) == 1


class TestSolveDiscounted:
    def test_constant_cost_value(self):
        rng = np.random.default_rng(18)
        q = rng.dirichlet(np.ones(2), size=(2, 2, 2))
        c, alpha = 0.7, 0.3
        spec = constant_cost_spec(q, c, alpha=alpha)
        profile, table = solve_discounted(spec, eps=1e-10)
        T = table.horizon
        expected = c * (1 - alpha**T) / (1 - alpha)
        assert np.allclose(table.psi1[0], expected, atol=1e-12)
        assert abs(expected - c / (1 - alpha)) <= 1e-9  # within the tail budget

    def test_zero_cost_phi_is_one_exactly(self):
        # dyadic rows sum to exactly 1.0, so the neutral exponential is exact
        q = np.zeros((2, 2, 2, 2))
        q[..., 0] = [[0.25, 0.5], [0.75, 0.125]]
        q[..., 1] = 1.0 - q[..., 0]
        spec = GameSpec(
            r1=np.zeros((2, 2, 2)), r2=np.zeros((2, 2, 2)), q=q,
            theta=0.5, theta_max=0.5, alpha=0.4,
        )
        _profile, table = solve_discounted(spec, eps=1e-8)
        assert np.all(table.phi1 == 1.0)
        assert np.all(table.phi2 == 1.0)

    def test_matches_path_enumeration_oracle(self):
        spec = random_game(20, n=2, nu=2, nv=2, theta=0.8, alpha=0.3)
        profile, table = solve_discounted(spec, eps=1e-3)
        assert profile.horizon <= 8
        for k in range(spec.n_states):
            for player in (1, 2):
                oracle = enumerate_paths_exp(spec, profile, player, k)
                got = (table.phi1 if player == 1 else table.phi2)[0, k]
                assert got == pytest.approx(oracle, abs=1e-12)

    def test_value_table_bounds(self):
        spec = random_game(21, n=3, theta=0.6, alpha=0.5)
        _profile, table = solve_discounted(spec, eps=1e-6)
        for player, phi, psi in ((1, table.phi1, table.psi1), (2, table.phi2, table.psi2)):
            sup = spec.cost_sup(player)
            for t in range(table.horizon + 1):
                w = spec.theta * spec.alpha**t
                bound = np.exp(w * sup / (1 - spec.alpha))
                assert np.all(phi[t] <= bound + 1e-12)
                assert np.all(phi[t] >= 1.0 / bound - 1e-12)
                assert np.all(np.abs(psi[t]) <= sup / (1 - spec.alpha) + 1e-9)

    def test_workers_agree_with_serial(self):
        spec = random_game(22, n=3, theta=0.5, alpha=0.4)
        p1, t1 = solve_discounted(spec, eps=1e-6, workers=1)
        p2, t2 = solve_discounted(spec, eps=1e-6, workers=4)
        assert np.array_equal(t1.phi1, t2.phi1)
        for s1, s2 in zip(p1.stages, p2.stages):
            assert np.array_equal(s1.mu, s2.mu)
            assert np.array_equal(s1.nu, s2.nu)


class TestEvaluateAndBestResponse:
    def test_zero_cost(self):
        spec = random_game(23, cost_scale=0.0)
        profile, _ = solve_discounted(spec, eps=1e-8)
        assert np.allclose(evaluate_exp_cost(spec, profile, 1), 1.0)

    def test_constant_cost_geometric_sum(self):
        rng = np.random.default_rng(24)
        q = rng.dirichlet(np.ones(3), size=(3, 2, 2))
        c, alpha, theta = 0.4, 0.5, 0.9
        spec = constant_cost_spec(q, c, theta=theta, alpha=alpha)
        profile, table = solve_discounted(spec, eps=1e-8)
        T = table.horizon
        zeta = evaluate_exp_cost(spec, profile, 1)
        assert np.allclose(zeta, np.exp(theta * c * (1 - alpha**T) / (1 - alpha)))

    def test_single_own_action_equals_evaluation(self):
        rng = np.random.default_rng(25)
        q = rng.dirichlet(np.ones(2), size=(2, 1, 2))
        r1 = rng.uniform(size=(2, 1, 2))
        r2 = rng.uniform(size=(2, 1, 2))
        spec = GameSpec(r1=r1, r2=r2, q=q, theta=0.5, theta_max=0.5, alpha=0.4)
        profile, _ = solve_discounted(spec, eps=1e-6)
        opp = [s.nu for s in profile.stages]
        br = best_response_value_discounted(spec, opp, 1)
        assert np.allclose(br, evaluate_exp_cost(spec, profile, 1), rtol=1e-12)

    def test_optimal_over_exhaustive_pure_markov_strategies(self):
        spec = random_game(26, n=2, nu=2, nv=2, theta=0.7, alpha=0.4)
        T = 3
        rng = np.random.default_rng(27)
        opp = [rng.dirichlet(np.ones(2), size=2) for _ in range(T)]
        br = best_response_value_discounted(spec, opp, 1)
        best = np.full(spec.n_states, np.inf)
        for picks in pure_markov_strategies(spec.n_states, spec.n_actions_u, T):
            stages = []
            for t in range(T):
                mu = np.zeros((2, 2))
                mu[np.arange(2), picks[t]] = 1.0
                stages.append(StationaryProfile(mu=mu, nu=opp[t]))
            val = evaluate_exp_cost(spec, MarkovProfile(stages=tuple(stages)), 1)
            best = np.minimum(best, val)
        assert np.allclose(br, best, rtol=1e-12)
        # and no pure Markov strategy beats the BR value
        assert np.all(br <= best + 1e-12)

    def test_decoupled_game_is_plain_mdp(self):
        # r1 and q free of v: player 2 is irrelevant to player 1's value
        rng = np.random.default_rng(28)
        n, nu, nv = 2, 2, 3
        q_half = rng.dirichlet(np.ones(n), size=(n, nu))
        q = np.repeat(q_half[:, :, None, :], nv, axis=2)
        r1 = np.repeat(rng.uniform(size=(n, nu))[:, :, None], nv, axis=2)
        r2 = rng.uniform(size=(n, nu, nv))
        spec = GameSpec(r1=r1, r2=r2, q=q, theta=0.6, theta_max=0.6, alpha=0.4)
        T = 4
        opp_a = [rng.dirichlet(np.ones(nv), size=n) for _ in range(T)]
        opp_b = [rng.dirichlet(np.ones(nv), size=n) for _ in range(T)]
        va = best_response_value_discounted(spec, opp_a, 1)
        vb = best_response_value_discounted(spec, opp_b, 1)
        assert np.allclose(va, vb, rtol=1e-12)


class TestVerifyNash:
    def test_solver_output_passes(self):
        spec = random_game(29, n=3, nu=2, nv=2, theta=0.5, alpha=0.4)
        profile, _ = solve_discounted(spec, eps=1e-8)
        report = verify_nash_discounted(spec, profile, tol=1e-8)
        assert report.passed
        assert report.max_gap <= 1e-10

    def test_perturbed_profile_fails(self):
        spec = random_game(30, n=2, nu=2, nv=2, theta=0.5, alpha=0.4)
        profile, _ = solve_discounted(spec, eps=1e-8)
        # swap stage-0 action of player 1 at state 0 to the other pure action
        mu0 = profile.stages[0].mu.copy()
        worst = np.zeros_like(mu0[0])
        worst[np.argmin(mu0[0])] = 1.0
        mu0[0] = worst
        bad_stage = StationaryProfile(mu=mu0, nu=profile.stages[0].nu)
        bad = MarkovProfile(stages=(bad_stage,) + profile.stages[1:])
        report = verify_nash_discounted(spec, bad, tol=1e-8)
        assert not report.passed
        assert report.max_gap > 1e-6

    def test_single_action_game_trivially_passes(self):
        rng = np.random.default_rng(31)
        q = rng.dirichlet(np.ones(2), size=(2, 1, 1))
        r = rng.uniform(size=(2, 1, 1))
        spec = GameSpec(r1=r, r2=r, q=q, theta=0.5, theta_max=0.5, alpha=0.4)
        profile, _ = solve_discounted(spec, eps=1e-8)
        report = verify_nash_discounted(spec, profile, tol=0.0)
        assert report.passed
        assert report.max_gap == pytest.approx(0.0, abs=1e-14)

    def test_tail_slack_formula(self):
        spec = random_game(32, theta=0.5, alpha=0.4)
        slack = tail_slack_for_horizon(spec, 5)
        r_inf = spec.cost_sup_max()
        assert slack == pytest.approx(np.expm1(0.5 * 0.4**5 * r_inf / 0.6))


class TestRiskNeutralDiagnostic:
    def test_psi_approaches_linear_value_as_theta_vanishes(self):
        base = random_game(33, n=2, nu=2, nv=2, alpha=0.4)
        diffs = {}
        T_target = 25
        for theta in (1e-3, 1e-4):
            spec = GameSpec(
                r1=base.r1, r2=base.r2, q=base.q,
                theta=theta, theta_max=theta, alpha=base.alpha,
            )
            eps = float(np.expm1(theta * base.alpha**T_target * spec.cost_sup_max()
                                 / (1 - base.alpha))) * 1.0000001
            profile, table = solve_discounted(spec, eps=eps)
            assert table.horizon == T_target
            linear = evaluate_linear_cost(spec, profile, 1)
            diffs[theta] = np.max(np.abs(table.psi1[0] - linear))
        ratio = diffs[1e-3] / diffs[1e-4]
        assert 5.0 <= ratio <= 20.0  # O(theta) slope across the decade
