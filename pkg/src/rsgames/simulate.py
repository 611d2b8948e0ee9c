"""Seeded Monte Carlo engine for empirical cross-checks.

Per-path random streams are derived from ``(seed, path_index)`` through
numpy's ``SeedSequence`` spawn-key mechanism with the PCG64 generator, so
serial and parallel runs aggregate identical path results in index order and
every report is bit-exact for a fixed seed.  The generator choice is fixed
per major version.

The ergodic estimator averages ``exp(theta * path cost sum)`` across
independent batches and takes the log of the batch mean; exponential
estimands have heavy relative variance, so reports carry the effective
sample size of the exponential weights alongside the delta-method standard
error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from rsgames.model import (
    GameSpec,
    MarkovProfile,
    StationaryProfile,
    validate_profile,
)


@dataclass(frozen=True)
class EstimatorReport:
    point: float
    stderr: float
    n_paths: int
    seed: int
    estimator_kind: str
    ess: float | None = None
    censored: int | None = None
    flagged: bool = False

    def to_dict(self) -> dict:
        return {
            "point": self.point,
            "stderr": self.stderr,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "estimator_kind": self.estimator_kind,
            "ess": self.ess,
            "censored": self.censored,
            "flagged": self.flagged,
        }


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray  # (T+1,)
    actions_u: np.ndarray  # (T,)
    actions_v: np.ndarray  # (T,)


@dataclass(frozen=True)
class ReturnTimeReport:
    moment: EstimatorReport  # E[R^sigma]
    mean_return: EstimatorReport  # E[sigma]
    rate: float
    censored: int
    flagged: bool


def path_rng(seed: int, path_index: int) -> np.random.Generator:
    """Per-path stream: PCG64 seeded by SeedSequence(seed, spawn_key=(i,))."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(path_index,))
    )


def _draw(cum: np.ndarray, rng: np.random.Generator) -> int:
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    return min(idx, cum.size - 1)


class _ProfileSampler:
    """Cumulative-distribution tables for fast inverse-CDF sampling."""

    def __init__(self, spec: GameSpec, profile: StationaryProfile | MarkovProfile):
        self.spec = spec
        self.q_cum = np.cumsum(spec.q, axis=3)
        if isinstance(profile, StationaryProfile):
            validate_profile(spec, profile)
            self.stationary = True
            self.mu_cum = np.cumsum(profile.mu, axis=1)
            self.nu_cum = np.cumsum(profile.nu, axis=1)
            self.horizon = None
        else:
            for stage in profile.stages:
                validate_profile(spec, stage)
            self.stationary = False
            self.stage_mu = [np.cumsum(s.mu, axis=1) for s in profile.stages]
            self.stage_nu = [np.cumsum(s.nu, axis=1) for s in profile.stages]
            self.horizon = profile.horizon

    def step(self, t: int, k: int, rng: np.random.Generator) -> tuple[int, int, int]:
        if self.stationary:
            mu_cum, nu_cum = self.mu_cum, self.nu_cum
        else:
            mu_cum, nu_cum = self.stage_mu[t], self.stage_nu[t]
        u = _draw(mu_cum[k], rng)
        v = _draw(nu_cum[k], rng)
        j = _draw(self.q_cum[k, u, v], rng)
        return u, v, j


def simulate(
    spec: GameSpec,
    profile: StationaryProfile | MarkovProfile,
    T: int,
    seed: int,
    start_state: int | None = None,
    path_index: int = 0,
) -> Trajectory:
    """One length-T trajectory; both actions sampled independently from the
    profile at the current state, then the next state from the kernel."""
    sampler = _ProfileSampler(spec, profile)
    if sampler.horizon is not None and T > sampler.horizon:
        raise ValueError(f"T={T} exceeds the profile horizon {sampler.horizon}")
    k = spec.ref_state if start_state is None else start_state
    rng = path_rng(seed, path_index)
    states = np.empty(T + 1, dtype=np.int64)
    us = np.empty(T, dtype=np.int64)
    vs = np.empty(T, dtype=np.int64)
    states[0] = k
    for t in range(T):
        u, v, j = sampler.step(t, k, rng)
        us[t], vs[t], states[t + 1] = u, v, j
        k = j
    return Trajectory(states=states, actions_u=us, actions_v=vs)


def trajectory_cost_sum(
    spec: GameSpec, traj: Trajectory, player: int, discounted: bool
) -> float:
    """Accumulated (optionally alpha^t-weighted) cost along a trajectory."""
    r = spec.cost(player)
    T = traj.actions_u.size
    costs = r[traj.states[:T], traj.actions_u, traj.actions_v]
    if discounted:
        costs = costs * spec.alpha ** np.arange(T)
    return float(costs.sum())


def _log_mean_exp(values: np.ndarray) -> tuple[float, float, float]:
    """log of mean(exp(values)), delta-method stderr of the log, and ESS."""
    m = float(values.max())
    w = np.exp(values - m)
    mean_w = float(w.mean())
    if w.size > 1:
        se_log = float(w.std(ddof=1) / math.sqrt(w.size) / mean_w)
    else:
        se_log = 0.0
    ess = float(w.sum() ** 2 / np.square(w).sum())
    return m + math.log(mean_w), se_log, ess


def discounted_cost_sums(
    spec: GameSpec,
    profile: MarkovProfile,
    player: int,
    n_paths: int,
    seed: int,
    T: int | None = None,
    start_state: int | None = None,
) -> np.ndarray:
    """Per-path discounted cost sums ``sum_{t<T} alpha^t r`` (index order)."""
    horizon = profile.horizon if T is None else T
    sampler = _ProfileSampler(spec, profile)
    if horizon > profile.horizon:
        raise ValueError(f"T={horizon} exceeds the profile horizon {profile.horizon}")
    k0 = spec.ref_state if start_state is None else start_state
    r = spec.cost(player)
    disc = spec.alpha ** np.arange(horizon)
    sums = np.empty(n_paths)
    for i in range(n_paths):
        rng = path_rng(seed, i)
        k = k0
        total = 0.0
        for t in range(horizon):
            u, v, j = sampler.step(t, k, rng)
            total += disc[t] * r[k, u, v]
            k = j
        sums[i] = total
    return sums


def estimate_discounted_cost(
    spec: GameSpec,
    profile: MarkovProfile,
    player: int,
    n_paths: int,
    seed: int,
    T: int | None = None,
    start_state: int | None = None,
) -> EstimatorReport:
    """Monte Carlo estimate of the discounted risk-sensitive cost.

    Point estimate is ``ln(mean exp(theta * discounted cost sum)) / theta``
    with the delta-method standard error on the log of the mean.
    """
    sums = discounted_cost_sums(spec, profile, player, n_paths, seed, T, start_state)
    log_mean, se_log, ess = _log_mean_exp(spec.theta * sums)
    return EstimatorReport(
        point=log_mean / spec.theta,
        stderr=se_log / spec.theta,
        n_paths=n_paths,
        seed=seed,
        estimator_kind="discounted",
        ess=ess,
    )


def ergodic_cost_sums(
    spec: GameSpec,
    profile: StationaryProfile,
    player: int,
    T: int,
    n_batches: int,
    seed: int,
    start_state: int | None = None,
) -> np.ndarray:
    """Per-batch undiscounted cost sums over length-T paths (index order)."""
    sampler = _ProfileSampler(spec, profile)
    k0 = spec.ref_state if start_state is None else start_state
    r = spec.cost(player)
    sums = np.empty(n_batches)
    for b in range(n_batches):
        rng = path_rng(seed, b)
        k = k0
        total = 0.0
        for t in range(T):
            u, v, j = sampler.step(t, k, rng)
            total += r[k, u, v]
            k = j
        sums[b] = total
    return sums


def estimate_ergodic_cost(
    spec: GameSpec,
    profile: StationaryProfile,
    player: int,
    T: int,
    n_batches: int,
    seed: int,
    start_state: int | None = None,
) -> EstimatorReport:
    """Batched Monte Carlo estimate of the ergodic risk-sensitive cost.

    Each batch contributes ``exp(theta * sum_{t<T} r)`` from one independent
    path; the point estimate is the log of the batch mean divided by
    ``theta * T``.  Bias is O(1/n_batches); the ESS of the exponential
    weights is reported because the estimand is heavy-tailed in relative
    terms.
    """
    sums = ergodic_cost_sums(spec, profile, player, T, n_batches, seed, start_state)
    log_mean, se_log, ess = _log_mean_exp(spec.theta * sums)
    scale = spec.theta * T
    return EstimatorReport(
        point=log_mean / scale,
        stderr=se_log / scale,
        n_paths=n_batches,
        seed=seed,
        estimator_kind="ergodic-batch",
        ess=ess,
    )


def sample_return_time(
    spec: GameSpec,
    profile: StationaryProfile,
    target_state: int,
    n_paths: int,
    R: float,
    seed: int,
    step_cap: int = 10**6,
) -> ReturnTimeReport:
    """Empirical return-time statistics started at the target state.

    Paths that fail to return within ``step_cap`` steps are censored at the
    cap; the report is flagged when more than 1% of paths are censored.
    """
    sampler = _ProfileSampler(spec, profile)
    sigmas = np.empty(n_paths)
    censored = 0
    for i in range(n_paths):
        rng = path_rng(seed, i)
        k = target_state
        t = 0
        while True:
            _u, _v, k = sampler.step(0, k, rng)
            t += 1
            if k == target_state:
                break
            if t >= step_cap:
                censored += 1
                break
        sigmas[i] = t
    flagged = censored > 0.01 * n_paths

    log_mean, se_log, _ess = _log_mean_exp(sigmas * math.log(R))
    try:
        point = math.exp(log_mean)
        moment_se = point * se_log
    except OverflowError:
        point, moment_se = math.inf, math.inf
    moment = EstimatorReport(
        point=point,
        stderr=moment_se,
        n_paths=n_paths,
        seed=seed,
        estimator_kind="return-time-moment",
        censored=censored,
        flagged=flagged,
    )
    mean_return = EstimatorReport(
        point=float(sigmas.mean()),
        stderr=float(sigmas.std(ddof=1) / math.sqrt(n_paths)) if n_paths > 1 else 0.0,
        n_paths=n_paths,
        seed=seed,
        estimator_kind="return-time-mean",
        censored=censored,
        flagged=flagged,
    )
    return ReturnTimeReport(
        moment=moment,
        mean_return=mean_return,
        rate=R,
        censored=censored,
        flagged=flagged,
    )
