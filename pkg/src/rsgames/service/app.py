"""FastAPI application wrapping the solver library.

Endpoints take the full game description inline (no server-side file
access); malformed inputs map to HTTP 400, structural solver outcomes
(assumption failure, search failure, verification failure) stay in the
response ``status`` so clients can write outputs regardless.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from rsgames import __version__, discounted, ergodic, simulate
from rsgames.markov import RecurrenceReport, check_assumptions
from rsgames.model import GameSpec, validate
from rsgames.service import schemas as sc


def _to_spec(model: sc.GameSpecModel) -> GameSpec:
    try:
        spec = model.to_game_spec()
    except ValueError as err:
        raise HTTPException(status_code=400, detail=str(err))
    report = validate(spec)
    if not report.passed:
        raise HTTPException(
            status_code=400, detail="invalid game spec: " + "; ".join(report.violations)
        )
    return spec


def _report_model(report: RecurrenceReport) -> sc.RecurrenceReportModel:
    doc = report.to_dict()
    if doc["lyapunov"] is not None:
        doc["lyapunov"] = sc.LyapunovModel(**doc["lyapunov"])
    return sc.RecurrenceReportModel(**doc)


def _discounted_gaps_model(
    rep: discounted.DiscountedDeviationReport,
) -> sc.DiscountedGapsModel:
    return sc.DiscountedGapsModel(
        gap_exp_rel=rep.gap_exp_rel.tolist(),
        gap_psi=rep.gap_psi.tolist(),
        max_gap=rep.max_gap,
        tol=rep.tol,
        tail_slack=rep.tail_slack,
        passed=rep.passed,
    )


def _ergodic_gaps_model(rep: ergodic.ErgodicDeviationReport) -> sc.ErgodicGapsModel:
    return sc.ErgodicGapsModel(
        gap1=rep.gap1,
        gap2=rep.gap2,
        lam_profile=list(rep.lam_profile),
        lam_best_response=list(rep.lam_best_response),
        tol=rep.tol,
        passed=rep.passed,
    )


def _estimator_model(rep: simulate.EstimatorReport) -> sc.EstimatorReportModel:
    return sc.EstimatorReportModel(**rep.to_dict())


def create_app() -> FastAPI:
    app = FastAPI(title="rsgames", version=__version__)

    @app.get("/health", response_model=sc.HealthResponse)
    def health() -> sc.HealthResponse:
        return sc.HealthResponse(status="ok", version=__version__)

    @app.post("/check", response_model=sc.CheckResponse)
    def check(req: sc.CheckRequest) -> sc.CheckResponse:
        spec = _to_spec(req.spec)
        report = check_assumptions(spec)
        return sc.CheckResponse(
            status="ok" if report.all_hold else "assumption_failure",
            report=_report_model(report),
        )

    @app.post("/solve/discounted", response_model=sc.SolveDiscountedResponse)
    def solve_discounted(req: sc.SolveDiscountedRequest) -> sc.SolveDiscountedResponse:
        spec = _to_spec(req.spec)
        if req.eps <= 0:
            raise HTTPException(status_code=400, detail="eps must be positive")
        profile, table = discounted.solve_discounted(
            spec, eps=req.eps, workers=max(1, req.workers)
        )
        gaps = discounted.verify_nash_discounted(spec, profile, tol=req.verify_tol)
        return sc.SolveDiscountedResponse(
            status="ok" if gaps.passed else "verification_failure",
            horizon=table.horizon,
            tail_bound=table.tail_bound,
            profile=sc.MarkovProfileModel.from_profile(profile),
            psi1=table.psi1[0].tolist(),
            psi2=table.psi2[0].tolist(),
            gaps=_discounted_gaps_model(gaps),
        )

    @app.post("/solve/ergodic", response_model=sc.SolveErgodicResponse)
    def solve_ergodic(req: sc.SolveErgodicRequest) -> sc.SolveErgodicResponse:
        spec = _to_spec(req.spec)
        recurrence = check_assumptions(spec)
        warnings: list[str] = []
        if not recurrence.all_hold:
            if not req.force:
                return sc.SolveErgodicResponse(
                    status="assumption_failure", recurrence=_report_model(recurrence)
                )
            warnings.append(
                "assumptions fail; solving anyway (--force): "
                + "; ".join(recurrence.diagnostics)
            )
        config = ergodic.NashSearchConfig(
            max_rounds=req.max_rounds,
            damping=req.damping,
            enumeration_cap=req.enumeration_cap,
            verify_tol=req.tol,
        )
        outcome = ergodic.nash_search_ergodic(spec, config)
        if isinstance(outcome, ergodic.ErgodicSearchFailure):
            return sc.SolveErgodicResponse(
                status="search_failure",
                recurrence=_report_model(recurrence),
                warnings=warnings,
                failure=outcome.reason,
            )
        gaps = ergodic.verify_nash_ergodic(spec, outcome.profile, tol=req.tol)
        return sc.SolveErgodicResponse(
            status="ok",
            recurrence=_report_model(recurrence),
            warnings=warnings,
            lambda1=outcome.lambda1,
            lambda2=outcome.lambda2,
            h1=outcome.h1.tolist(),
            h2=outcome.h2.tolist(),
            profile=sc.StationaryProfileModel.from_profile(outcome.profile),
            gaps=_ergodic_gaps_model(gaps),
        )

    @app.post("/simulate", response_model=sc.SimulateResponse)
    def run_simulation(req: sc.SimulateRequest) -> sc.SimulateResponse:
        spec = _to_spec(req.spec)
        try:
            if req.kind == "discounted":
                if req.markov_profile is None:
                    raise ValueError("discounted simulation needs markov_profile")
                profile = req.markov_profile.to_profile()
                sums = {
                    p: simulate.discounted_cost_sums(
                        spec, profile, p, req.paths, req.seed, start_state=req.start_state
                    )
                    for p in (1, 2)
                }
                reports = {
                    p: simulate.estimate_discounted_cost(
                        spec, profile, p, req.paths, req.seed, start_state=req.start_state
                    )
                    for p in (1, 2)
                }
                blocks = np.array_split(np.arange(req.paths), min(req.batches, req.paths))
                stats = [
                    sc.BatchStatModel(
                        batch=i,
                        n=idx.size,
                        player1=float(
                            np.log(np.mean(np.exp(spec.theta * sums[1][idx]))) / spec.theta
                        ),
                        player2=float(
                            np.log(np.mean(np.exp(spec.theta * sums[2][idx]))) / spec.theta
                        ),
                    )
                    for i, idx in enumerate(blocks)
                    if idx.size
                ]
            else:
                if req.stationary_profile is None:
                    raise ValueError("ergodic simulation needs stationary_profile")
                profile = req.stationary_profile.to_profile()
                sums = {
                    p: simulate.ergodic_cost_sums(
                        spec, profile, p, req.horizon, req.batches, req.seed,
                        start_state=req.start_state,
                    )
                    for p in (1, 2)
                }
                reports = {
                    p: simulate.estimate_ergodic_cost(
                        spec, profile, p, req.horizon, req.batches, req.seed,
                        start_state=req.start_state,
                    )
                    for p in (1, 2)
                }
                stats = [
                    sc.BatchStatModel(
                        batch=b,
                        n=req.horizon,
                        player1=float(sums[1][b] / req.horizon),
                        player2=float(sums[2][b] / req.horizon),
                    )
                    for b in range(req.batches)
                ]
        except ValueError as err:
            raise HTTPException(status_code=400, detail=str(err))
        return sc.SimulateResponse(
            status="ok",
            player1=_estimator_model(reports[1]),
            player2=_estimator_model(reports[2]),
            batch_stats=stats,
        )

    @app.post("/verify", response_model=sc.VerifyResponse)
    def verify(req: sc.VerifyRequest) -> sc.VerifyResponse:
        spec = _to_spec(req.spec)
        try:
            if req.kind == "discounted":
                if req.markov_profile is None:
                    raise ValueError("discounted verification needs markov_profile")
                rep = discounted.verify_nash_discounted(
                    spec, req.markov_profile.to_profile(),
                    tol=req.tol if req.tol is not None else 1e-8,
                )
                return sc.VerifyResponse(
                    status="ok" if rep.passed else "verification_failure",
                    kind="discounted",
                    discounted_gaps=_discounted_gaps_model(rep),
                )
            if req.stationary_profile is None:
                raise ValueError("ergodic verification needs stationary_profile")
            rep = ergodic.verify_nash_ergodic(
                spec, req.stationary_profile.to_profile(),
                tol=req.tol if req.tol is not None else 1e-7,
            )
        except ValueError as err:
            raise HTTPException(status_code=400, detail=str(err))
        return sc.VerifyResponse(
            status="ok" if rep.passed else "verification_failure",
            kind="ergodic",
            ergodic_gaps=_ergodic_gaps_model(rep),
        )

    return app
