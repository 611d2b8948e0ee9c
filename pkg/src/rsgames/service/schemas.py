"""Pydantic request/response models for the solver service.

The wire format mirrors the JSON spec-file layout: tensors as nested arrays
in ``[state][u][v]`` (costs) and ``[state][u][v][next_state]`` (kernel)
index order.  Non-finite numbers are rejected when a request is converted to
the internal game model.
"""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field

from rsgames.model import (
    GameSpec,
    MarkovProfile,
    StationaryProfile,
    spec_from_dict,
    spec_to_dict,
)


class GameSpecModel(BaseModel):
    model_config = ConfigDict(extra="forbid")

    n_states: int = Field(gt=0)
    n_actions_u: int = Field(gt=0)
    n_actions_v: int = Field(gt=0)
    r1: list
    r2: list
    q: list
    theta: float
    theta_max: float | None = None
    alpha: float = 0.0
    ref_state: int = 0

    def to_game_spec(self) -> GameSpec:
        doc = self.model_dump()
        if doc["theta_max"] is None:
            del doc["theta_max"]
        return spec_from_dict(doc)

    @classmethod
    def from_game_spec(cls, spec: GameSpec) -> "GameSpecModel":
        return cls(**spec_to_dict(spec))


class StationaryProfileModel(BaseModel):
    mu: list[list[float]]
    nu: list[list[float]]

    def to_profile(self) -> StationaryProfile:
        return StationaryProfile(mu=self.mu, nu=self.nu)

    @classmethod
    def from_profile(cls, profile: StationaryProfile) -> "StationaryProfileModel":
        return cls(mu=profile.mu.tolist(), nu=profile.nu.tolist())


class MarkovProfileModel(BaseModel):
    horizon: int = Field(gt=0)
    stages: list[StationaryProfileModel]
    tail_rule: str = "unit-exponential-tail"

    def to_profile(self) -> MarkovProfile:
        if len(self.stages) != self.horizon:
            raise ValueError(
                f"profile lists {len(self.stages)} stages for horizon {self.horizon}"
            )
        return MarkovProfile(
            stages=tuple(s.to_profile() for s in self.stages),
            tail_rule=self.tail_rule,
        )

    @classmethod
    def from_profile(cls, profile: MarkovProfile) -> "MarkovProfileModel":
        return cls(
            horizon=profile.horizon,
            stages=[StationaryProfileModel.from_profile(s) for s in profile.stages],
            tail_rule=profile.tail_rule,
        )


class LyapunovModel(BaseModel):
    V: list[float]
    eta: float
    b: float
    C: list[int]
    verified: bool


class RecurrenceReportModel(BaseModel):
    delta: float
    a1_holds: bool
    a2_holds: bool
    a3_holds: bool
    all_hold: bool
    diagnostics: list[str]
    R0: float | None
    B0: float | None
    L0: float | None
    small_cost_threshold: float | None
    lyapunov: LyapunovModel | None


class CheckRequest(BaseModel):
    spec: GameSpecModel


class CheckResponse(BaseModel):
    status: Literal["ok", "assumption_failure"]
    report: RecurrenceReportModel


class SolveDiscountedRequest(BaseModel):
    spec: GameSpecModel
    eps: float = 1e-8
    verify_tol: float = 1e-8
    workers: int = 1


class DiscountedGapsModel(BaseModel):
    gap_exp_rel: list[list[float]]  # [player][state], relative exponential scale
    gap_psi: list[list[float]]
    max_gap: float
    tol: float
    tail_slack: float
    passed: bool


class SolveDiscountedResponse(BaseModel):
    status: Literal["ok", "verification_failure"]
    horizon: int
    tail_bound: float
    profile: MarkovProfileModel
    psi1: list[float]  # stage-0 certainty-equivalent values per start state
    psi2: list[float]
    gaps: DiscountedGapsModel


class SolveErgodicRequest(BaseModel):
    spec: GameSpecModel
    tol: float = 1e-8
    force: bool = False
    max_rounds: int = 200
    damping: float = 0.5
    enumeration_cap: int = 10_000


class ErgodicGapsModel(BaseModel):
    gap1: float
    gap2: float
    lam_profile: list[float]
    lam_best_response: list[float]
    tol: float
    passed: bool


class SolveErgodicResponse(BaseModel):
    status: Literal["ok", "assumption_failure", "search_failure"]
    recurrence: RecurrenceReportModel
    warnings: list[str] = []
    lambda1: float | None = None
    lambda2: float | None = None
    h1: list[float] | None = None
    h2: list[float] | None = None
    profile: StationaryProfileModel | None = None
    gaps: ErgodicGapsModel | None = None
    failure: str | None = None


class EstimatorReportModel(BaseModel):
    point: float
    stderr: float
    n_paths: int
    seed: int
    estimator_kind: str
    ess: float | None = None
    censored: int | None = None
    flagged: bool = False


class SimulateRequest(BaseModel):
    spec: GameSpecModel
    kind: Literal["discounted", "ergodic"]
    markov_profile: MarkovProfileModel | None = None
    stationary_profile: StationaryProfileModel | None = None
    paths: int = 1000
    batches: int = 200
    horizon: int = 2000
    seed: int = 0
    start_state: int | None = None


class BatchStatModel(BaseModel):
    batch: int
    n: int
    player1: float
    player2: float


class SimulateResponse(BaseModel):
    status: Literal["ok"]
    player1: EstimatorReportModel
    player2: EstimatorReportModel
    batch_stats: list[BatchStatModel]


class VerifyRequest(BaseModel):
    spec: GameSpecModel
    kind: Literal["discounted", "ergodic"]
    markov_profile: MarkovProfileModel | None = None
    stationary_profile: StationaryProfileModel | None = None
    tol: float | None = None


class VerifyResponse(BaseModel):
    status: Literal["ok", "verification_failure"]
    kind: Literal["discounted", "ergodic"]
    discounted_gaps: DiscountedGapsModel | None = None
    ergodic_gaps: ErgodicGapsModel | None = None


class HealthResponse(BaseModel):
    status: Literal["ok"]
    version: str
