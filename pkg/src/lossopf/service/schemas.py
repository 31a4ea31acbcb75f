"""Pydantic request/response models for the dispatch service."""

from __future__ import annotations

from typing import Any, Literal, Optional

from pydantic import BaseModel, Field

Method = Literal["dc", "lllf", "llqcp", "lloa"]


class NetworkUpload(BaseModel):
    name: str = ""
    case_text: str = Field(..., description="MATPOWER-style case content")


class NetworkSummary(BaseModel):
    network_id: str
    name: str
    buses: int
    branches: int
    generators: int
    base_mva: float
    total_load: float


class SolveRequest(BaseModel):
    method: Method = "lloa"
    variant: Literal["angle", "ptdf"] = "angle"
    epsilon: float = 1e-3
    warm_start: bool = True
    max_iter: int = 25
    backend: Literal["auto", "highs", "clarabel", "static"] = "auto"
    static_tangents: int = 64


class BranchFlow(BaseModel):
    p_fwd: float
    p_bwd: Optional[float] = None
    loss_est: float
    loss_true: float


class SolutionModel(BaseModel):
    method: str
    status: str
    objective: Optional[float] = None
    iterations: int = 0
    pg: Optional[list[float]] = None
    branches: Optional[list[BranchFlow]] = None
    loss_total: float = 0.0
    loss_true_total: Optional[float] = None
    solve_seconds: float = 0.0
    cut_count: int = 0
    flags: list[str] = Field(default_factory=list)
    trace: list[dict[str, Any]] = Field(default_factory=list)


class ScedConfigModel(BaseModel):
    reserve_requirement: float = 0.0
    reserve_penalty: float = 1100.0
    balance_penalty: float = 10000.0
    transmission_penalty: float = 2000.0
    contingency_set: Optional[list[int]] = None
    max_lazy_rounds: int = 20
    enforce_penalty_order: bool = True
    ramp_enabled: bool = False
    soft_constraints: bool = True


class ScedRequest(BaseModel):
    method: Method = "lloa"
    epsilon: float = 1e-3
    config: ScedConfigModel = Field(default_factory=ScedConfigModel)


class ScedSolutionModel(SolutionModel):
    reserve: Optional[list[float]] = None
    reserve_shortfall: float = 0.0
    balance_violation: float = 0.0
    transmission_violation: float = 0.0
    contingency: dict[str, float] = Field(default_factory=dict)
    dispatch_cost: float = 0.0
    penalty_cost: float = 0.0
    rounds: int = 0


class RestoreRequest(BaseModel):
    methods: Optional[list[Method]] = None
    solutions: Optional[list[SolutionModel]] = None
    epsilon: float = 1e-3


class ViolationSectionModel(BaseModel):
    count: int
    max: float


class ViolationRow(BaseModel):
    method: str
    converged: bool
    newton_iterations: int = 0
    ac_losses: Optional[float] = None
    active: ViolationSectionModel
    reactive: ViolationSectionModel
    voltage: ViolationSectionModel
    thermal: ViolationSectionModel
    error: Optional[str] = None


class RestoreResponse(BaseModel):
    rows: list[ViolationRow]
    table: str
    csv: str


class SweepRequest(BaseModel):
    cases: list[str] = Field(..., description="bundled case names or uploaded network ids")
    alphas: Optional[list[float]] = None
    sigma: float = 0.05
    seeds: Optional[list[int]] = None
    methods: Optional[list[Method]] = None
    problem: Literal["opf", "sced"] = "opf"
    sced: Optional[ScedConfigModel] = None
    epsilon: float = 1e-3
    reference_method: Method = "llqcp"
    reference_dispatch: Optional[dict[str, dict[str, Any]]] = None


class SweepResponse(BaseModel):
    total_instances: int
    rows: list[dict[str, Any]]
    exclusions: list[dict[str, Any]]
    seed_averages: list[dict[str, Any]]
    csv: str


class ErrorDetail(BaseModel):
    kind: Literal["input", "infeasible", "numeric"]
    message: str
