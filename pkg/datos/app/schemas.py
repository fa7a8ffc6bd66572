from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.models import DUpdate, Neighborhood, ProblemKind, ReferenceLineSearch, SolverKind, SUpdate


def _valid_solvers() -> str:
    return ", ".join(s.value for s in SolverKind)


class GraphSection(BaseModel):
    m: int = Field(20, ge=1)
    p: float = Field(0.5, gt=0.0, le=1.0)
    seed: int = 0
    c: float = Field(1.0 / 3.0, gt=0.0, lt=0.5)
    file: Optional[str] = None

    model_config = ConfigDict(extra="forbid")


class ProblemSection(BaseModel):
    kind: ProblemKind = ProblemKind.ELASTIC_NET
    seed: int = 0
    n: int = Field(20, ge=1)
    d: int = Field(50, ge=1)
    lam: float = Field(1e-5, ge=0.0)
    # elastic net
    gamma_base: float = 0.1
    gamma_step: float = 0.1
    # logistic
    density: float = Field(0.3, gt=0.0, le=1.0)
    data_file: Optional[str] = None
    max_rows: Optional[int] = Field(None, ge=1)
    positive_label: Optional[float] = None
    # covariance
    a: float = Field(0.1, gt=0.0)
    b: float = Field(10.0, gt=0.0)
    trace_sign: int = -1

    model_config = ConfigDict(extra="forbid")

    @field_validator("trace_sign")
    @classmethod
    def _sign(cls, v: int) -> int:
        if v not in (-1, 1):
            raise ValueError("trace_sign must be -1 or 1")
        return v

    @model_validator(mode="after")
    def _box(self):
        if self.b < self.a:
            raise ValueError(f"spectral box needs a <= b, got a={self.a}, b={self.b}")
        if self.kind == ProblemKind.CUSTOM:
            raise ValueError("problem kind 'custom' is only available from Python, not from experiment files")
        return self


class SolverSection(BaseModel):
    name: SolverKind = SolverKind.GLOBAL_DATOS
    delta: float = Field(0.9, gt=0.0, le=1.0)
    alpha_inv: float = Field(10.0, gt=0.0)
    pg_extra_alpha: Optional[float] = Field(None, gt=0.0)
    iters: int = Field(1000, ge=0)
    seed: int = 0
    neighborhood: Neighborhood = Neighborhood.CLOSED
    s_update: SUpdate = SUpdate.CONSISTENT
    d_update: DUpdate = DUpdate.APPROX
    reference_linesearch: ReferenceLineSearch = ReferenceLineSearch.AGENT_MIN
    quantize: bool = False
    oracle_tol: float = Field(1e-30, gt=0.0)
    oracle_max_iter: int = Field(100_000, ge=1)

    model_config = ConfigDict(extra="forbid")

    @field_validator("name", mode="before")
    @classmethod
    def _known_solver(cls, v: Any) -> Any:
        if isinstance(v, str) and v not in {s.value for s in SolverKind}:
            raise ValueError(f"unknown solver '{v}'; valid solvers: {_valid_solvers()}")
        return v

    @property
    def alpha_init(self) -> float:
        return 1.0 / self.alpha_inv


class OutputSection(BaseModel):
    out: str = "results"
    stride: int = Field(1, ge=1)

    model_config = ConfigDict(extra="forbid")


class ExperimentConfig(BaseModel):
    graph: GraphSection = Field(default_factory=GraphSection)
    problem: ProblemSection = Field(default_factory=ProblemSection)
    solver: SolverSection = Field(default_factory=SolverSection)
    output: OutputSection = Field(default_factory=OutputSection)

    model_config = ConfigDict(extra="forbid")


class SweepConfig(BaseModel):
    """An experiment template plus the (solver x p) grid it is run over."""

    base: ExperimentConfig
    solvers: List[SolverKind]
    ps: List[float]

    @field_validator("solvers", mode="before")
    @classmethod
    def _known_solvers(cls, v: Any) -> Any:
        for name in v:
            if isinstance(name, str) and name not in {s.value for s in SolverKind}:
                raise ValueError(f"unknown solver '{name}'; valid solvers: {_valid_solvers()}")
        return v

    @model_validator(mode="after")
    def _non_empty(self):
        if not self.solvers or not self.ps:
            raise ValueError("sweep needs at least one solver and one edge probability")
        for p in self.ps:
            if not (0.0 < p <= 1.0):
                raise ValueError(f"edge probability {p} outside (0, 1]")
        return self

    def cells(self) -> List[ExperimentConfig]:
        cells = []
        for solver in self.solvers:
            for p in self.ps:
                cfg = self.base.model_copy(deep=True)
                cfg.solver.name = solver
                cfg.graph.p = p
                cfg.output.out = f"{self.base.output.out}/{solver.value}_p{p:g}"
                cells.append(cfg)
        return cells


# ---------- emitted records ----------

METRICS_HEADER = [
    "k", "gap", "consensus_err", "dist_sq", "alpha_min", "alpha_max",
    "vec_rounds", "scal_rounds", "bcasts", "ls_trials", "excluded",
]


class MetricsRow(BaseModel):
    k: int
    gap: float
    consensus_err: float
    dist_sq: Optional[float] = None
    alpha_min: float
    alpha_max: float
    vec_rounds: int
    scal_rounds: int
    bcasts: int
    ls_trials: int
    excluded: int = 0

    def as_csv_row(self) -> list:
        dist = "" if self.dist_sq is None else self.dist_sq
        return [
            self.k, self.gap, self.consensus_err, dist, self.alpha_min, self.alpha_max,
            self.vec_rounds, self.scal_rounds, self.bcasts, self.ls_trials, self.excluded,
        ]


class RunSummary(BaseModel):
    config: Dict[str, Any]
    u_star: float
    oracle_converged: bool
    iterations: int
    final_gap: Optional[float] = None
    final_consensus_err: Optional[float] = None
    ergodic_gap: Optional[float] = None
    ergodic_consensus_err: Optional[float] = None
    pg_extra_alpha: Optional[float] = None
    diverged: bool = False


class OracleReport(BaseModel):
    problem: ProblemKind
    u_star: float
    iterations: int
    converged: bool
    kkt_residual: float
    x_star: List[float]
