"""Request and response models for the experiment service.

These models are the single validated description of every experiment;
the CLI builds them from config files, the HTTP service accepts them as
JSON bodies, and the runners consume them directly.  Validation is
eager: every referenced name resolves before any computation starts.
"""

from __future__ import annotations

import io
import math
from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from .distributions import (
    Beta,
    Distribution,
    DistributionPair,
    FatCantorUniform,
    Gaussian,
    Product,
    Uniform,
)
from .nn_measure import MOMENT_FUNCTION_NAMES, MomentFunction, make_moment_function


class DistributionModel(BaseModel):
    kind: Literal["beta", "gaussian", "uniform", "fat_cantor_uniform", "product"]
    alpha: Optional[float] = None
    beta: Optional[float] = None
    mean: Optional[float] = None
    variance: Optional[float] = None
    a: Optional[float] = None
    b: Optional[float] = None
    depth: Optional[int] = None
    parts: Optional[list["DistributionModel"]] = None

    @model_validator(mode="after")
    def _check_params(self) -> "DistributionModel":
        self.build()  # constructor errors surface at validation time
        return self

    def build(self) -> Distribution:
        if self.kind == "beta":
            if self.alpha is None or self.beta is None:
                raise ValueError("beta distribution needs alpha and beta")
            return Beta(self.alpha, self.beta)
        if self.kind == "gaussian":
            if self.mean is None or self.variance is None:
                raise ValueError("gaussian distribution needs mean and variance")
            return Gaussian(self.mean, self.variance)
        if self.kind == "uniform":
            if self.a is None or self.b is None:
                raise ValueError("uniform distribution needs a and b")
            return Uniform(self.a, self.b)
        if self.kind == "fat_cantor_uniform":
            if self.depth is None:
                raise ValueError("fat_cantor_uniform needs a depth")
            return FatCantorUniform(self.depth)
        if not self.parts:
            raise ValueError("product distribution needs parts")
        return Product(tuple(p.build() for p in self.parts))


class PairModel(BaseModel):
    mu0: DistributionModel
    mu1: DistributionModel

    @model_validator(mode="after")
    def _check_pair(self) -> "PairModel":
        self.build()
        return self

    def build(self) -> DistributionPair:
        return DistributionPair(self.mu0.build(), self.mu1.build())


class MomentFunctionModel(BaseModel):
    name: str
    depth: int = 5

    @field_validator("name")
    @classmethod
    def _known_name(cls, v: str) -> str:
        if v not in MOMENT_FUNCTION_NAMES:
            raise ValueError(f"unknown moment function {v!r}; pick from {MOMENT_FUNCTION_NAMES}")
        return v

    def build(self) -> MomentFunction:
        return make_moment_function(self.name, depth=self.depth)


class QueryModel(BaseModel):
    transform: Literal["y", "y_squared", "log_y"] = "y"
    filter_kind: Literal["none", "x_below", "x_above"] = "none"
    filter_value: float = 0.0


class ToleranceModel(BaseModel):
    max_deviation: Optional[float] = None


_EXAMPLES = Literal["beta", "gaussian", "fat_cantor"]


class Table1Request(BaseModel):
    examples: list[_EXAMPLES] = Field(default=["beta", "gaussian", "fat_cantor"])
    n_grid: list[int] = Field(default=[100, 1000, 10_000])
    m: int = 1_000_000
    seeds: int = 10
    master_seed: int = 2024
    threads: int = 1

    @field_validator("n_grid")
    @classmethod
    def _positive_grid(cls, v: list[int]) -> list[int]:
        if not v or any(n < 1 for n in v):
            raise ValueError("n_grid must be a non-empty list of positive sizes")
        return v

    @field_validator("m", "seeds")
    @classmethod
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    def estimated_seconds(self) -> float:
        """Crude single-core runtime estimate used for budget warnings."""
        per_cell = self.m / 1.5e6
        cells = len(self.examples) * len(self.n_grid) * self.seeds
        return cells * per_cell + sum(self.n_grid) * len(self.examples) * self.seeds / 2e6


class Table1RowModel(BaseModel):
    example: str
    n: int
    replicate: Optional[int]
    value: float
    mu0_direct: float
    limit: float


class Table1Response(BaseModel):
    rows: list[Table1RowModel]
    config: Table1Request


class FigureDataRequest(BaseModel):
    example: Optional[_EXAMPLES] = None
    pair: Optional[PairModel] = None
    fn: Optional[MomentFunctionModel] = None
    n: int = 1000
    m: int = 1_000_000
    master_seed: int = 2024
    threads: int = 1
    subinterval: Optional[tuple[float, float]] = None

    @model_validator(mode="after")
    def _resolve(self) -> "FigureDataRequest":
        if self.example is None and self.pair is None:
            raise ValueError("figure data needs an example name or an explicit pair")
        if self.subinterval is None and self.example == "fat_cantor":
            self.subinterval = (0.2, 0.32)
        if self.subinterval is not None and not self.subinterval[0] < self.subinterval[1]:
            raise ValueError("subinterval bounds must be increasing")
        return self


class FigureRowModel(BaseModel):
    x: float
    weight: float
    n_weight: float
    density_ratio: float


class FigureDataResponse(BaseModel):
    rows: list[FigureRowModel]
    subinterval_rows: list[FigureRowModel]
    config: FigureDataRequest


class MarDemoRequest(BaseModel):
    source: Literal["synthetic", "csv"] = "synthetic"
    rows: int = 20_000
    seeds: int = 10
    master_seed: int = 2024
    threads: int = 1
    query: QueryModel = Field(default_factory=QueryModel)
    csv_text: Optional[str] = None
    table_schema: Optional[dict[str, str]] = None

    @model_validator(mode="after")
    def _check_source(self) -> "MarDemoRequest":
        if self.source == "csv":
            if not self.csv_text or not self.table_schema:
                raise ValueError("csv source needs csv_text and table_schema")
        elif self.rows < 4:
            raise ValueError("synthetic table needs at least 4 rows")
        return self

    def to_table(self):
        from .missing_data import ingest_table

        return ingest_table(io.StringIO(self.csv_text), self.table_schema)


class MarDemoRowModel(BaseModel):
    method: str
    query: str
    value: Optional[float]
    n_observed: int
    n_missing: int
    replicate: Optional[int]


class MarDemoResponse(BaseModel):
    rows: list[MarDemoRowModel]
    analytic_target: Optional[float]
    nn_closer_count: Optional[int]
    config: MarDemoRequest


class ShiftDemoRequest(BaseModel):
    scenario: Literal["linear_shift", "constant_selection"] = "linear_shift"
    train_rows: int = 2000
    validation_rows: int = 2000
    test_rows: int = 4000
    noise_sd: float = 0.5
    test_sd_scale: float = math.sqrt(1.5)
    seeds: int = 10
    master_seed: int = 2024
    threads: int = 1

    @field_validator("train_rows", "validation_rows", "test_rows", "seeds")
    @classmethod
    def _positive(cls, v: int) -> int:
        if v < 1:
            raise ValueError("must be >= 1")
        return v

    @field_validator("noise_sd", "test_sd_scale")
    @classmethod
    def _positive_float(cls, v: float) -> float:
        if not v > 0:
            raise ValueError("must be positive")
        return v


class ShiftDemoRowModel(BaseModel):
    hypothesis: str
    risk: float
    method: str
    replicate: int


class ShiftDemoResponse(BaseModel):
    rows: list[ShiftDemoRowModel]
    estimated_test_error: Optional[float]
    true_test_risk: Optional[float]
    selected: Optional[str]
    selected_count: Optional[dict[str, int]]
    config: ShiftDemoRequest


_CHECKS = Literal["assumptions", "voronoi_limit", "variance_bound", "discrepancy_trend"]


class DiagnosticsRequest(BaseModel):
    example: Optional[_EXAMPLES] = None
    pair: Optional[PairModel] = None
    fn: Optional[MomentFunctionModel] = None
    checks: list[_CHECKS] = Field(
        default=["assumptions", "voronoi_limit", "variance_bound", "discrepancy_trend"]
    )
    orders: list[float] = Field(default=[1.5, 2.0])
    n_grid: list[int] = Field(default=[100, 1000])
    m: int = 200_000
    bins: int = 20
    seeds: int = 10
    master_seed: int = 2024
    threads: int = 1
    tolerances: ToleranceModel = Field(default_factory=ToleranceModel)

    @model_validator(mode="after")
    def _resolve(self) -> "DiagnosticsRequest":
        if self.example is None and self.pair is None:
            raise ValueError("diagnostics needs an example name or an explicit pair")
        if not self.n_grid or any(n < 2 for n in self.n_grid):
            raise ValueError("n_grid must contain sizes >= 2")
        if any(o <= 1.0 for o in self.orders):
            raise ValueError("orders must be > 1")
        return self


class DiagnosticsRowModel(BaseModel):
    check: str
    params: str
    value: str
    threshold: str
    verdict: str


class DiagnosticsResponse(BaseModel):
    rows: list[DiagnosticsRowModel]
    all_passed: bool
    table_text: str
    config: DiagnosticsRequest


class HealthResponse(BaseModel):
    status: str
    version: str
