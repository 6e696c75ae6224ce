"""
Pydantic Models - Experiment configuration and report schemas
Validates structure only; mathematical guards live in the services
"""

import hashlib
import json
import math
from typing import Any, Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from api.errors import NonlocalError
from config import CORPUS_SIZE, DEFAULT_GRID_N, DEFAULT_PERIOD, STABILITY_TOL
from services.funcspace import GridSpec
from services.levykernel import KernelCoefficient, LevyKernel, coefficient_from_spec
from services.modulus import BernsteinSpec, Modulus
from services.nonlocal_operator import QuadratureSettings


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ===== BUILDING BLOCKS =====

class ModulusSpec(_Strict):
    """One modulus family with its parameters"""

    family: Literal["power", "power_log", "power_log1p", "tabulated"] = "power"
    alpha: Optional[float] = Field(None, gt=0)
    beta: Optional[float] = None
    sign: Literal[-1, 1] = 1
    r: Optional[List[float]] = None
    values: Optional[List[float]] = None

    @model_validator(mode="after")
    def parameters_present(self):
        if self.family == "tabulated":
            if not self.r or not self.values or len(self.r) != len(self.values):
                raise ValueError("tabulated modulus needs r and values of equal length")
        elif self.alpha is None:
            raise ValueError(f"{self.family} modulus needs alpha")
        if self.family == "power_log1p" and self.beta is None:
            raise ValueError("power_log1p modulus needs beta")
        return self

    def build(self) -> Modulus:
        if self.family == "power":
            return Modulus.power(self.alpha)
        if self.family == "power_log":
            return Modulus.power_log(self.alpha, 1.0 if self.beta is None else self.beta, self.sign)
        if self.family == "power_log1p":
            return Modulus.power_log1p(self.alpha, self.beta)
        return Modulus.tabulated(self.r, self.values)


class BernsteinModel(_Strict):
    family: Literal["stable", "stable_log"] = "stable"
    alpha: float = Field(..., gt=0, lt=1)
    beta: Optional[float] = None

    def build(self) -> BernsteinSpec:
        if self.family == "stable":
            return BernsteinSpec.stable(self.alpha)
        if self.beta is None:
            raise ValueError("stable_log needs beta")
        return BernsteinSpec.stable_log(self.alpha, self.beta)


CoefficientKind = Literal["constant", "cosine", "bump", "step", "asymmetric", "tabulated"]


class CoefficientSpec(_Strict):
    kind: CoefficientKind = "constant"
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def buildable(self):
        try:
            self.build()
        except NonlocalError as exc:
            raise ValueError(exc.describe()) from exc
        return self

    def build(self) -> KernelCoefficient:
        return coefficient_from_spec(self.kind, **self.params)


class KernelSpec(_Strict):
    """The order function comes from varphi, or from a Bernstein function when varphi is absent"""

    varphi: Optional[ModulusSpec] = None
    bernstein: Optional[BernsteinModel] = None
    coefficient: CoefficientSpec = Field(default_factory=CoefficientSpec)

    @model_validator(mode="after")
    def one_order_source(self):
        if self.varphi is None and self.bernstein is None:
            raise ValueError("kernel needs varphi or bernstein")
        return self

    def build(self, dim: int = 1) -> LevyKernel:
        coefficient = self.coefficient.build()
        if self.varphi is not None:
            b = self.bernstein.build() if self.bernstein else None
            return LevyKernel(self.varphi.build(), dim, coefficient, b)
        return LevyKernel.from_bernstein(self.bernstein.build(), dim, coefficient)


class GridConfig(_Strict):
    n: int = DEFAULT_GRID_N
    dim: Literal[1, 2] = 1
    period: float = Field(DEFAULT_PERIOD, gt=0)

    @field_validator("n")
    @classmethod
    def power_of_two(cls, v):
        if v < 8 or v & (v - 1):
            raise ValueError("n must be a power of two, at least 8")
        return v

    def to_spec(self, n: Optional[int] = None) -> GridSpec:
        return GridSpec(n or self.n, self.dim, self.period)


class QuadratureSpec(_Strict):
    inner_cutoff_cells: float = Field(4.0, gt=0)
    inner_cutoff: Optional[float] = Field(None, gt=0, lt=1)
    outer_cutoff: float = Field(2.0, ge=1)
    shells_per_decade: int = Field(64, ge=1)
    angles: int = Field(16, ge=1)
    tail_tol: float = Field(1e-8, gt=0, lt=1)

    def to_settings(self) -> QuadratureSettings:
        return QuadratureSettings(**self.model_dump())


class SweepSpec(_Strict):
    t: List[float] = Field(default_factory=lambda: [0.25, 1.0, 4.0])
    x: List[float] = Field(default_factory=lambda: [2.0 ** -j for j in range(-3, 7)])
    r: List[float] = Field(default_factory=lambda: [0.25, 0.125, 0.0625])
    eps: List[float] = Field(default_factory=lambda: [2.0 ** -j for j in range(3, 8)])
    k: List[int] = Field(default_factory=lambda: [1, 2])
    resolutions: List[int] = Field(default_factory=list)

    @field_validator("t", "r", "eps")
    @classmethod
    def positive(cls, v):
        if not v or any(not value > 0 for value in v):
            raise ValueError("sweep values must be positive and non-empty")
        return v


class Tolerances(_Strict):
    stability: float = Field(STABILITY_TOL, gt=0)
    twosided: float = 10.0
    ks: float = 0.02
    freezing_factor: float = 10.0


class MonteCarloSpec(_Strict):
    alpha: float = Field(0.5, gt=0, lt=1)
    t: float = Field(1.0, gt=0)
    n: int = Field(100_000, ge=1)
    seed: int = 0
    dim: Literal[1, 2] = 1
    wrap: bool = True


# ===== EXPERIMENT CONFIGURATION =====

class ExperimentConfig(_Strict):
    """
    One experiment: moduli, kernel, grid, corpus seeds and sweeps

    Every field has a default except psi and kernel.
    """

    name: str = "experiment"
    psi: ModulusSpec
    kernel: KernelSpec
    grid: GridConfig = Field(default_factory=GridConfig)
    quadrature: QuadratureSpec = Field(default_factory=QuadratureSpec)
    symbol: Literal["subordinate", "quadrature", "fractional"] = "quadrature"
    realization: Literal["solve", "time_quadrature"] = "solve"
    seeds: List[int] = Field(default_factory=lambda: list(range(CORPUS_SIZE)))
    x0: Optional[List[float]] = None
    sweeps: SweepSpec = Field(default_factory=SweepSpec)
    tolerances: Tolerances = Field(default_factory=Tolerances)
    montecarlo: MonteCarloSpec = Field(default_factory=MonteCarloSpec)
    threads: Optional[int] = Field(None, ge=1)
    output_dir: Optional[str] = None

    @field_validator("seeds")
    @classmethod
    def seeds_distinct(cls, v):
        if not v or len(set(v)) != len(v):
            raise ValueError("seeds must be non-empty and distinct")
        return v

    @model_validator(mode="after")
    def point_matches_dim(self):
        if self.x0 is not None and len(self.x0) != self.grid.dim:
            raise ValueError(f"x0 needs {self.grid.dim} components")
        return self

    def resolutions(self) -> List[int]:
        return self.sweeps.resolutions or [self.grid.n, 2 * self.grid.n]

    def freezing_point(self) -> List[float]:
        return self.x0 if self.x0 is not None else [self.grid.period / 2.0] * self.grid.dim

    def config_hash(self) -> str:
        canonical = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "name": "stable_alpha1_psi05",
                "psi": {"family": "power", "alpha": 0.5},
                "kernel": {"varphi": {"family": "power", "alpha": 1.0}},
                "grid": {"n": 1024},
            }
        },
    )


# ===== REPORTS =====

class ResolutionPoint(BaseModel):
    n: int
    c_hat: float


class RatioReport(BaseModel):
    """Empirical constant of one experiment with its provenance"""

    experiment: str
    ratios: List[float]
    seeds: List[int]
    c_hat: float
    resolution_trace: List[ResolutionPoint] = Field(default_factory=list)
    config_hash: str = ""
    prop_branch: Optional[str] = None
    details: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("ratios")
    @classmethod
    def finite_nonnegative(cls, v):
        if any(not math.isfinite(x) or x < 0 for x in v):
            raise ValueError("ratios must be finite and nonnegative")
        return v

    def stability(self) -> float:
        """Relative change of c_hat between the first and last resolution"""
        if len(self.resolution_trace) < 2:
            return 0.0
        first, last = self.resolution_trace[0].c_hat, self.resolution_trace[-1].c_hat
        return abs(last - first) / max(abs(first), 1e-300)

    def rows(self) -> List[Dict[str, Any]]:
        return [{"seed": s, "ratio": r} for s, r in zip(self.seeds, self.ratios)]


class PerturbationRow(BaseModel):
    r: float
    coefficient: float
    fit_constant: float
    fit_epsilon: float
    h_ratio: float
    freezing_residual: float
    freezing_budget: float


class PerturbationReport(BaseModel):
    experiment: str = "perturbation"
    rows: List[PerturbationRow]
    monotone: bool
    config_hash: str = ""
    prop_branch: Optional[str] = None
    items: List[Dict[str, Any]] = Field(default_factory=list)


class CheckResult(BaseModel):
    """One verify-all criterion"""

    name: str
    passed: bool
    value: Optional[float] = None
    threshold: Optional[float] = None
    seconds: float = 0.0
    message: str = ""
