# app/models.py
import math
from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class LabModel(BaseModel):
    """Base con soporte para arreglos numpy y números complejos"""
    model_config = ConfigDict(arbitrary_types_allowed=True, populate_by_name=True)


def as_complex(value: Any) -> complex:
    if isinstance(value, (list, tuple)) and len(value) == 2:
        return complex(float(value[0]), float(value[1]))
    if isinstance(value, str):
        return complex(value.replace(" ", "").replace("i", "j"))
    return complex(value)


# --- global_family ---

class GlobalSolutionParams(LabModel):
    """Parámetros (N, λ, ξ, h₀) de la familia global explícita"""
    N: int = Field(ge=0)
    lam: float = Field(alias="lambda")
    xi: complex = 0j
    h0: float = Field(default=1.0, gt=0)

    @field_validator("xi", mode="before")
    @classmethod
    def _coerce_xi(cls, v):
        return as_complex(v)

    @field_validator("lam")
    @classmethod
    def _finite_lambda(cls, v):
        if not math.isfinite(v):
            raise ValueError("lambda debe ser finito")
        return v

    @property
    def c0(self) -> float:
        return 8.0 * (self.N + 1) ** 2


class KernelMatrix(LabModel):
    probes: List[complex]
    entries: np.ndarray
    scale_s: float
    eps: float
    thetas: List[float]
    det: float
    m2: np.ndarray
    det_m2: complex
    det_m2_leading: complex
    leading_ratio: complex

    @model_validator(mode="after")
    def _check(self):
        if len(self.probes) != 3 or len(set(self.probes)) != 3:
            raise ValueError("se requieren tres puntos distintos")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("entradas no finitas en la matriz de núcleo")
        return self


class MassResult(LabModel):
    value: float
    error_estimate: float
    tail: float
    radius: float


# --- circulant_algebra ---

class CirculantSystem(LabModel):
    N: int = Field(ge=1)
    d: np.ndarray
    D: float
    A: Optional[np.ndarray] = None
    A_inv: Optional[np.ndarray] = None
    beta: np.ndarray
    Lambda_const: float
    condition_number: Optional[float] = None


class IdentityReport(LabModel):
    identity_name: str
    N: int
    index: Optional[int] = None
    lhs: complex
    rhs: complex
    abs_error: float
    tol: float
    passed: bool = Field(alias="pass")


# --- pohozaev_quadrature ---

class ToleranceBudget(LabModel):
    """Presupuesto del término de error E = O(δ³) + O(μ e^{-μ})"""
    delta_term: float = 0.0
    mu_term: float = 0.0

    @property
    def total(self) -> float:
        return self.delta_term + self.mu_term


class PohozaevReport(LabModel):
    center: complex
    r: float
    xi_dir: complex
    lhs_volume: float
    lhs_flux: float
    rhs_boundary: float
    residual: float
    n_boundary: int
    budget: ToleranceBudget = Field(default_factory=ToleranceBudget)


class PairDifferenceReport(LabModel):
    center: complex
    r: float
    xi_dir: complex
    flux_V_dxi_w: float
    flux_w_dxi_V: float
    gradient_cross: float
    total: float
    budget: ToleranceBudget = Field(default_factory=ToleranceBudget)


# --- blowup_asymptotics ---

class BlowupData(LabModel):
    N: int = Field(ge=1)
    delta: float = Field(gt=0)
    mu: float
    L: complex = 0j
    sigma: float
    m: List[complex]
    Q: List[complex]
    theta: float = 0.0
    sign_convention: Optional[str] = None

    @model_validator(mode="after")
    def _check(self):
        if len(self.m) != self.N + 1 or len(self.Q) != self.N + 1:
            raise ValueError("m y Q deben tener N+1 entradas")
        if abs(self.m[0]) > 1e-12:
            raise ValueError("m₀ debe ser 0 (Q₀ fijo en e₁)")
        return self


class GluckExpansion(LabModel):
    center: complex
    u0: float
    eps: float
    q: complex
    q_lift: complex = 0j
    q_predicted: complex
    V0: float
    grad_V0: complex
    lap_log_V0: float
    log_coefficient: float
    psi: Any = None
    lift_radius: float
    remainder_sup: float
    remainder_ratio: float


class FitResult(LabModel):
    params: GlobalSolutionParams
    sup_difference: float
    sup_difference_outside: float
    iterations: int = 0


class AppendixAMatch(LabModel):
    params: GlobalSolutionParams
    max_scaled_residual: float
    iterations: int
    probes: List[complex]


# --- liouville_solver ---

class CoefficientKind(str, Enum):
    POLYNOMIAL = "polynomial"
    EXP_POLYNOMIAL = "exp_polynomial"
    MODULATED = "modulated"


class CoefficientSpec(LabModel):
    """h(x) = P(x), exp(P(x)) o |1 − c x^{k}|^{-4}·exp(P(x)), con h(0) = 1"""
    kind: CoefficientKind = CoefficientKind.POLYNOMIAL
    terms: Dict[str, float] = Field(default_factory=lambda: {"0,0": 1.0})
    modulation: complex = 0j
    modulation_power: int = Field(default=1, ge=1)

    @field_validator("modulation", mode="before")
    @classmethod
    def _coerce_modulation(cls, v):
        return as_complex(v)

    @model_validator(mode="after")
    def _normalized(self):
        constant = self.terms.get("0,0", 0.0)
        expected = 1.0 if self.kind == CoefficientKind.POLYNOMIAL else 0.0
        if abs(constant - expected) > 1e-14:
            raise ValueError(f"h(0) debe ser 1 (término constante {constant})")
        return self

    @property
    def is_rotation_invariant(self) -> bool:
        nonconstant = [k for k, v in self.terms.items() if k != "0,0" and v != 0.0]
        return not nonconstant and (self.kind != CoefficientKind.MODULATED or self.modulation == 0)


class PolarGridSpec(LabModel):
    n_r: int = Field(ge=8)
    n_theta: int = Field(ge=8)
    grading: float = Field(default=0.0, ge=0.0)
    cluster_radius: float = Field(default=0.0, ge=0.0)
    angular_grading: float = Field(default=0.0, ge=0.0)
    angular_clusters: int = Field(default=1, ge=1)


class DiskProblem(LabModel):
    N: int = Field(ge=0)
    tau: float = Field(gt=0)
    coefficient: CoefficientSpec = Field(default_factory=CoefficientSpec)
    grid: PolarGridSpec
    boundary_value: float = 0.0
    boundary_profile: Optional[List[float]] = None

    @model_validator(mode="after")
    def _check(self):
        if self.grid.n_theta % (4 * (self.N + 1)) != 0:
            raise ValueError(f"n_theta={self.grid.n_theta} debe ser múltiplo de 4(N+1)={4 * (self.N + 1)}")
        if self.grid.angular_grading > 0 and self.grid.n_theta % (2 * self.grid.angular_clusters) != 0:
            raise ValueError("n_theta debe ser múltiplo de 2·angular_clusters")
        if self.grid.cluster_radius >= self.tau:
            raise ValueError("cluster_radius debe estar dentro del disco")
        if self.boundary_profile is not None and len(self.boundary_profile) != self.grid.n_theta:
            raise ValueError("boundary_profile debe tener n_theta valores")
        return self


class Peak(LabModel):
    location: complex
    height: float

    @property
    def radius(self) -> float:
        return abs(self.location)

    @property
    def angle(self) -> float:
        return math.atan2(self.location.imag, self.location.real) % (2 * math.pi)


class SolutionField(LabModel):
    problem: DiskProblem
    values: np.ndarray
    peaks: List[Peak] = Field(default_factory=list)
    mu: float = 0.0
    delta: float = 1.0
    theta: float = 0.0
    residual_norm: float = math.inf
    residual_history: List[float] = Field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    phase_condition: bool = False
    mass: Optional[float] = None


# --- cli_runner ---

class ExperimentCommand(str, Enum):
    IDENTITIES = "identities"
    FAMILY = "family"
    LOCATE = "locate"
    SOLVE = "solve"
    BRANCH = "branch"
    POHOZAEV = "pohozaev"
    APPROX = "approx"
    GLUCK = "gluck"


class ExperimentConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    command: ExperimentCommand
    params: Dict[str, Any] = Field(default_factory=dict)
    output_dir: str
    seed: int = 12345


class ProcessingStatus(str, Enum):
    SUCCESS = "success"
    FAILED = "failed"
    PARTIAL = "partial"


class CheckResult(BaseModel):
    """Verificación con valor medido y tolerancia (nunca un pass/fail desnudo)"""
    name: str
    value: float
    tolerance: float
    passed: bool


class ExperimentResult(BaseModel):
    command: ExperimentCommand
    status: ProcessingStatus
    checks: List[CheckResult] = Field(default_factory=list)
    artifacts: List[str] = Field(default_factory=list)
    elapsed: float = 0.0
    cached: bool = False
