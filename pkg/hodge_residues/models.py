"""Pydantic data models for the hodge-residues system.

Scenario configuration, run reports and diagnostic flags. Complex numbers
cross the serialization boundary as ``ComplexValue`` objects; exact
rationals as ``[numerator, denominator]`` pairs.
"""

from __future__ import annotations

from enum import Enum
from fractions import Fraction
from typing import Any, Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


# ── Exceptions ──────────────────────────────────────────────────────────────
class HodgeResiduesError(Exception):
    """Base class for all errors raised by the package."""


class ArgumentError(HodgeResiduesError, ValueError):
    pass


class ChartError(HodgeResiduesError):
    pass


class SingularKernelError(HodgeResiduesError):
    def __init__(self, factor: str, message: str = ""):
        self.factor = factor
        super().__init__(message or f"kernel denominator {factor} vanishes")


class TubeParametrizationError(HodgeResiduesError):
    pass


class NonAdmissiblePathError(HodgeResiduesError):
    pass


class CutoffError(HodgeResiduesError):
    pass


class NotClosedError(HodgeResiduesError):
    def __init__(self, report: "ClosednessReport"):
        self.report = report
        super().__init__(
            f"current '{report.current}' failed the closedness check "
            f"(residual {report.tangential_residual:.3e})"
        )


class ScenarioError(HodgeResiduesError):
    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


# ── Enums ───────────────────────────────────────────────────────────────────
class Operation(str, Enum):
    pair = "pair"
    project = "project"
    solve = "solve"
    homotopy = "homotopy"
    exactness = "exactness"
    validate = "validate"


class PathFamily(str, Enum):
    exponential = "exponential"
    linear = "linear"
    quadratic = "quadratic"


class ProjectorCalibration(str, Enum):
    gram = "gram"
    recipe = "recipe"


class AntiholomorphicConstruction(str, Enum):
    affine = "affine"
    homogeneous = "homogeneous"


class CurrentKind(str, Enum):
    exact = "exact"
    antiholomorphic = "antiholomorphic"
    ideal = "ideal"
    zero = "zero"


class Projection(str, Enum):
    partition = "partition"
    axes = "axes"


class FlagCategory(str, Enum):
    degenerate_sample = "degenerate_sample"
    excluded_measure = "excluded_measure"
    empty_support = "empty_support"
    extrapolation = "extrapolation"
    structural_zero = "structural_zero"
    calibration = "calibration"
    compatibility = "compatibility"
    closedness = "closedness"
    cutoff = "cutoff"
    reducedness = "reducedness"
    acceptance = "acceptance"


class Verdict(str, Enum):
    passed = "pass"
    failed = "fail"
    exact = "exact"
    non_exact = "non-exact"
    structural_zero = "structural-zero"


# ── Common ──────────────────────────────────────────────────────────────────
class DiagnosticFlag(BaseModel):
    flag_id: str
    category: FlagCategory
    message: str


class ComplexValue(BaseModel):
    re: float = 0.0
    im: float = 0.0

    @classmethod
    def of(cls, value: complex) -> "ComplexValue":
        value = complex(value)
        return cls(re=value.real, im=value.imag)

    def to_complex(self) -> complex:
        return complex(self.re, self.im)

    def __abs__(self) -> float:
        return abs(self.to_complex())


class LadderEntry(BaseModel):
    level: float
    value: ComplexValue


# ── Scenario configuration ──────────────────────────────────────────────────
class PolynomialTermSpec(BaseModel):
    exponents: List[int]
    re: Tuple[int, int] = (0, 1)
    im: Tuple[int, int] = (0, 1)

    @field_validator("exponents")
    @classmethod
    def _non_negative(cls, v: List[int]) -> List[int]:
        if any(e < 0 for e in v):
            raise ValueError("exponents must be non-negative")
        return v

    @field_validator("re", "im")
    @classmethod
    def _nonzero_denominator(cls, v: Tuple[int, int]) -> Tuple[int, int]:
        if v[1] == 0:
            raise ValueError("denominator must be nonzero")
        return v

    def coefficient(self) -> Tuple[Fraction, Fraction]:
        return Fraction(*self.re), Fraction(*self.im)


class PolynomialSpec(BaseModel):
    terms: List[PolynomialTermSpec] = Field(default_factory=list)


class VarietySpec(BaseModel):
    name: str
    n: int = Field(ge=1)
    polys: List[PolynomialSpec] = Field(min_length=1)
    cutoffs: Optional[List[PolynomialSpec]] = None

    @model_validator(mode="after")
    def _check_shapes(self) -> "VarietySpec":
        if len(self.polys) > self.n:
            raise ValueError("codimension m must not exceed n")
        for k, poly in enumerate(self.polys):
            for t in poly.terms:
                if len(t.exponents) != self.n + 1:
                    raise ValueError(f"polys[{k}]: exponent length must be n+1={self.n + 1}")
        if self.cutoffs is not None:
            if len(self.cutoffs) != self.n + 1:
                raise ValueError("cutoffs: one chart polynomial per chart is required")
            for a, g in enumerate(self.cutoffs):
                for t in g.terms:
                    if len(t.exponents) != self.n:
                        raise ValueError(f"cutoffs[{a}]: exponent length must be n={self.n}")
        return self


class BihomogeneousTermSpec(BaseModel):
    z: List[int]
    zbar: List[int]
    re: Tuple[int, int] = (0, 1)
    im: Tuple[int, int] = (0, 1)


class CurrentSpec(BaseModel):
    name: str
    kind: CurrentKind
    # exact: ψ = numerator / |z|^(2s)
    psi_terms: List[BihomogeneousTermSpec] = Field(default_factory=list)
    psi_s: int = 0
    # antiholomorphic
    construction: AntiholomorphicConstruction = AntiholomorphicConstruction.affine
    h: Optional[PolynomialSpec] = None
    # ideal: Φ_α = F_k^(α) · w̄_j dw̄_l
    ideal_index: int = 0
    ideal_antiholomorphic_variable: int = 1
    ideal_differential: int = 1
    scale: Tuple[int, int] = (1, 1)


class SectionSpec(BaseModel):
    name: str
    h: PolynomialSpec


class QuadratureConfig(BaseModel):
    radial_nodes: int = Field(default=40, ge=4)
    angular_nodes: int = Field(default=48, ge=4)
    radial_scale: float = Field(default=1.0, gt=0)
    patch_radius: float = Field(default=0.45, gt=0)
    phase_nodes: int = Field(default=32, ge=4)
    t_ladder: List[float] = Field(default_factory=lambda: [0.02, 0.01, 0.005])
    path_family: PathFamily = PathFamily.exponential
    allow_non_admissible: bool = False
    eta: float = Field(default=1e-3, gt=0)
    eta_halvings: int = Field(default=3, ge=1)
    delta: float = Field(default=0.2, gt=0)
    delta_halvings: int = Field(default=3, ge=1)
    root_tol: float = Field(default=1e-12, gt=0)
    degeneracy_tol: float = Field(default=1e-8, gt=0)
    projection: Projection = Projection.partition
    projector_calibration: ProjectorCalibration = ProjectorCalibration.recipe
    projector_sign: Literal[-1, 1] = 1
    ideal_fit_radius: float = Field(default=1e-3, gt=0)
    closedness_tol: float = Field(default=1e-8, gt=0)
    compatibility_tol: float = Field(default=1e-6, gt=0)
    exactness_tol: float = Field(default=1e-2, gt=0)
    homotopy_tol: float = Field(default=5e-2, gt=0)
    rank_tol: float = Field(default=1e-1, gt=0)
    eval_points: int = Field(default=6, ge=1)
    workers: int = Field(default=1, ge=1)
    seed: int = Field(default=20260101, ge=0)

    @field_validator("t_ladder")
    @classmethod
    def _decreasing(cls, v: List[float]) -> List[float]:
        if not v or any(t <= 0 for t in v):
            raise ValueError("t_ladder must hold positive values")
        if any(a <= b for a, b in zip(v, v[1:])):
            raise ValueError("t_ladder must be strictly decreasing")
        return v


class Scenario(BaseModel):
    name: str
    schema_version: int = 1
    variety: VarietySpec
    currents: List[CurrentSpec] = Field(default_factory=list)
    sections: List[SectionSpec] = Field(default_factory=list)
    operations: List[Operation] = Field(default_factory=list)
    quadrature: QuadratureConfig = Field(default_factory=QuadratureConfig)
    reference_current: Optional[str] = None

    @model_validator(mode="after")
    def _check_references(self) -> "Scenario":
        names = {c.name for c in self.currents}
        if len(names) != len(self.currents):
            raise ValueError("current names must be unique")
        if self.reference_current is not None and self.reference_current not in names:
            raise ValueError(f"reference_current '{self.reference_current}' is not a declared current")
        return self


# ── Reports ─────────────────────────────────────────────────────────────────
class ResidueReport(BaseModel):
    value: ComplexValue
    ladder: List[LadderEntry] = Field(default_factory=list)
    extrapolated: ComplexValue
    error_estimate: float = 0.0
    eta: float = 0.0
    excluded_measure: float = 0.0
    flags: List[DiagnosticFlag] = Field(default_factory=list)


class WeightedTubeReport(BaseModel):
    weighted: ResidueReport
    unweighted: ResidueReport
    difference: float


class ConstantFactor(BaseModel):
    name: str
    value: str
    note: str = ""


class ConstantProvenance(BaseModel):
    label: str
    n: int
    m: int
    d: int
    q: int
    r: Optional[int] = None
    factors: List[ConstantFactor] = Field(default_factory=list)
    exact: str
    numeric: ComplexValue
    calibration: Optional[str] = None


class WitnessReport(BaseModel):
    name: str
    verdict: Verdict
    residual: float = 0.0
    details: Dict[str, Any] = Field(default_factory=dict)


class ClosednessReport(BaseModel):
    current: str
    closed: bool
    symbolic_zero: bool
    structural_zero: bool
    tangential_residual: float
    ambient_fit_residual: Optional[float] = None
    samples: int = 0


class PointValue(BaseModel):
    point: List[ComplexValue]
    chart: int
    coefficients: Dict[str, ComplexValue] = Field(default_factory=dict)
    chart_coefficients: Dict[str, ComplexValue] = Field(default_factory=dict)


class ProjectorOutput(BaseModel):
    current: str
    structural_zero: bool
    values: List[PointValue] = Field(default_factory=list)
    r_terms: Dict[int, List[PointValue]] = Field(default_factory=dict)
    moments: List[ComplexValue] = Field(default_factory=list)
    calibration: Optional[ConstantProvenance] = None
    smoothness: Optional[float] = None


class SolverOutput(BaseModel):
    current: str
    values: List[PointValue] = Field(default_factory=list)
    delta: List[float] = Field(default_factory=list)
    ladders: List[List[LadderEntry]] = Field(default_factory=list)
    error_estimates: List[float] = Field(default_factory=list)
    flags: List[DiagnosticFlag] = Field(default_factory=list)


class HomotopyReport(BaseModel):
    current: str
    section: str
    pairing: ComplexValue
    solver_term: ComplexValue
    projector_term: ComplexValue
    solver_term_structural: bool
    projector_term_structural: bool
    residual: float
    scale: float
    error_estimate: float
    verdict: Verdict
    dbar_section: float = 0.0
    solver_norm: Optional[float] = None
    solver_bound: float = 0.0
    flags: List[DiagnosticFlag] = Field(default_factory=list)


class ExactnessReport(BaseModel):
    current: str
    verdict: Verdict
    pairings: List[ComplexValue] = Field(default_factory=list)
    max_pairing: float = 0.0
    scale: float = 1.0


class RankReport(BaseModel):
    singular_values: List[float]
    rank: int
    gap: Optional[float] = None


class BochnerMartinelliReport(BaseModel):
    point: List[ComplexValue]
    expected: ComplexValue
    reproduced: ComplexValue
    residual: float
    j_term_structural: bool = True


class OperationResult(BaseModel):
    operation: Operation
    verdict: Verdict
    seconds: float = 0.0
    pairings: Dict[str, ResidueReport] = Field(default_factory=dict)
    projector: List[ProjectorOutput] = Field(default_factory=list)
    solver: List[SolverOutput] = Field(default_factory=list)
    homotopy: List[HomotopyReport] = Field(default_factory=list)
    exactness: List[ExactnessReport] = Field(default_factory=list)
    rank: Optional[RankReport] = None
    witnesses: List[WitnessReport] = Field(default_factory=list)
    flags: List[DiagnosticFlag] = Field(default_factory=list)


class RunReport(BaseModel):
    scenario: str
    seed: int
    workers: int
    tolerance_scale: float = 1.0
    results: List[OperationResult] = Field(default_factory=list)
    constants: List[ConstantProvenance] = Field(default_factory=list)
    excluded_measure: float = 0.0
    timing: Dict[str, float] = Field(default_factory=dict)
    flags: List[DiagnosticFlag] = Field(default_factory=list)
    failed: bool = False
    notes: List[str] = Field(default_factory=list)
