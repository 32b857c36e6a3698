"""Hodge projector L, solution operator I and the decomposition checks.

After the overall phase of ζ is integrated out, the projector kernel is a
homogeneous polynomial of degree d−n−1 in ζ, so L has finite rank:

    L[φ](z) = κ Σ_μ 𝒦_μ(z)·⟨φ, γ_μ⟩

over the monomial dualizing sections γ_μ. The solver is a fibered residue
over V in ζ; its phase integral is done by contour deformation around the
poles of 1/B, and a δ-disk around ζ = z is removed and extrapolated away.
"""

from __future__ import annotations

import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from math import factorial
from typing import Callable, Dict, List, Optional, Sequence, Tuple, TypeVar

import numpy as np
from scipy import linalg
from scipy.special import roots_legendre

from .currents import (
    DualizingSection,
    ResidualCurrent,
    check_closed,
    current_numerator,
    monomials,
    pair_current,
    pair_densities,
    partition_weight,
    section_basis,
    section_dbar,
)
from .forms import (
    ColumnKind,
    Denominator,
    KernelColumn,
    KernelColumnSpec,
    KernelPoint,
    bracket_coefficients,
    kernel_columns,
    projector_constant,
    solver_constant,
)
from .hefer import HeferCache, HeferDecomposition, hefer_decompose
from .models import (
    ArgumentError,
    BochnerMartinelliReport,
    ClosednessReport,
    ComplexValue,
    ConstantFactor,
    ConstantProvenance,
    CutoffError,
    DiagnosticFlag,
    ExactnessReport,
    FlagCategory,
    HomotopyReport,
    LadderEntry,
    NotClosedError,
    PointValue,
    ProjectorCalibration,
    ProjectorOutput,
    QuadratureConfig,
    RankReport,
    ResidueReport,
    SingularKernelError,
    SolverOutput,
    Verdict,
)
from .polycore import HomogeneousPolynomial, Variety, chart_indices, lift, plane_grid, solve_fibers
from .residue import (
    ChartSamples,
    base_tangents,
    eta_ladder,
    form_det,
    ladder_report,
    phase_tangents,
    polynomial_limit,
    prepare_samples,
    richardson_limit,
    split_axes,
)

logger = logging.getLogger(__name__)

Index = Tuple[int, ...]
EvalPoint = Tuple[int, np.ndarray]
T = TypeVar("T")


def form_label(prefix: str, J: Index) -> str:
    return prefix + "".join(str(j) for j in J) if J else "1"


def _sphere(z: np.ndarray) -> np.ndarray:
    z = np.atleast_2d(np.asarray(z, dtype=complex))
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def _merge_sign(a: Index, b: Index) -> int:
    inversions = sum(1 for x in a for y in b if x > y)
    return -1 if inversions % 2 else 1


# ── Context ─────────────────────────────────────────────────────────────────
@dataclass
class OperatorContext:
    """Samples of V in every chart plus the Hefer data the operators share."""

    variety: Variety
    config: QuadratureConfig
    samples: Dict[int, ChartSamples]
    hefer: List[HeferDecomposition]
    tolerance_scale: float = 1.0
    _closed: Dict[int, Tuple[ResidualCurrent, ClosednessReport]] = field(default_factory=dict, repr=False)
    _moments: Dict[int, Tuple[ResidualCurrent, List[ResidueReport]]] = field(default_factory=dict, repr=False)
    _projector: Optional["ProjectorModel"] = field(default=None, repr=False)
    _solved: Dict[int, Tuple[ResidualCurrent, SolverOutput]] = field(default_factory=dict, repr=False)

    @classmethod
    def build(
        cls,
        variety: Variety,
        config: QuadratureConfig,
        cache: Optional[HeferCache] = None,
        tolerance_scale: float = 1.0,
    ) -> "OperatorContext":
        grid = plane_grid(variety.n - variety.m, config.radial_nodes, config.angular_nodes, config.radial_scale)
        charts = list(range(variety.n + 1))

        def sample(alpha: int) -> ChartSamples:
            return prepare_samples(variety, alpha, grid, config.projection, config.root_tol,
                                   config.degeneracy_tol, config.seed + alpha)

        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            samples = dict(zip(charts, pool.map(sample, charts)))
        hefer = [hefer_decompose(P, cache) for P in variety.polys]
        logger.info("sampled %s: %s points per chart", variety, [samples[a].size for a in charts])
        return cls(variety, config, samples, hefer, tolerance_scale)

    @property
    def points(self) -> Dict[int, np.ndarray]:
        return {a: s.points for a, s in self.samples.items()}

    @property
    def excluded_measure(self) -> float:
        return float(sum(s.excluded for s in self.samples.values()))

    def tolerance(self, value: float) -> float:
        return value * self.tolerance_scale

    def map(self, fn, items: Sequence) -> List:
        """Order-preserving parallel map over independent items."""
        if self.config.workers <= 1 or len(items) <= 1:
            return [fn(x) for x in items]
        with ThreadPoolExecutor(max_workers=self.config.workers) as pool:
            return list(pool.map(fn, items))


def evaluation_points(ctx: OperatorContext, count: int) -> List[EvalPoint]:
    """Deterministic sample of points of V away from the η-cutoff and from infinity."""
    rng = np.random.default_rng(ctx.config.seed)
    for alpha in sorted(ctx.samples):
        chart = ctx.samples[alpha]
        if not chart.size:
            continue
        W = chart.points
        g = np.abs(ctx.variety.cutoff(alpha, W))
        keep = np.flatnonzero((g > ctx.config.eta) & (np.linalg.norm(W, axis=-1) < 2.0))
        if not keep.size:
            continue
        chosen = np.sort(rng.choice(keep, size=min(count, keep.size), replace=False))
        return [(alpha, W[i]) for i in chosen]
    raise ArgumentError("no sample of V lies outside the η-cutoff")


def _per_current(cache: Dict[int, tuple], current: ResidualCurrent, compute: Callable[[], T]) -> T:
    # the entry keeps its current alive, so an id is never reused while cached
    hit = cache.get(id(current))
    if hit is None or hit[0] is not current:
        hit = cache[id(current)] = (current, compute())
    return hit[1]


def require_closed(current: ResidualCurrent, ctx: OperatorContext) -> ClosednessReport:
    cfg = ctx.config
    report = _per_current(ctx._closed, current, lambda: check_closed(
        current, ctx.points, ctx.tolerance(cfg.closedness_tol), cfg.ideal_fit_radius, cfg.seed))
    if not report.closed:
        raise NotClosedError(report)
    return report


def section_moments(ctx: OperatorContext, current: ResidualCurrent) -> List[ResidueReport]:
    """⟨φ, γ_μ⟩ over the monomial section basis."""
    cfg = ctx.config
    return _per_current(ctx._moments, current, lambda: [
        pair_current(current, s, ctx.samples, cfg.eta, cfg.eta_halvings) for s in section_basis(ctx.variety)])


def pairing_scale(current: ResidualCurrent, section: DualizingSection, ctx: OperatorContext) -> float:
    """∫ |ϑγ∧Φ| over V, the size a cancelling pairing is measured against."""
    eta = eta_ladder(ctx.config.eta, ctx.config.eta_halvings)[-1]
    total = 0.0
    for a, chart in sorted(ctx.samples.items()):
        for proj, dens in zip(chart.projections, chart.densities(current_numerator(current, section, a))):
            total += float(np.sum(np.abs(dens[proj.cutoff > eta])))
    return total


# ── Projector kernel ────────────────────────────────────────────────────────
class ProjectorKernel:
    """𝒦^{(r)}_μ(z): ζ^μ coefficients of ⟨z̄,ζ⟩^r det[z̄, Q_1, ..., Q_m, dz̄^{n−m}], |μ| = d−n−1.

    Coefficients are read off an FFT over the torus |ζ_j| = 1; the torus
    is fine enough that no ζ-degree of the bracket aliases.
    """

    def __init__(self, variety: Variety, hefer: Sequence[HeferDecomposition], chunk_rows: int = 40000):
        n, m, d = variety.n, variety.m, variety.total_degree
        self.variety = variety
        self.hefer = list(hefer)
        self.q = n - m
        self.degree = d - n - 1
        if self.degree < 0:
            raise ArgumentError(f"d = {d} ≤ n = {n}: the projector is a structural zero")
        self.basis = monomials(n + 1, self.degree)
        self.keys: List[Index] = list(itertools.combinations(range(n + 1), self.q))
        self.spec = KernelColumnSpec.projector(n, m, self.q)
        self.constants = [projector_constant(n, m, d, r) for r in range(self.degree + 1)]
        self.grid = self.degree + d - m + 1
        self.chunk_rows = chunk_rows
        N = n + 1
        nodes = np.array(list(itertools.product(range(self.grid), repeat=N)), dtype=float)
        self.torus = np.exp(2j * np.pi * nodes / self.grid)

    @property
    def r_weights(self) -> np.ndarray:
        return np.array([c.c_r for c in self.constants], dtype=float)

    def ambient(self, z: np.ndarray) -> np.ndarray:
        """Shape (R, K, M, len(keys)) at sphere representatives of z."""
        z = _sphere(z)
        K, N = z.shape
        T = self.torus.shape[0]
        R, M = self.degree + 1, len(self.basis)
        out = np.zeros((R, K, M, len(self.keys)), dtype=complex)
        chunk = max(1, self.chunk_rows // T)
        axes = tuple(range(1, N + 1))
        for start in range(0, K, chunk):
            zc = z[start:start + chunk]
            k = zc.shape[0]
            zeta = np.tile(self.torus, (k, 1))
            zz = np.repeat(zc, T, axis=0)
            point = KernelPoint(zeta, zz, [H.evaluate(zeta, zz) for H in self.hefer])
            coeffs = bracket_coefficients(kernel_columns(self.spec, point), num_points=k * T)
            pairing = np.sum(np.conj(zz) * zeta, axis=-1)
            for c, key in enumerate(self.keys):
                vals = coeffs.get(((), (), key, ()))
                if vals is None:
                    continue
                for r in range(R):
                    grid = (pairing ** r * vals).reshape((k,) + (self.grid,) * N)
                    spectrum = np.fft.fftn(grid, axes=axes) / T
                    for j, mu in enumerate(self.basis):
                        out[r, start:start + k, j, c] = spectrum[(slice(None),) + tuple(mu)]
        return out

    def chart_values(self, alpha: int, W: np.ndarray) -> np.ndarray:
        """Pullback to chart α, shape (R, K, M, C(n, q)) keyed by dw̄ index sets.

        dz̄ = conj(z_α)·dv̄ modulo z̄, and z̄ is already a column of the bracket.
        """
        n = self.variety.n
        zhat = _sphere(lift(np.atleast_2d(W), alpha))
        amb = self.ambient(zhat)
        others = chart_indices(alpha, n)
        chart_keys = list(itertools.combinations(range(n), self.q))
        factor = np.conj(zhat[:, alpha]) ** self.q
        out = np.zeros(amb.shape[:3] + (len(chart_keys),), dtype=complex)
        for c, L in enumerate(chart_keys):
            J = tuple(others[l] for l in L)
            out[..., c] = amb[..., self.keys.index(J)] * factor[None, :, None]
        return out


@dataclass
class ProjectorModel:
    kernel: ProjectorKernel
    transfer: np.ndarray
    kappa: complex
    recipe: complex
    gram: Optional[complex]
    calibration: ProjectorCalibration
    provenance: ConstantProvenance
    flags: List[DiagnosticFlag] = field(default_factory=list)

    def apply(self, moments: np.ndarray) -> np.ndarray:
        """Pairings ⟨L[φ], γ_ν⟩ from the moments ⟨φ, γ_μ⟩."""
        return self.kappa * (self.transfer.T @ moments)


def _section_vector(kernel: ProjectorKernel, section: DualizingSection) -> np.ndarray:
    if section.h.degree != kernel.degree:
        raise ArgumentError(f"section {section.name} has degree {section.h.degree}, expected {kernel.degree}")
    position = {mu: j for j, mu in enumerate(kernel.basis)}
    vec = np.zeros(len(kernel.basis), dtype=complex)
    for e, c in section.h.terms.items():
        vec[position[tuple(e)]] += complex(c)
    return vec


def projector_model(ctx: OperatorContext) -> ProjectorModel:
    """Transfer matrix T_μν = ⟨𝒦_μ, γ_ν⟩ and the overall scalar κ."""
    if ctx._projector is not None:
        return ctx._projector
    variety, cfg = ctx.variety, ctx.config
    n, m, d = variety.n, variety.m, variety.total_degree
    kernel = ProjectorKernel(variety, ctx.hefer)
    sections = section_basis(variety)
    M = len(sections)
    weights = kernel.r_weights
    chart_k: Dict[int, List[np.ndarray]] = {}
    chart_g: Dict[int, List[np.ndarray]] = {}
    for a, chart in sorted(ctx.samples.items()):
        ks, gs = [], []
        for proj in chart.projections:
            if proj.points.shape[0] == 0:
                ks.append(None)
                gs.append(None)
                continue
            vals = np.tensordot(weights, kernel.chart_values(a, proj.points), axes=(0, 0))
            ks.append(vals)
            theta = partition_weight(proj.points)
            gs.append(np.stack([theta * s.chart_value(a, proj.points) for s in sections], axis=-1))
        chart_k[a], chart_g[a] = ks, gs
    chart_keys = list(itertools.combinations(range(n), kernel.q))
    transfer = np.zeros((M, M), dtype=complex)
    for mu in range(M):
        for nu in range(M):
            densities = {}
            for a, chart in sorted(ctx.samples.items()):
                values = []
                for vals, g in zip(chart_k[a], chart_g[a]):
                    if vals is None:
                        values.append({})
                        continue
                    values.append({L: g[:, nu] * vals[:, mu, c] for c, L in enumerate(chart_keys)})
                densities[a] = chart.densities_from(values)
            transfer[mu, nu] = pair_densities(ctx.samples, densities, cfg.eta, cfg.eta_halvings).extrapolated.to_complex()
    recipe = cfg.projector_sign * kernel.constants[0].numeric * 2j * np.pi
    trace = np.trace(transfer)
    gram = M / trace if abs(trace) > 0 else None
    flags: List[DiagnosticFlag] = []
    mode = ProjectorCalibration(cfg.projector_calibration)
    if mode == ProjectorCalibration.gram and gram is None:
        flags.append(DiagnosticFlag(flag_id="projector-gram-singular", category=FlagCategory.calibration,
                                    message="transfer matrix has zero trace; falling back to the recipe constant"))
        mode = ProjectorCalibration.recipe
    kappa = gram if mode == ProjectorCalibration.gram else recipe
    if gram is not None and abs(recipe / gram - 1.0) > ctx.tolerance(cfg.homotopy_tol):
        flags.append(DiagnosticFlag(flag_id="projector-calibration-mismatch", category=FlagCategory.calibration,
                                    message=f"recipe constant differs from the Gram calibration by a factor {recipe / gram:.4g}"))
    diag = np.abs(np.diag(transfer))
    off = np.abs(transfer - np.diag(np.diag(transfer)))
    if M > 1 and off.max() > 0.1 * diag.max():
        flags.append(DiagnosticFlag(flag_id="projector-transfer-offdiagonal", category=FlagCategory.calibration,
                                    message=f"transfer matrix is not scalar (off-diagonal {off.max():.3e} vs {diag.max():.3e})"))
    factors = [
        ConstantFactor(name="recipe", value=str(recipe), note="C(n,m,d,0)·2πi from the phase integral of i dφ"),
        ConstantFactor(name="sign", value=str(cfg.projector_sign), note="global orientation sign, fixed in configuration"),
    ]
    if gram is not None:
        factors += [
            ConstantFactor(name="gram", value=str(gram), note="N/tr T so that κT has the trace of the identity"),
            ConstantFactor(name="recipe_over_gram", value=str(recipe / gram), note="agreement of the two calibrations"),
        ]
    provenance = ConstantProvenance(
        label="projector-kappa", n=n, m=m, d=d, q=kernel.q, r=None, factors=factors,
        exact=kernel.constants[0].provenance.exact, numeric=ComplexValue.of(kappa), calibration=mode.value,
    )
    logger.info("projector κ = %s (%s); recipe/gram = %s", kappa, mode.value, None if gram is None else recipe / gram)
    ctx._projector = ProjectorModel(kernel, transfer, complex(kappa), complex(recipe), gram, mode, provenance, flags)
    return ctx._projector


# ── Projector ───────────────────────────────────────────────────────────────
def _point_value(point: np.ndarray, chart: int, amb: np.ndarray, chart_vals: np.ndarray,
                 keys: Sequence[Index], chart_keys: Sequence[Index]) -> PointValue:
    return PointValue(
        point=[ComplexValue.of(c) for c in point],
        chart=chart,
        coefficients={form_label("dzbar", J): ComplexValue.of(v) for J, v in zip(keys, amb)},
        chart_coefficients={form_label("dwbar", L): ComplexValue.of(v) for L, v in zip(chart_keys, chart_vals)},
    )


def _projector_at(model: ProjectorModel, moments: np.ndarray, alpha: int, w: np.ndarray):
    """Per-r ambient and chart values of L[φ] at one point."""
    kernel = model.kernel
    zhat = _sphere(lift(np.atleast_2d(w), alpha))
    amb = kernel.ambient(zhat)[:, 0]
    chart = kernel.chart_values(alpha, np.atleast_2d(w))[:, 0]
    scale = model.kappa * kernel.r_weights
    per_r_amb = scale[:, None] * np.einsum("rmk,m->rk", amb, moments)
    per_r_chart = scale[:, None] * np.einsum("rmk,m->rk", chart, moments)
    return zhat[0], per_r_amb, per_r_chart


def smoothness_check(model: ProjectorModel, moments: np.ndarray, alpha: int, w: np.ndarray,
                     step: float = 1e-3, seed: int = 0) -> float:
    """max |second difference|/h² of the chart components of L[φ], relative to max |L[φ]|."""
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(w.shape) + 1j * rng.standard_normal(w.shape)
    v /= np.linalg.norm(v)
    values = np.stack([_projector_at(model, moments, alpha, w + s * step * v)[2].sum(axis=0) for s in range(-2, 3)])
    second = values[2:] - 2.0 * values[1:-1] + values[:-2]
    size = max(float(np.max(np.abs(values))), 1e-300)
    return float(np.max(np.abs(second))) / step ** 2 / size


def hodge_project(
    current: ResidualCurrent,
    ctx: Optional[OperatorContext],
    points: Sequence[EvalPoint],
    smoothness: bool = True,
) -> ProjectorOutput:
    """L_{n−m}[φ] at the given chart points, with the per-r breakdown.

    When d ≤ n the r-range is empty and no context is needed.
    """
    variety = current.variety
    n, m, d = variety.n, variety.m, variety.total_degree
    if current.q != n - m:
        raise ArgumentError(f"the projector acts on (0,{n - m}) currents, got (0,{current.q})")
    if d <= n:
        logger.info("projector of %s is a structural zero (d=%d ≤ n=%d)", current.name, d, n)
        zeros = [PointValue(point=[ComplexValue.of(c) for c in _sphere(lift(np.atleast_2d(w), a))[0]], chart=a)
                 for a, w in points]
        return ProjectorOutput(current=current.name, structural_zero=True, values=zeros)
    require_closed(current, ctx)
    model = projector_model(ctx)
    moments = np.array([r.extrapolated.to_complex() for r in section_moments(ctx, current)])
    keys = model.kernel.keys
    chart_keys = list(itertools.combinations(range(n), model.kernel.q))

    def evaluate(item: EvalPoint):
        a, w = item
        zhat, per_amb, per_chart = _projector_at(model, moments, a, w)
        total = _point_value(zhat, a, per_amb.sum(axis=0), per_chart.sum(axis=0), keys, chart_keys)
        parts = [_point_value(zhat, a, per_amb[r], per_chart[r], keys, chart_keys) for r in range(per_amb.shape[0])]
        return total, parts

    results = ctx.map(evaluate, list(points))
    r_terms: Dict[int, List[PointValue]] = {r: [parts[r] for _, parts in results] for r in range(model.kernel.degree + 1)}
    smooth = None
    if smoothness and points:
        a, w = points[0]
        smooth = smoothness_check(model, moments, a, np.asarray(w), seed=ctx.config.seed)
    return ProjectorOutput(
        current=current.name,
        structural_zero=False,
        values=[t for t, _ in results],
        r_terms=r_terms,
        moments=[ComplexValue.of(p) for p in moments],
        calibration=model.provenance,
        smoothness=smooth,
    )


def hodge_project_pair(current: ResidualCurrent, section: DualizingSection, ctx: OperatorContext) -> ResidueReport:
    """⟨L[φ], γ⟩ through the transfer matrix; ladders follow the η-ladder of the moments."""
    variety = ctx.variety
    n, m, d = variety.n, variety.m, variety.total_degree
    if current.q != n - m:
        raise ArgumentError(f"the projector acts on (0,{n - m}) currents, got (0,{current.q})")
    if d <= n:
        return ResidueReport(value=ComplexValue(), extrapolated=ComplexValue(), flags=[
            DiagnosticFlag(flag_id=f"{current.name}-projector-zero", category=FlagCategory.structural_zero,
                           message=f"d={d} ≤ n={n}: empty r-range")])
    require_closed(current, ctx)
    model = projector_model(ctx)
    moments = section_moments(ctx, current)
    h = _section_vector(model.kernel, section)
    coupling = model.kappa * (model.transfer @ h)
    levels = [e.level for e in moments[0].ladder]
    values = [complex(sum(coupling[mu] * moments[mu].ladder[j].value.to_complex() for mu in range(len(moments))))
              for j in range(len(levels))]
    limit = complex(sum(coupling[mu] * moments[mu].extrapolated.to_complex() for mu in range(len(moments))))
    report = ladder_report(levels, values, limit, eta=moments[0].eta, excluded_measure=moments[0].excluded_measure,
                           flags=list(model.flags))
    report.error_estimate = float(sum(abs(coupling[mu]) * moments[mu].error_estimate for mu in range(len(moments))))
    return report


# ── Solver ──────────────────────────────────────────────────────────────────
def _phase_contours(a: np.ndarray, nodes: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes u and weights w with Σ w·g(u) = (1/2πi)∮_{|u|=1} g(u) du.

    g may have poles at 0 and a inside the unit circle and at 1/ā outside;
    the circle is replaced by small circles around the inner poles.
    """
    K = a.shape[0]
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    ring = np.exp(1j * theta)
    size = np.abs(a)
    u = np.zeros((K, 2 * nodes), dtype=complex)
    w = np.zeros((K, 2 * nodes), dtype=complex)
    near = size < 0.25
    u[near, :nodes] = 0.5 * ring
    w[near, :nodes] = 0.5 * ring / nodes
    u[near, nodes:] = 0.5 * ring
    far = ~near
    if np.any(far):
        s = size[far][:, None]
        r0 = s / 2.0
        ra = np.minimum(s, (1.0 - s ** 2) / s) / 2.0
        u[far, :nodes] = r0 * ring
        w[far, :nodes] = r0 * ring / nodes
        u[far, nodes:] = a[far][:, None] + ra * ring
        w[far, nodes:] = ra * ring / nodes
    return u, w


def _on_variety(spec: KernelColumnSpec) -> KernelColumnSpec:
    """On V the 1/(P_k(ζ)−P_k(z)) factors are the residue itself."""
    cols = tuple(replace(c, denominator=Denominator.none) if c.kind == ColumnKind.hefer else c for c in spec.columns)
    return KernelColumnSpec(spec.num_vars, cols)


def tube_spec(n: int, m: int, J: Sequence[int], q: int) -> KernelColumnSpec:
    """det[z̄/B*, ζ̄/B, Q_j (j ∈ J), dz̄^{q−1}/B*, dζ̄^{n−|J|−q}/B]."""
    J = tuple(sorted(J))
    if not J:
        return KernelColumnSpec.partial(n, q)
    if J == tuple(range(m)):
        return _on_variety(KernelColumnSpec.solver(n, m, q))
    cols = [KernelColumn(ColumnKind.zbar, None, Denominator.Bstar), KernelColumn(ColumnKind.zetabar, None, Denominator.B)]
    cols += [KernelColumn(ColumnKind.hefer, k) for k in J]
    cols += [KernelColumn(ColumnKind.dzbar, None, Denominator.Bstar)] * (q - 1)
    cols += [KernelColumn(ColumnKind.dzetabar, None, Denominator.B)] * (n - len(J) - q)
    return KernelColumnSpec(n + 1, tuple(cols))


def _kernel_phase_average(
    spec: KernelColumnSpec,
    hefer: Sequence[HeferDecomposition],
    W: np.ndarray,
    beta: int,
    zhat: np.ndarray,
    nodes: int,
    chunk: int = 2048,
) -> Tuple[Dict[Tuple[Index, Index], np.ndarray], np.ndarray]:
    """(1/2π)∫ dφ of the bracket ∧ ω(ζ) at ζ = e^{iφ}ŵ, ŵ the sphere lift of W.

    Off the unit circle ζ̄ continues as conj(ŵ)/u. Keys are (dz̄ indices,
    chart dw̄ indices); dζ̄_β drops out modulo ζ̄. Also returns a = ⟨ŵ, ẑ⟩.
    """
    n = W.shape[1]
    N = n + 1
    what = _sphere(lift(W, beta))
    rho = what[:, beta].real
    a = np.conj(what) @ zhat
    position = {j: l for l, j in enumerate(chart_indices(beta, n))}
    out: Dict[Tuple[Index, Index], np.ndarray] = {}
    for start in range(0, W.shape[0], chunk):
        sl = slice(start, start + chunk)
        u, wts = _phase_contours(a[sl], nodes)
        K, P = u.shape
        zeta = (u[..., None] * what[sl, None, :]).reshape(K * P, N)
        zetabar = (np.conj(what[sl])[:, None, :] / u[..., None]).reshape(K * P, N)
        z = np.broadcast_to(zhat, (K * P, N))
        point = KernelPoint(zeta, z, [H.evaluate(zeta, z) for H in hefer], zetabar=zetabar)
        coeffs = bracket_coefficients(kernel_columns(spec, point), num_points=K * P)
        uu = u.reshape(-1)
        rr = np.repeat(rho[sl], P)
        flat_w = wts.reshape(-1)
        for key, vals in coeffs.items():
            Jzeta, Jz = key[1], key[2]
            if beta in Jzeta:
                continue
            L = tuple(position[j] for j in Jzeta)
            integrand = vals * (rr / uu) ** len(Jzeta) * (rr * uu) ** N / uu
            avg = np.sum((integrand * flat_w).reshape(K, P), axis=1)
            k = (Jz, L)
            if k not in out:
                out[k] = np.zeros(W.shape[0], dtype=complex)
            out[k][sl] += avg
    return out, a


def _wedge_current(form_values: Dict[Index, np.ndarray], kernel: Dict[Tuple[Index, Index], np.ndarray]) -> Dict[Index, Dict[Index, np.ndarray]]:
    """Φ ∧ kernel, grouped by output dz̄ indices."""
    out: Dict[Index, Dict[Index, np.ndarray]] = {}
    for (Jz, L), kv in kernel.items():
        for I1, c in form_values.items():
            if set(I1) & set(L):
                continue
            I = tuple(sorted(I1 + L))
            term = _merge_sign(I1, L) * c * kv
            bucket = out.setdefault(Jz, {})
            bucket[I] = bucket[I] + term if I in bucket else term
    return out


def _projective_pairing(W: np.ndarray, beta: int, zhat: np.ndarray) -> np.ndarray:
    """⟨ŵ, ẑ⟩ for the sphere lifts of chart-β points W."""
    return np.conj(_sphere(lift(W, beta))) @ zhat


def _solver_densities(current: ResidualCurrent, ctx: OperatorContext, zhat: np.ndarray, spec: KernelColumnSpec,
                      delta_min: float):
    """Per chart and projection: residue densities keyed by output dz̄ indices, ⟨ŵ, ẑ⟩ and the kept mask.

    Samples within FS distance δ_min of z never enter the δ-ladder and are
    dropped before the kernel sees them; at ζ = z both B and the contour
    around its pole degenerate.
    """
    n = ctx.variety.n
    sign_omega = (-1) ** ((n + 1) * (n - ctx.variety.m))
    out: Dict[int, List[Tuple[Dict[Index, np.ndarray], np.ndarray, np.ndarray]]] = {}
    for beta, chart in sorted(ctx.samples.items()):
        rows = []
        for proj in chart.projections:
            W = proj.points
            if W.shape[0] == 0:
                rows.append(({}, np.zeros(0, dtype=complex), np.zeros(0, dtype=bool)))
                continue
            mask = _fs_distance(_projective_pairing(W, beta, zhat)) > delta_min
            if not np.any(mask):
                rows.append(({}, np.zeros(0, dtype=complex), mask))
                continue
            Wk = W[mask]
            avg, a = _kernel_phase_average(spec, ctx.hefer, Wk, beta, zhat, ctx.config.phase_nodes)
            prefactor = sign_omega * (-1) ** beta * 2j * np.pi * partition_weight(Wk)
            grouped = _wedge_current(current.charts[beta].evaluate(Wk), avg)
            dens = {}
            for Jz, values in grouped.items():
                total = np.zeros(Wk.shape[0], dtype=complex)
                for I, v in values.items():
                    total += v * proj.residue_factor(I)[mask]
                dens[Jz] = proj.weights[mask] * prefactor * total
            rows.append((dens, a, mask))
        out[beta] = rows
    return out


def _delta_ladder(delta: float, halvings: int) -> List[float]:
    return [delta * 0.5 ** j for j in range(halvings + 1)]


def _fs_distance(a: np.ndarray) -> np.ndarray:
    return np.arccos(np.clip(np.abs(a), 0.0, 1.0))


def solve_dbar(current: ResidualCurrent, ctx: OperatorContext, points: Sequence[EvalPoint]) -> SolverOutput:
    """I_q[φ] at points of V; a (0,q−1)-form in z."""
    variety, cfg = ctx.variety, ctx.config
    n, m = variety.n, variety.m
    q = current.q
    if not 1 <= q <= n - m:
        raise ArgumentError(f"solver degree q must lie in 1..{n - m}, got {q}")
    C, provenance = solver_constant(n, m, q)
    spec = tube_spec(n, m, range(m), q)
    deltas = _delta_ladder(cfg.delta, cfg.delta_halvings)
    eta = eta_ladder(cfg.eta, cfg.eta_halvings)[-1]
    out_keys = list(itertools.combinations(range(n + 1), q - 1))
    for a, w in points:
        g = abs(complex(variety.cutoff(a, np.atleast_2d(w))[0]))
        if g <= cfg.eta:
            raise CutoffError(f"evaluation point in chart {a} lies inside the η-cutoff (|g| = {g:.3e})")

    def evaluate(item: EvalPoint):
        a, w = item
        zhat = _sphere(lift(np.atleast_2d(w), a))[0]
        if current.is_zero():
            zero = np.zeros((len(deltas), len(out_keys)), dtype=complex)
            return zhat, zero, np.zeros(len(out_keys), dtype=complex)
        table = _solver_densities(current, ctx, zhat, spec, deltas[-1])
        ladder = np.zeros((len(deltas), len(out_keys)), dtype=complex)
        for beta, rows in table.items():
            chart = ctx.samples[beta]
            for (dens, pair, mask), proj in zip(rows, chart.projections):
                if not dens:
                    continue
                dist = _fs_distance(pair)
                cutoff = proj.cutoff[mask]
                for j, delta in enumerate(deltas):
                    keep = (cutoff > eta) & (dist > delta)
                    for c, Jz in enumerate(out_keys):
                        if Jz in dens:
                            ladder[j, c] += np.sum(dens[Jz][keep])
        ladder *= C
        # the removed disk carries O(δ) of an integrable 1/|ζ−z| singularity
        limit = np.array([richardson_limit(2.0, ladder[:, c]) for c in range(len(out_keys))])
        return zhat, ladder, limit

    results = ctx.map(evaluate, list(points))
    values, ladders, errors, flags = [], [], [], []
    for (a, w), (zhat, ladder, limit) in zip(points, results):
        others = chart_indices(a, n)
        chart_keys = [L for L in itertools.combinations(range(n), q - 1)]
        factor = np.conj(zhat[a]) ** (q - 1)
        chart_vals = [limit[out_keys.index(tuple(others[l] for l in L))] * factor for L in chart_keys]
        values.append(_point_value(zhat, a, limit, np.array(chart_vals), out_keys, chart_keys))
        lead = int(np.argmax(np.abs(limit))) if limit.size else 0
        ladders.append([LadderEntry(level=d, value=ComplexValue.of(ladder[j, lead])) for j, d in enumerate(deltas)])
        err = float(np.max(np.abs(ladder[-1] - limit))) if limit.size else 0.0
        errors.append(err)
        size = float(np.max(np.abs(limit))) if limit.size else 0.0
        if err > 0.1 * size + 1e-12:
            flags.append(DiagnosticFlag(flag_id=f"{current.name}-solver-delta", category=FlagCategory.extrapolation,
                                        message=f"δ-ladder at chart {a} point did not settle (error {err:.3e}, value {size:.3e})"))
    logger.debug("solver constant for %s: %s", current.name, provenance.exact)
    return SolverOutput(current=current.name, values=values, delta=deltas, ladders=ladders,
                        error_estimates=errors, flags=flags)


def partial_tube_contribution(
    current: ResidualCurrent,
    ctx: OperatorContext,
    point: EvalPoint,
    J: Sequence[int] = (),
    eps_levels: Sequence[float] = (1e-2, 5e-3, 2.5e-3),
    disk_nodes: int = 6,
    phase_nodes: int = 8,
) -> Dict[str, ResidueReport]:
    """Integral over {|F_j| = ε_j, j ∈ J; |F_k| < ε_k, k ∉ J} of the |J|-column solver term.

    These terms vanish as ε → 0 and are never added to I; the ladder is a check.
    """
    variety, cfg = ctx.variety, ctx.config
    n, m, q = variety.n, variety.m, current.q
    J = tuple(sorted(J))
    if len(J) >= m or any(not 0 <= j < m for j in J):
        raise ArgumentError(f"partial tubes need a proper subset of 0..{m - 1}, got {J}")
    spec = tube_spec(n, m, J, q)
    C, _ = solver_constant(n, m, q)
    a0, w0 = point
    zhat = _sphere(lift(np.atleast_2d(w0), a0))[0]
    grid = plane_grid(n - m, max(cfg.radial_nodes // 2, 4), max(cfg.angular_nodes // 2, 4), cfg.radial_scale)
    s, ws = roots_legendre(disk_nodes)
    s, ws = 0.5 * (s + 1.0), 0.5 * ws
    theta = 2.0 * np.pi * np.arange(phase_nodes) / phase_nodes
    fiber, base = split_axes(n, tuple(range(m)))
    out_keys = list(itertools.combinations(range(n + 1), q - 1))
    delta = _delta_ladder(cfg.delta, cfg.delta_halvings)[-1]
    sign_omega = (-1) ** ((n + 1) * (n - len(J)))
    ladder = np.zeros((len(eps_levels), len(out_keys)), dtype=complex)
    for e_idx, eps in enumerate(eps_levels):
        # per axis: (values, weights); a full phase ring on J, a disk elsewhere
        factors = []
        for k in range(m):
            if k in J:
                factors.append((eps * np.exp(1j * theta), np.full(phase_nodes, 2.0 * np.pi / phase_nodes)))
            else:
                radii = np.repeat(eps * s, phase_nodes)
                factors.append((radii * np.tile(np.exp(1j * theta), disk_nodes),
                                np.repeat(eps ** 2 * s * ws, phase_nodes) * 2.0 * np.pi / phase_nodes))
        combos = list(itertools.product(*[range(len(f[0])) for f in factors]))
        targets = np.array([[factors[k][0][i[k]] for k in range(m)] for i in combos])
        t_weights = np.array([np.prod([factors[k][1][i[k]] for k in range(m)]) for i in combos])
        for beta in range(n + 1):
            U = np.repeat(grid.points, len(targets), axis=0)
            tgt = np.tile(targets, (grid.size, 1))
            node_w = np.repeat(grid.weights, len(targets)) * np.tile(t_weights, grid.size)
            per_node, expected = solve_fibers(variety, beta, U, fiber, target=tgt, seed=cfg.seed + beta)
            counts = np.array([len(p) for p in per_node])
            if not counts.sum():
                continue
            owner = np.repeat(np.arange(len(per_node)), counts)
            W = np.concatenate(per_node)
            far = _fs_distance(_projective_pairing(W, beta, zhat)) > delta
            if not np.any(far):
                continue
            W = W[far]
            u = tgt[owner][far]
            weights = node_w[owner][far]
            Jm = variety.jacobian_chart(beta, W)
            rhs = np.where(np.isin(np.arange(m), J)[None, :], 1j * u, 1.0 + 0j)
            first = phase_tangents(Jm, fiber, rhs)
            second = phase_tangents(Jm, fiber, 1j * np.ones_like(u))
            cols = [first[:, :, [k]] for k in J]
            for k in range(m):
                if k not in J:
                    cols += [first[:, :, [k]], second[:, :, [k]]]
            frame = np.concatenate(cols + [base_tangents(Jm, fiber, base)], axis=2)
            avg, _ = _kernel_phase_average(spec, ctx.hefer, W, beta, zhat, cfg.phase_nodes)
            prefactor = sign_omega * (-1) ** beta * 2j * np.pi * partition_weight(W) * weights
            if J:
                prefactor = prefactor / np.prod(u[:, list(J)], axis=-1)
            grouped = _wedge_current(current.charts[beta].evaluate(W), avg)
            for c, Jz in enumerate(out_keys):
                density = np.zeros(W.shape[0], dtype=complex)
                for I, v in grouped.get(Jz, {}).items():
                    density += v * form_det(frame, I)
                ladder[e_idx, c] += C * np.sum(prefactor * density)
    reports = {}
    for c, Jz in enumerate(out_keys):
        limit = polynomial_limit(list(eps_levels), list(ladder[:, c]), degree=1)
        reports[form_label("dzbar", Jz)] = ladder_report(list(eps_levels), list(ladder[:, c]), limit)
    return reports


# ── Decomposition checks ────────────────────────────────────────────────────
def solver_values(current: ResidualCurrent, ctx: OperatorContext) -> SolverOutput:
    """I[φ] at the configured evaluation points, computed once per current."""
    return _per_current(ctx._solved, current,
                        lambda: solve_dbar(current, ctx, evaluation_points(ctx, ctx.config.eval_points)))


def _solver_norm(output: SolverOutput) -> float:
    sizes = [abs(c.to_complex()) for v in output.values for c in v.coefficients.values()]
    return max(sizes, default=0.0)


def homotopy_check(current: ResidualCurrent, section: DualizingSection, ctx: OperatorContext) -> HomotopyReport:
    """|⟨φ,γ⟩ − ⟨I[φ],∂̄γ⟩ − ⟨L[φ],γ⟩| / scale.

    ∂̄γ is measured at the samples of V; the solver term is bounded by
    max|I[φ]| · ∫ϑ|∂̄γ| and has to stay below the tolerance as well.
    """
    variety, cfg = ctx.variety, ctx.config
    n, m = variety.n, variety.m
    tol = ctx.tolerance(cfg.homotopy_tol)
    flags: List[DiagnosticFlag] = []
    pairing = pair_current(current, section, ctx.samples, cfg.eta, cfg.eta_halvings)
    structural_l = variety.total_degree <= n or current.q < n - m
    if structural_l:
        projector = ResidueReport(value=ComplexValue(), extrapolated=ComplexValue())
    else:
        projector = hodge_project_pair(current, section, ctx)
    p = pairing.extrapolated.to_complex()
    l_term = projector.extrapolated.to_complex()
    scale = max(abs(p), abs(l_term), pairing_scale(current, section, ctx), 1e-300)
    residual = abs(p - l_term) / scale

    dbar_gamma, dbar_mass = section_dbar(section, ctx.samples)
    solver_norm: Optional[float] = None
    try:
        solver_norm = _solver_norm(solver_values(current, ctx))
    except (SingularKernelError, CutoffError) as exc:
        flags.append(DiagnosticFlag(flag_id=f"{current.name}-{section.name}-solver-term", category=FlagCategory.cutoff,
                                    message=f"solver term not evaluated: {exc}"))
    bound = (solver_norm or 0.0) * dbar_mass
    structural_i = dbar_gamma <= 1e-6
    if not structural_i:
        flags.append(DiagnosticFlag(flag_id=f"{current.name}-{section.name}-dbar-section", category=FlagCategory.acceptance,
                                    message=f"∂̄γ is not negligible on V ({dbar_gamma:.3e})"))

    verdict = Verdict.passed if residual <= tol and bound / scale <= tol else Verdict.failed
    logger.info("homotopy %s/%s: pairing %s, L-term %s, I-bound %.3e, residual %.3e",
                current.name, section.name, p, l_term, bound, residual)
    return HomotopyReport(
        current=current.name,
        section=section.name,
        pairing=ComplexValue.of(p),
        solver_term=ComplexValue(),
        projector_term=ComplexValue.of(l_term),
        solver_term_structural=structural_i,
        projector_term_structural=structural_l,
        residual=residual,
        scale=scale,
        error_estimate=(pairing.error_estimate + projector.error_estimate) / scale,
        verdict=verdict,
        dbar_section=dbar_gamma,
        solver_norm=solver_norm,
        solver_bound=bound,
        flags=flags,
    )


def exactness_test(current: ResidualCurrent, ctx: OperatorContext) -> ExactnessReport:
    """φ is exact iff ⟨L[φ], γ_j⟩ vanishes on the monomial section basis."""
    require_closed(current, ctx)
    basis = section_basis(ctx.variety)
    if not basis:
        return ExactnessReport(current=current.name, verdict=Verdict.exact, pairings=[], max_pairing=0.0, scale=1.0)
    pairings = [hodge_project_pair(current, s, ctx).extrapolated.to_complex() for s in basis]
    scale = max(max(pairing_scale(current, s, ctx) for s in basis), 1e-300)
    biggest = max(abs(p) for p in pairings)
    exact = biggest <= ctx.tolerance(ctx.config.exactness_tol) * scale
    return ExactnessReport(
        current=current.name,
        verdict=Verdict.exact if exact else Verdict.non_exact,
        pairings=[ComplexValue.of(p) for p in pairings],
        max_pairing=biggest,
        scale=scale,
    )


def pairing_rank(matrix: np.ndarray, tol: float = 1e-1) -> RankReport:
    """Numerical rank of the pairing matrix ⟨L[φ_i], γ_j⟩ from its singular values."""
    matrix = np.atleast_2d(np.asarray(matrix, dtype=complex))
    if matrix.size == 0:
        return RankReport(singular_values=[], rank=0, gap=None)
    sv = linalg.svdvals(matrix)
    top = float(sv[0]) if sv.size else 0.0
    rank = int(np.sum(sv > tol * top)) if top > 0 else 0
    gap = None
    if 0 < rank < sv.size:
        gap = float(sv[rank - 1] / sv[rank]) if sv[rank] > 0 else float("inf")
    return RankReport(singular_values=[float(s) for s in sv], rank=rank, gap=gap)


# ── Bochner–Martinelli reproduction ─────────────────────────────────────────
def _sphere_nodes(num_vars: int, t_nodes: int, angle_nodes: int):
    """(t, θ) nodes on {Σt = 1} × torus with the collapsed Gauss map on the simplex."""
    n = num_vars - 1
    x, wx = roots_legendre(t_nodes)
    x, wx = 0.5 * (x + 1.0), 0.5 * wx
    if n:
        X = np.array(list(itertools.product(x, repeat=n)))
        WX = np.prod(np.array(list(itertools.product(wx, repeat=n))), axis=-1)
    else:
        X = np.zeros((1, 0))
        WX = np.ones(1)
    t = np.zeros((X.shape[0], num_vars))
    remaining = np.ones(X.shape[0])
    jac = np.ones(X.shape[0])
    for k in range(n):
        t[:, k + 1] = remaining * X[:, k]
        jac *= remaining
        remaining = remaining * (1.0 - X[:, k])
    t[:, 0] = remaining
    theta = 2.0 * np.pi * np.arange(angle_nodes) / angle_nodes
    TH = np.array(list(itertools.product(theta, repeat=num_vars)))
    wt = (2.0 * np.pi / angle_nodes) ** num_vars
    return t, WX * jac, TH, wt


def bm_reproduction_check(
    numerator: HomogeneousPolynomial,
    denominator: HomogeneousPolynomial,
    z: Sequence[complex],
    radius: float = 0.5,
    center: Optional[Sequence[complex]] = None,
    t_nodes: int = 10,
    angle_nodes: int = 24,
    chunk: int = 50000,
) -> BochnerMartinelliReport:
    """f(z) against (N−1)!/(2πi)^N ∫_{∂D} f ω′(ζ̄−c̄)∧ω(ζ)/⟨ζ̄−c̄, ζ−z⟩^N over a ball D = B(c, R).

    f = numerator/denominator must be holomorphic on D̄; ∂̄f = 0 makes the
    J-term vanish, so only the K_0 kernel remains.
    """
    if numerator.num_vars != denominator.num_vars or numerator.degree != denominator.degree:
        raise ArgumentError("f must be a ratio of homogeneous polynomials of equal degree")
    z = np.asarray(z, dtype=complex)
    N = z.size
    if N != numerator.num_vars:
        raise ArgumentError(f"point has {N} coordinates, f lives on C^{numerator.num_vars}")
    c = z - 0.3 * radius * np.eye(N)[0] if center is None else np.asarray(center, dtype=complex)
    if np.linalg.norm(z - c) >= radius:
        raise ArgumentError("evaluation point must lie inside the ball")
    t, wt_t, TH, wt_th = _sphere_nodes(N, t_nodes, angle_nodes)
    pairs = np.array(list(itertools.product(range(t.shape[0]), range(TH.shape[0]))))
    total = 0j
    for start in range(0, pairs.shape[0], chunk):
        it, ith = pairs[start:start + chunk, 0], pairs[start:start + chunk, 1]
        tt, th = t[it], TH[ith]
        phase = np.exp(1j * th)
        root = np.sqrt(tt)
        zeta = c + radius * root * phase
        K = zeta.shape[0]
        # tangents: ∂/∂t_k (k ≥ 1, t_0 = 1 − Σ t_k) then ∂/∂θ_j
        V = np.zeros((K, N, 2 * N - 1), dtype=complex)
        for k in range(1, N):
            V[:, k, k - 1] = radius * phase[:, k] / (2.0 * root[:, k])
            V[:, 0, k - 1] = -radius * phase[:, 0] / (2.0 * root[:, 0])
        for j in range(N):
            V[:, j, N - 1 + j] = 1j * radius * root[:, j] * phase[:, j]
        s = np.conj(zeta - c)
        M = np.zeros((K, 2 * N, 2 * N), dtype=complex)
        M[:, :N, 0] = s
        M[:, :N, 1:] = np.conj(V)
        M[:, N:, 1:] = V
        form = np.linalg.det(M)
        real = np.zeros((K, 2 * N, 2 * N))
        normal = zeta - c
        real[:, 0::2, 0] = normal.real
        real[:, 1::2, 0] = normal.imag
        real[:, 0::2, 1:] = V.real
        real[:, 1::2, 1:] = V.imag
        orientation = np.sign(np.linalg.det(real))
        B = np.sum(s * (zeta - z), axis=-1)
        f = numerator.evaluate(zeta) / denominator.evaluate(zeta)
        total += complex(np.sum(wt_t[it] * wt_th * orientation * form * f / B ** N))
    reproduced = total * factorial(N - 1) / (2j * np.pi) ** N
    expected = complex(numerator.evaluate(z[None, :])[0] / denominator.evaluate(z[None, :])[0])
    residual = abs(reproduced - expected) / max(abs(expected), 1.0)
    logger.debug("Bochner–Martinelli at %s: expected %s, reproduced %s", z, expected, reproduced)
    return BochnerMartinelliReport(
        point=[ComplexValue.of(v) for v in z],
        expected=ComplexValue.of(expected),
        reproduced=ComplexValue.of(reproduced),
        residual=residual,
        j_term_structural=True,
    )
