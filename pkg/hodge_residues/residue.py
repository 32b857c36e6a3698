"""Coleff–Herrera residues over a complete intersection.

Three routes to the same limit:

- ``tube_integrate``: direct quadrature over the tube {F_k = ε_k e^{iθ_k}},
  parametrized by phases θ and the base coordinates of a coordinate projection;
- ``fibered_residue``: the ε → 0 limit taken analytically, leaving an integral
  over V of (2πi)^m φ / det[∂F/∂w_S] with the η-cutoff ladder;
- ``weighted_tube_equivalence``: the tube {|F_k| χ_k = ε_k} against the plain one.

A chart numerator is a callable mapping points W (K, n) to the coefficients
c_I of dw_1∧...∧dw_n∧dw̄_I, keyed by the sorted index tuple I with |I| = n − m.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .models import (
    ArgumentError,
    ComplexValue,
    DiagnosticFlag,
    FlagCategory,
    LadderEntry,
    NonAdmissiblePathError,
    PathFamily,
    Projection,
    ResidueReport,
    TubeParametrizationError,
    WeightedTubeReport,
)
from .polycore import (
    BaseGrid,
    Variety,
    excluded_measure,
    fiber_axis_choices,
    newton_polish,
    sample_variety,
    solve_fibers,
)

logger = logging.getLogger(__name__)

Numerator = Callable[[np.ndarray], Dict[Tuple[int, ...], np.ndarray]]
Weight = Callable[[np.ndarray], np.ndarray]


# ── Admissible paths ────────────────────────────────────────────────────────
@dataclass(frozen=True)
class AdmissiblePath:
    m: int
    family: PathFamily

    @property
    def admissible(self) -> bool:
        return self.m == 1 or self.family == PathFamily.exponential

    def log_eps(self, t: float) -> np.ndarray:
        """log ε_j(t), j = 1..m; finite even where ε_j underflows."""
        if t <= 0:
            raise ArgumentError("path parameter t must be positive")
        if self.family == PathFamily.exponential:
            if self.m == 1:
                return np.array([np.log(t)])
            return np.array([-t ** (-(self.m - j + 1)) for j in range(1, self.m + 1)])
        power = 1.0 if self.family == PathFamily.linear else 2.0
        return np.full(self.m, power * np.log(t))

    def __call__(self, t: float) -> np.ndarray:
        eps = np.exp(self.log_eps(t))
        if np.any(eps == 0):
            raise ArgumentError(f"ε({t}) underflows for the {self.family.value} family, use larger t")
        return eps

    def ratio_ladder(self, ts: Sequence[float], max_power: int = 10) -> np.ndarray:
        """log(ε_j/ε_{j+1}^l) on the t-ladder, shape (len(ts), m−1, max_power)."""
        out = np.zeros((len(ts), max(self.m - 1, 0), max_power))
        for a, t in enumerate(ts):
            le = self.log_eps(t)
            for j in range(self.m - 1):
                for l in range(1, max_power + 1):
                    out[a, j, l - 1] = le[j] - l * le[j + 1]
        return out

    def ratios_decrease(self, ts: Sequence[float], max_power: int = 10) -> bool:
        """Every ε_j/ε_{j+1}^l shrinks strictly along a decreasing t-ladder."""
        if self.m == 1:
            return True
        ladder = self.ratio_ladder(sorted(ts, reverse=True), max_power)
        return bool(np.all(np.diff(ladder, axis=0) < 0))


def admissible_path(m: int, family: PathFamily = PathFamily.exponential, allow_non_admissible: bool = False) -> AdmissiblePath:
    if m < 1:
        raise ArgumentError("codimension m must be at least 1")
    path = AdmissiblePath(m, PathFamily(family))
    if not path.admissible and not allow_non_admissible:
        raise NonAdmissiblePathError(
            f"the {path.family.value} family is not admissible for m={m}; pass allow_non_admissible to build it"
        )
    if not path.admissible:
        logger.warning("building non-admissible %s path for m=%d", path.family.value, m)
    return path


# ── Extrapolation ───────────────────────────────────────────────────────────
def richardson_limit(step_ratio: float, values: Sequence[complex]) -> complex:
    """Repeated Richardson elimination for a ladder refined by ``step_ratio`` each level."""
    n_steps = len(values)
    if n_steps == 0:
        raise ArgumentError("empty ladder")
    last_level = [complex(v) for v in values]
    for m in range(1, n_steps):
        mult = step_ratio ** m
        factor = 1.0 / (mult - 1.0)
        last_level = [factor * (mult * last_level[i + 1] - last_level[i]) for i in range(len(last_level) - 1)]
    return last_level[0]


def polynomial_limit(levels: Sequence[float], values: Sequence[complex], degree: Optional[int] = None) -> complex:
    """Value at level 0 of the polynomial through (level, value) pairs."""
    levels = np.asarray(levels, dtype=float)
    values = np.asarray(values, dtype=complex)
    if levels.size == 1:
        return complex(values[0])
    degree = levels.size - 1 if degree is None else min(degree, levels.size - 1)
    mat = np.vander(levels, degree + 1, increasing=True)
    coeffs, *_ = np.linalg.lstsq(mat, values, rcond=None)
    return complex(coeffs[0])


def ladder_report(levels: Sequence[float], values: Sequence[complex], extrapolated: complex, **extra) -> ResidueReport:
    ladder = [LadderEntry(level=float(l), value=ComplexValue.of(v)) for l, v in zip(levels, values)]
    return ResidueReport(
        value=ComplexValue.of(extrapolated),
        ladder=ladder,
        extrapolated=ComplexValue.of(extrapolated),
        error_estimate=float(abs(complex(values[-1]) - extrapolated)),
        **extra,
    )


# ── Frames and form evaluation ──────────────────────────────────────────────
def split_axes(n: int, fiber: Sequence[int]) -> Tuple[List[int], List[int]]:
    fiber = sorted(fiber)
    return fiber, [l for l in range(n) if l not in fiber]


def base_tangents(J: np.ndarray, fiber: List[int], base: List[int]) -> np.ndarray:
    """Real tangent vectors ∂x_b, ∂y_b of V over the base, shape (K, n, 2k)."""
    K, m, n = J.shape
    JS = J[:, :, fiber]
    JB = J[:, :, base]
    M = -np.linalg.solve(JS, JB) if base else np.zeros((K, m, 0), dtype=complex)
    out = np.zeros((K, n, 2 * len(base)), dtype=complex)
    for b, axis in enumerate(base):
        out[:, axis, 2 * b] = 1.0
        out[:, fiber, 2 * b] = M[:, :, b]
        out[:, axis, 2 * b + 1] = 1j
        out[:, fiber, 2 * b + 1] = 1j * M[:, :, b]
    return out


def phase_tangents(J: np.ndarray, fiber: List[int], rhs: np.ndarray) -> np.ndarray:
    """Vectors v_k with J_S v_k = rhs_k e_k embedded in the fiber axes, shape (K, n, m)."""
    K, m, n = J.shape
    JS = J[:, :, fiber]
    sol = np.linalg.solve(JS, np.eye(m)[None, :, :] * rhs[:, None, :])
    out = np.zeros((K, n, m), dtype=complex)
    out[:, fiber, :] = sol
    return out


def form_det(frame: np.ndarray, I: Tuple[int, ...], holomorphic_only: int = 0) -> np.ndarray:
    """dw_1∧...∧dw_n∧dw̄_I on the frame columns; the first ``holomorphic_only``
    columns see only the holomorphic rows."""
    conj_rows = np.conj(frame[:, list(I), :])
    if holomorphic_only:
        conj_rows = conj_rows.copy()
        conj_rows[:, :, :holomorphic_only] = 0.0
    mat = np.concatenate([frame, conj_rows], axis=1)
    return np.linalg.det(mat)


def _check_numerator(values: Dict[Tuple[int, ...], np.ndarray], n: int, m: int) -> None:
    for I in values:
        if len(I) != n - m or any(not 0 <= l < n for l in I) or list(I) != sorted(set(I)):
            raise ArgumentError(f"numerator key {I} is not a sorted (0,{n - m}) index set over {n} axes")


# ── Tube quadrature ─────────────────────────────────────────────────────────
def _phase_grid(m: int, nodes: int) -> Tuple[np.ndarray, float]:
    theta = 2.0 * np.pi * np.arange(nodes) / nodes
    grid = np.array(list(itertools.product(theta, repeat=m)), dtype=float).reshape(-1, m)
    return grid, (2.0 * np.pi / nodes) ** m


def _tube_points(
    variety: Variety,
    chart: int,
    eps: np.ndarray,
    base_grid: BaseGrid,
    phase_nodes: int,
    fiber: List[int],
    seed: int,
):
    m = variety.m
    phases, dtheta = _phase_grid(m, phase_nodes)
    N, P = base_grid.size, phases.shape[0]
    U = np.repeat(base_grid.points, P, axis=0)
    target = eps[None, :] * np.exp(1j * np.tile(phases, (N, 1)))
    weights = np.repeat(base_grid.weights, P) * dtheta
    per_node, expected = solve_fibers(variety, chart, U, fiber, target=target, seed=seed)
    counts = np.array([len(W) for W in per_node])
    if np.any(counts != expected):
        raise TubeParametrizationError(
            f"tube sheets collided: {int(np.sum(counts != expected))} of {len(counts)} nodes lost roots (ε too large?)"
        )
    owner = np.repeat(np.arange(len(per_node)), counts)
    W = np.concatenate(per_node) if len(per_node) else np.zeros((0, variety.n), dtype=complex)
    residual = np.abs(variety.evaluate_chart(chart, W) - target[owner])
    if np.any(residual > 1e-8 * variety.residual_scale(chart, W)):
        raise TubeParametrizationError("tube root polishing did not converge")
    return W, target[owner], weights[owner]


def tube_integrate(
    variety: Variety,
    chart: int,
    numerator: Numerator,
    eps: Sequence[float],
    base_grid: BaseGrid,
    phase_nodes: int = 32,
    fiber_axes: Optional[Sequence[int]] = None,
    seed: int = 0,
) -> complex:
    """∫ over {F_k = ε_k e^{iθ_k}} of Φ/ΠF_k in chart α, trapezoid in the phases."""
    n, m = variety.n, variety.m
    eps = np.asarray(eps, dtype=float).reshape(-1)
    if eps.size != m:
        raise ArgumentError(f"need {m} tube radii, got {eps.size}")
    fiber, base = split_axes(n, tuple(range(m)) if fiber_axes is None else fiber_axes)
    W, target, weights = _tube_points(variety, chart, eps, base_grid, phase_nodes, fiber, seed)
    if W.shape[0] == 0:
        return 0j
    J = variety.jacobian_chart(chart, W)
    frame = np.concatenate([phase_tangents(J, fiber, 1j * target), base_tangents(J, fiber, base)], axis=2)
    values = numerator(W)
    _check_numerator(values, n, m)
    density = np.zeros(W.shape[0], dtype=complex)
    for I, c in values.items():
        density += np.asarray(c, dtype=complex) * form_det(frame, I)
    density /= np.prod(target, axis=-1)
    total = complex(np.sum(weights * density))
    logger.debug("tube chart %d eps=%s: %d points, value %s", chart, eps, W.shape[0], total)
    return total


def tube_residue(
    variety: Variety,
    chart: int,
    numerator: Numerator,
    path: AdmissiblePath,
    t_ladder: Sequence[float],
    base_grid: BaseGrid,
    phase_nodes: int = 32,
    fiber_axes: Optional[Sequence[int]] = None,
    seed: int = 0,
) -> ResidueReport:
    """Tube integrals along the path, extrapolated to ε → 0."""
    if path.m != variety.m:
        raise ArgumentError("path codimension does not match the variety")
    levels, values = [], []
    for t in t_ladder:
        eps = path(t)
        values.append(tube_integrate(variety, chart, numerator, eps, base_grid, phase_nodes, fiber_axes, seed))
        levels.append(float(eps[-1]))
    limit = polynomial_limit(levels, values, degree=2)
    flags = []
    if not path.admissible:
        flags.append(DiagnosticFlag(flag_id="tube-non-admissible", category=FlagCategory.extrapolation,
                                    message=f"{path.family.value} path is not admissible for m={path.m}"))
    return ladder_report(levels, values, limit, flags=flags)


# ── Fibered residue ─────────────────────────────────────────────────────────
@dataclass
class ProjectionSamples:
    fiber: List[int]
    base: List[int]
    points: np.ndarray
    weights: np.ndarray
    jacobians: np.ndarray
    cutoff: np.ndarray
    _dets: Dict[Tuple[int, ...], np.ndarray] = field(default_factory=dict, repr=False)

    def residue_factor(self, I: Tuple[int, ...]) -> np.ndarray:
        """(2π)^m × dw∧dw̄_I on the limiting tube frame: (2πi)^m/det J_S times the base part."""
        if I not in self._dets:
            m = self.jacobians.shape[1]
            if self.points.shape[0] == 0:
                self._dets[I] = np.zeros(0, dtype=complex)
            else:
                ones = np.ones((self.points.shape[0], m), dtype=complex)
                frame = np.concatenate(
                    [phase_tangents(self.jacobians, self.fiber, 1j * ones), base_tangents(self.jacobians, self.fiber, self.base)],
                    axis=2,
                )
                self._dets[I] = (2.0 * np.pi) ** m * form_det(frame, I, holomorphic_only=m)
        return self._dets[I]


@dataclass
class ChartSamples:
    """Weighted points of V in one chart, ready for fibered residues."""

    variety: Variety
    chart: int
    projections: List[ProjectionSamples]
    excluded: float
    flags: List[DiagnosticFlag] = field(default_factory=list)

    @property
    def points(self) -> np.ndarray:
        if not self.projections:
            return np.zeros((0, self.variety.n), dtype=complex)
        return np.concatenate([p.points for p in self.projections])

    @property
    def size(self) -> int:
        return int(sum(p.points.shape[0] for p in self.projections))

    def densities(self, numerator: Numerator) -> List[np.ndarray]:
        """Per-point residue contributions, one array per projection (weights included)."""
        return self.densities_from([numerator(p.points) if p.points.shape[0] else {} for p in self.projections])

    def densities_from(self, values_per_projection: Sequence[Dict[Tuple[int, ...], np.ndarray]]) -> List[np.ndarray]:
        """As ``densities`` for numerator values already evaluated at each projection's points."""
        n, m = self.variety.n, self.variety.m
        out = []
        for proj, values in zip(self.projections, values_per_projection):
            if proj.points.shape[0] == 0:
                out.append(np.zeros(0, dtype=complex))
                continue
            _check_numerator(values, n, m)
            dens = np.zeros(proj.points.shape[0], dtype=complex)
            for I, c in values.items():
                dens += np.asarray(c, dtype=complex) * proj.residue_factor(I)
            out.append(proj.weights * dens)
        return out


def prepare_samples(
    variety: Variety,
    chart: int,
    base_grid: BaseGrid,
    projection: Projection = Projection.partition,
    root_tol: float = 1e-12,
    degeneracy_tol: float = 1e-8,
    seed: int = 0,
) -> ChartSamples:
    """Sample V in chart α along one projection or along all of them with the
    weights ψ_S = |det J_S|²/Σ_S'|det J_S'|²."""
    n, m = variety.n, variety.m
    choices = fiber_axis_choices(variety) if Projection(projection) == Projection.partition else [tuple(range(m))]
    projections: List[ProjectionSamples] = []
    excluded = 0.0
    degenerate = 0
    for S in choices:
        fiber, base = split_axes(n, S)
        samples = sample_variety(variety, chart, base_grid, S, root_tol, degeneracy_tol, seed)
        excluded += excluded_measure(samples)
        degenerate += sum(1 for s in samples if s.degenerate)
        pts = [s.points for s in samples if len(s.fiber_roots)]
        wts = [np.full(len(s.fiber_roots), s.weight) for s in samples if len(s.fiber_roots)]
        W = np.concatenate(pts) if pts else np.zeros((0, n), dtype=complex)
        w = np.concatenate(wts) if wts else np.zeros(0)
        J = variety.jacobian_chart(chart, W) if W.shape[0] else np.zeros((0, m, n), dtype=complex)
        if len(choices) > 1 and W.shape[0]:
            dets = np.stack([np.abs(np.linalg.det(J[:, :, list(T)])) ** 2 for T in choices], axis=-1)
            psi = dets[:, choices.index(S)] / np.sum(dets, axis=-1)
            w = w * psi
        g = variety.cutoff(chart, W) if W.shape[0] else np.zeros(0, dtype=complex)
        projections.append(ProjectionSamples(fiber, base, W, w, J, np.abs(g)))
    flags = []
    if excluded > 0:
        flags.append(DiagnosticFlag(flag_id=f"chart{chart}-excluded", category=FlagCategory.excluded_measure,
                                    message=f"chart {chart}: base measure {excluded:.3e} excluded by degenerate roots"))
    if degenerate:
        flags.append(DiagnosticFlag(flag_id=f"chart{chart}-degenerate", category=FlagCategory.degenerate_sample,
                                    message=f"chart {chart}: {degenerate} base nodes without an accepted root"))
    return ChartSamples(variety, chart, projections, excluded, flags)


def eta_ladder(eta: float, halvings: int) -> List[float]:
    return [eta * 0.5 ** j for j in range(halvings + 1)]


def cutoff_sum(samples: ChartSamples, densities: Sequence[np.ndarray], eta: float) -> complex:
    total = 0j
    for proj, dens in zip(samples.projections, densities):
        keep = proj.cutoff > eta
        total += complex(np.sum(dens[keep]))
    return total


def fibered_residue(
    variety: Variety,
    chart: int,
    numerator: Numerator,
    base_grid: Optional[BaseGrid] = None,
    *,
    samples: Optional[ChartSamples] = None,
    eta: float = 1e-3,
    eta_halvings: int = 3,
    projection: Projection = Projection.partition,
    root_tol: float = 1e-12,
    degeneracy_tol: float = 1e-8,
    seed: int = 0,
) -> ResidueReport:
    """lim_{η→0} ∫_{V∩{|g|>η}} res_{F,π}(Φ) in chart α.

    The η-ladder reuses the same node values; only the cutoff mask changes.
    Pass prepared ``samples`` to reuse root solving across numerators.
    """
    if samples is None:
        if base_grid is None:
            raise ArgumentError("fibered_residue needs a base grid or prepared samples")
        samples = prepare_samples(variety, chart, base_grid, projection, root_tol, degeneracy_tol, seed)
    densities = samples.densities(numerator)
    levels = eta_ladder(eta, eta_halvings)
    values = [cutoff_sum(samples, densities, e) for e in levels]
    # area cut out near simple zeros of g scales like η²
    limit = richardson_limit(4.0, values)
    flags = list(samples.flags)
    kept = sum(int(np.sum(p.cutoff > levels[-1])) for p in samples.projections)
    if kept == 0:
        flags.append(DiagnosticFlag(flag_id=f"chart{chart}-empty", category=FlagCategory.empty_support,
                                    message=f"chart {chart}: every sample lies inside the η-cutoff"))
        logger.warning("chart %d: all %d samples below η=%g", chart, samples.size, levels[-1])
    return ladder_report(levels, values, limit, eta=levels[-1], excluded_measure=samples.excluded, flags=flags)


# ── Weighted tubes ──────────────────────────────────────────────────────────
def sphere_chi(variety: Variety, radius: float) -> Weight:
    """χ_k(w) = ((1+R²)/(1+|w|²))^{d_k/2}, ≥ 1 on the patch |w| ≤ R."""
    degrees = np.asarray(variety.degrees, dtype=float)

    def chi(W: np.ndarray) -> np.ndarray:
        ratio = (1.0 + radius ** 2) / (1.0 + np.sum(np.abs(W) ** 2, axis=-1))
        return ratio[..., None] ** (degrees / 2.0)

    return chi


def _weighted_solve(variety, chart, W, fiber, eps_phase, chi, iterations: int = 30) -> np.ndarray:
    W = np.array(W, dtype=complex)
    for _ in range(iterations):
        target = eps_phase / chi(W)
        W_next = newton_polish(variety, chart, W, fiber, target)
        if np.max(np.abs(W_next - W), initial=0.0) <= 1e-15 * (1.0 + np.max(np.abs(W), initial=0.0)):
            W = W_next
            break
        W = W_next
    return W


def _weighted_tube_integrate(
    variety: Variety,
    chart: int,
    numerator: Numerator,
    eps: np.ndarray,
    chi: Weight,
    base_grid: BaseGrid,
    phase_nodes: int,
    fiber_axes: Optional[Sequence[int]],
    seed: int,
    step: float = 1e-6,
) -> complex:
    n, m = variety.n, variety.m
    fiber, base = split_axes(n, tuple(range(m)) if fiber_axes is None else fiber_axes)
    W0, target0, weights = _tube_points(variety, chart, eps, base_grid, phase_nodes, fiber, seed)
    if W0.shape[0] == 0:
        return 0j
    theta = np.angle(target0)
    W = _weighted_solve(variety, chart, W0, fiber, target0, chi)
    columns = []
    for k in range(m):
        shift = np.zeros(m)
        shift[k] = step
        plus = _weighted_solve(variety, chart, W, fiber, eps * np.exp(1j * (theta + shift)), chi)
        minus = _weighted_solve(variety, chart, W, fiber, eps * np.exp(1j * (theta - shift)), chi)
        columns.append((plus - minus) / (2 * step))
    for axis in base:
        for direction in (1.0, 1j):
            Wp, Wm = W.copy(), W.copy()
            Wp[:, axis] += direction * step
            Wm[:, axis] -= direction * step
            plus = _weighted_solve(variety, chart, Wp, fiber, target0, chi)
            minus = _weighted_solve(variety, chart, Wm, fiber, target0, chi)
            columns.append((plus - minus) / (2 * step))
    frame = np.stack(columns, axis=2)
    values = numerator(W)
    _check_numerator(values, n, m)
    density = np.zeros(W.shape[0], dtype=complex)
    for I, c in values.items():
        density += np.asarray(c, dtype=complex) * form_det(frame, I)
    density /= np.prod(variety.evaluate_chart(chart, W), axis=-1)
    return complex(np.sum(weights * density))


def weighted_tube_equivalence(
    variety: Variety,
    chart: int,
    numerator: Numerator,
    chi: Optional[Weight],
    path: AdmissiblePath,
    t_ladder: Sequence[float],
    base_grid: BaseGrid,
    phase_nodes: int = 32,
    fiber_axes: Optional[Sequence[int]] = None,
    seed: int = 0,
) -> WeightedTubeReport:
    """Limits over {|F_k|χ_k = ε_k} and over {|F_k| = ε_k}, with their difference.

    ``chi=None`` stands for χ ≡ 1 and reuses the plain tube.
    """
    unweighted = tube_residue(variety, chart, numerator, path, t_ladder, base_grid, phase_nodes, fiber_axes, seed)
    if chi is None:
        return WeightedTubeReport(weighted=unweighted, unweighted=unweighted, difference=0.0)
    levels, values = [], []
    for t in t_ladder:
        eps = path(t)
        values.append(_weighted_tube_integrate(variety, chart, numerator, eps, chi, base_grid, phase_nodes, fiber_axes, seed))
        levels.append(float(eps[-1]))
    weighted = ladder_report(levels, values, polynomial_limit(levels, values, degree=2))
    difference = abs(weighted.extrapolated.to_complex() - unweighted.extrapolated.to_complex())
    logger.debug("weighted tube difference %.3e", difference)
    return WeightedTubeReport(weighted=weighted, unweighted=unweighted, difference=float(difference))
