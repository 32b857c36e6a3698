"""Residual currents of homogeneity zero, dualizing sections and their pairing.

Chart data are (0,q)-forms whose coefficients are polynomials in (w, w̄)
over (1+|w|²)^s. That class is closed under ∂̄, so closedness is decided
symbolically before anything is sampled.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from math import comb
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .models import (
    AntiholomorphicConstruction,
    ArgumentError,
    ClosednessReport,
    CurrentKind,
    CurrentSpec,
    DiagnosticFlag,
    FlagCategory,
    ResidueReport,
    Verdict,
    WitnessReport,
)
from .polycore import (
    ZERO,
    ChartPolynomial,
    ComplexRational,
    HomogeneousPolynomial,
    MultiIndex,
    Scalar,
    Variety,
    chart_indices,
    dehomogenize,
    lift,
    polynomial_from_spec,
    to_chart,
    transition_factor,
)
from .residue import ChartSamples, Numerator, cutoff_sum, eta_ladder, ladder_report, richardson_limit

logger = logging.getLogger(__name__)

FormIndex = Tuple[int, ...]
BiTerm = Tuple[MultiIndex, MultiIndex]


# ── Coefficient class ───────────────────────────────────────────────────────
def _unit(n: int, l: int) -> MultiIndex:
    return tuple(1 if i == l else 0 for i in range(n))


def _poly_add(a: Mapping[BiTerm, ComplexRational], b: Mapping[BiTerm, ComplexRational]) -> Dict[BiTerm, ComplexRational]:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, ZERO) + v
    return {k: v for k, v in out.items() if not v.is_zero()}


def _poly_mul(a: Mapping[BiTerm, ComplexRational], b: Mapping[BiTerm, ComplexRational]) -> Dict[BiTerm, ComplexRational]:
    out: Dict[BiTerm, ComplexRational] = {}
    for (a1, b1), c1 in a.items():
        for (a2, b2), c2 in b.items():
            key = (tuple(x + y for x, y in zip(a1, a2)), tuple(x + y for x, y in zip(b1, b2)))
            out[key] = out.get(key, ZERO) + c1 * c2
    return {k: v for k, v in out.items() if not v.is_zero()}


def _weight_poly(n: int) -> Dict[BiTerm, ComplexRational]:
    """1 + Σ w_l w̄_l."""
    zero = (0,) * n
    out = {(zero, zero): ComplexRational(1)}
    for l in range(n):
        e = _unit(n, l)
        out[(e, e)] = ComplexRational(1)
    return out


class ChartFormCoefficient:
    """N(w, w̄)/(1 + |w|²)^s with Gaussian-rational coefficients."""

    def __init__(self, num_vars: int, terms: Mapping[BiTerm, Scalar], s: int = 0):
        if s < 0:
            raise ArgumentError("weight exponent s must be non-negative")
        self.num_vars = num_vars
        self.s = s
        clean: Dict[BiTerm, ComplexRational] = {}
        for (a, b), c in terms.items():
            a, b = tuple(int(x) for x in a), tuple(int(x) for x in b)
            if len(a) != num_vars or len(b) != num_vars:
                raise ArgumentError(f"coefficient term ({a}, {b}) needs {num_vars} exponents per block")
            clean[(a, b)] = clean.get((a, b), ZERO) + ComplexRational.coerce(c)
        self.terms = {k: v for k, v in clean.items() if not v.is_zero()}
        self._tables = None

    @classmethod
    def constant(cls, num_vars: int, value: Scalar = 1) -> "ChartFormCoefficient":
        zero = (0,) * num_vars
        return cls(num_vars, {(zero, zero): value})

    @classmethod
    def from_chart_polynomial(cls, F: ChartPolynomial, conjugate: bool = False, s: int = 0) -> "ChartFormCoefficient":
        zero = (0,) * F.num_vars
        if conjugate:
            return cls(F.num_vars, {(zero, e): c.conjugate() for e, c in F.terms.items()}, s)
        return cls(F.num_vars, {(e, zero): c for e, c in F.terms.items()}, s)

    @classmethod
    def wbar(cls, num_vars: int, l: int) -> "ChartFormCoefficient":
        return cls(num_vars, {((0,) * num_vars, _unit(num_vars, l)): 1})

    def is_zero(self) -> bool:
        return not self.terms

    def _raised(self, s: int) -> Dict[BiTerm, ComplexRational]:
        terms = dict(self.terms)
        weight = _weight_poly(self.num_vars)
        for _ in range(s - self.s):
            terms = _poly_mul(terms, weight)
        return terms

    def __add__(self, other: "ChartFormCoefficient") -> "ChartFormCoefficient":
        if other.num_vars != self.num_vars:
            raise ArgumentError("coefficients live on different charts")
        s = max(self.s, other.s)
        return ChartFormCoefficient(self.num_vars, _poly_add(self._raised(s), other._raised(s)), s)

    def __neg__(self) -> "ChartFormCoefficient":
        return self * -1

    def __sub__(self, other: "ChartFormCoefficient") -> "ChartFormCoefficient":
        return self + (-other)

    def __mul__(self, other) -> "ChartFormCoefficient":
        if isinstance(other, ChartFormCoefficient):
            return ChartFormCoefficient(self.num_vars, _poly_mul(self.terms, other.terms), self.s + other.s)
        c = ComplexRational.coerce(other)
        return ChartFormCoefficient(self.num_vars, {k: v * c for k, v in self.terms.items()}, self.s)

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ChartFormCoefficient):
            return NotImplemented
        s = max(self.s, other.s)
        return self._raised(s) == other._raised(s)

    def __repr__(self) -> str:
        return f"ChartFormCoefficient(terms={len(self.terms)}, s={self.s})"

    def dbar(self, l: int) -> "ChartFormCoefficient":
        """∂/∂w̄_l: (∂N/∂w̄_l·(1+|w|²) − s·N·w_l)/(1+|w|²)^{s+1}."""
        dN: Dict[BiTerm, ComplexRational] = {}
        for (a, b), c in self.terms.items():
            if b[l]:
                bb = list(b)
                bb[l] -= 1
                key = (a, tuple(bb))
                dN[key] = dN.get(key, ZERO) + c * b[l]
        if self.s == 0:
            return ChartFormCoefficient(self.num_vars, dN, 0)
        first = _poly_mul(dN, _weight_poly(self.num_vars))
        wl = {(_unit(self.num_vars, l), (0,) * self.num_vars): ComplexRational(-self.s)}
        return ChartFormCoefficient(self.num_vars, _poly_add(first, _poly_mul(self.terms, wl)), self.s + 1)

    def evaluate(self, W: np.ndarray) -> np.ndarray:
        W = np.asarray(W, dtype=complex)
        if self._tables is None:
            keys = sorted(self.terms)
            if keys:
                A = np.array([k[0] for k in keys], dtype=int)
                B = np.array([k[1] for k in keys], dtype=int)
                C = np.array([complex(self.terms[k]) for k in keys])
            else:
                A = B = np.zeros((0, self.num_vars), dtype=int)
                C = np.zeros(0, dtype=complex)
            self._tables = (A, B, C)
        A, B, C = self._tables
        if C.size == 0:
            return np.zeros(W.shape[:-1], dtype=complex)
        mono = np.prod(W[..., None, :] ** A * np.conj(W)[..., None, :] ** B, axis=-1)
        value = mono @ C
        if self.s:
            value = value / (1.0 + np.sum(np.abs(W) ** 2, axis=-1)) ** self.s
        return value


class ChartForm:
    """(0,q)-form Σ_I c_I dw̄_I on chart α."""

    def __init__(self, chart: int, num_vars: int, degree: int, components: Optional[Mapping[FormIndex, ChartFormCoefficient]] = None):
        self.chart = chart
        self.num_vars = num_vars
        self.degree = degree
        self.components: Dict[FormIndex, ChartFormCoefficient] = {}
        for I, c in (components or {}).items():
            I = tuple(I)
            if len(I) != degree or list(I) != sorted(set(I)) or any(not 0 <= l < num_vars for l in I):
                raise ArgumentError(f"dw̄ index {I} is not a sorted {degree}-subset of 0..{num_vars - 1}")
            if not c.is_zero():
                self.components[I] = self.components[I] + c if I in self.components else c

    @classmethod
    def zero(cls, chart: int, num_vars: int, degree: int) -> "ChartForm":
        return cls(chart, num_vars, degree)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components.values())

    def __add__(self, other: "ChartForm") -> "ChartForm":
        if (other.chart, other.num_vars, other.degree) != (self.chart, self.num_vars, self.degree):
            raise ArgumentError("forms must share chart and degree")
        out = dict(self.components)
        for I, c in other.components.items():
            out[I] = out[I] + c if I in out else c
        return ChartForm(self.chart, self.num_vars, self.degree, {I: c for I, c in out.items() if not c.is_zero()})

    def __mul__(self, other) -> "ChartForm":
        return ChartForm(self.chart, self.num_vars, self.degree, {I: c * other for I, c in self.components.items()})

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"ChartForm(chart={self.chart}, degree={self.degree}, components={sorted(self.components)})"

    def evaluate(self, W: np.ndarray) -> Dict[FormIndex, np.ndarray]:
        return {I: c.evaluate(W) for I, c in self.components.items()}


def dbar(form: ChartForm) -> ChartForm:
    """∂̄(Σ c_I dw̄_I) = Σ_I Σ_l ∂c_I/∂w̄_l dw̄_l∧dw̄_I."""
    out: Dict[FormIndex, ChartFormCoefficient] = {}
    for I, c in form.components.items():
        for l in range(form.num_vars):
            if l in I:
                continue
            d = c.dbar(l)
            if d.is_zero():
                continue
            sign = -1 if sum(1 for i in I if i < l) % 2 else 1
            key = tuple(sorted(I + (l,)))
            term = d * sign
            out[key] = out[key] + term if key in out else term
    return ChartForm(form.chart, form.num_vars, form.degree + 1, {k: v for k, v in out.items() if not v.is_zero()})


# ── Homogeneous data and chart pullbacks ────────────────────────────────────
@dataclass
class HomogeneousForm:
    """Σ_R N_R(z, z̄) dz̄_R / |z|^{2s} on C^{n+1} \\ 0."""

    num_vars: int
    degree: int
    components: Dict[FormIndex, Dict[BiTerm, ComplexRational]]
    s: int = 0

    def pullback(self, alpha: int) -> ChartForm:
        """Pull back along w ↦ lift(w) with z_α = 1, so dz̄_α = 0 and |z|² = 1 + |w|²."""
        n = self.num_vars - 1
        others = chart_indices(alpha, n)
        position = {j: l for l, j in enumerate(others)}
        out: Dict[FormIndex, ChartFormCoefficient] = {}
        for R, terms in self.components.items():
            if alpha in R:
                continue
            I = tuple(position[j] for j in R)
            chart_terms: Dict[BiTerm, ComplexRational] = {}
            for (a, b), c in terms.items():
                key = (a[:alpha] + a[alpha + 1:], b[:alpha] + b[alpha + 1:])
                chart_terms[key] = chart_terms.get(key, ZERO) + c
            coeff = ChartFormCoefficient(n, chart_terms, self.s)
            if not coeff.is_zero():
                out[I] = out[I] + coeff if I in out else coeff
        return ChartForm(alpha, n, self.degree, out)


def _holomorphic(P: HomogeneousPolynomial) -> Dict[BiTerm, ComplexRational]:
    zero = (0,) * P.num_vars
    return {(e, zero): c for e, c in P.terms.items()}


def _antiholomorphic(P: HomogeneousPolynomial) -> Dict[BiTerm, ComplexRational]:
    zero = (0,) * P.num_vars
    return {(zero, e): c.conjugate() for e, c in P.terms.items()}


def _bi_det(columns: Sequence[Sequence[Dict[BiTerm, ComplexRational]]], rows: Sequence[int]) -> Dict[BiTerm, ComplexRational]:
    """Leibniz determinant of the polynomial minor with the given rows."""
    out: Dict[BiTerm, ComplexRational] = {}
    size = len(rows)
    for perm in itertools.permutations(range(size)):
        sign = 1
        for i in range(size):
            for j in range(i + 1, size):
                if perm[i] > perm[j]:
                    sign = -sign
        prod = None
        for c in range(size):
            entry = columns[c][rows[perm[c]]]
            prod = entry if prod is None else _poly_mul(prod, entry)
            if not prod:
                break
        if prod:
            out = _poly_add(out, {k: v * sign for k, v in prod.items()})
    return out


# ── Residual currents ───────────────────────────────────────────────────────
# a sum keeps the label of its least trivial summand
_KIND_ORDER = [CurrentKind.zero, CurrentKind.ideal, CurrentKind.exact, CurrentKind.antiholomorphic]


@dataclass
class ResidualCurrent:
    name: str
    variety: Variety
    q: int
    kind: CurrentKind
    charts: Dict[int, ChartForm]
    compatible: Optional[bool] = None
    notes: List[str] = field(default_factory=list)

    def chart_form(self, alpha: int) -> ChartForm:
        return self.charts[alpha]

    def is_zero(self) -> bool:
        return all(f.is_zero() for f in self.charts.values())

    def scaled(self, c: Scalar, name: Optional[str] = None) -> "ResidualCurrent":
        return ResidualCurrent(name or self.name, self.variety, self.q, self.kind,
                               {a: f * c for a, f in self.charts.items()}, self.compatible, list(self.notes))

    def __add__(self, other: "ResidualCurrent") -> "ResidualCurrent":
        if other.q != self.q:
            raise ArgumentError("currents of different degree cannot be added")
        kind = max(self.kind, other.kind, key=_KIND_ORDER.index)
        compatible = None if self.compatible is None or other.compatible is None else self.compatible and other.compatible
        return ResidualCurrent(f"{self.name}+{other.name}", self.variety, self.q, kind,
                               {a: self.charts[a] + other.charts[a] for a in self.charts}, compatible)


def zero_current(variety: Variety, name: str = "zero", q: Optional[int] = None) -> ResidualCurrent:
    q = variety.n - variety.m if q is None else q
    return ResidualCurrent(name, variety, q, CurrentKind.zero,
                           {a: ChartForm.zero(a, variety.n, q) for a in range(variety.n + 1)}, True)


def make_exact_current(
    variety: Variety,
    numerator: Mapping[BiTerm, Scalar],
    s: int,
    name: str = "exact",
) -> ResidualCurrent:
    """φ = ∂̄ψ for ψ = N(z, z̄)/|z|^{2s} of homogeneity zero."""
    N = variety.n + 1
    terms: Dict[BiTerm, ComplexRational] = {}
    for (a, b), c in numerator.items():
        a, b = tuple(a), tuple(b)
        if len(a) != N or len(b) != N:
            raise ArgumentError(f"ψ term ({a}, {b}) needs {N} exponents per block")
        if sum(a) != s or sum(b) != s:
            raise ArgumentError(f"ψ term ({a}, {b}) is not of bidegree ({s}, {s}); homogeneity mismatch")
        terms[(a, b)] = terms.get((a, b), ZERO) + ComplexRational.coerce(c)
    psi = HomogeneousForm(N, 0, {(): terms}, s)
    charts = {a: dbar(psi.pullback(a)) for a in range(N)}
    return ResidualCurrent(name, variety, 1, CurrentKind.exact, charts, True, [f"∂̄ of a degree-({s},{s}) ratio"])


def make_antiholomorphic(
    variety: Variety,
    construction: AntiholomorphicConstruction = AntiholomorphicConstruction.affine,
    h: Optional[HomogeneousPolynomial] = None,
    name: str = "antiholomorphic",
) -> ResidualCurrent:
    """Nontrivial (0, n−m) class on a curve.

    ``affine``: [conj(∂F/∂w_2)dw̄_1 − conj(∂F/∂w_1)dw̄_2](1+|w|²)^{−(d−1)} in each
    chart of a plane curve, signed (−1)^α; not chart-compatible.
    ``homogeneous``: conj(h)·det[z̄, ∇P_1, ..., ∇P_m, dz̄]/|z|^{2(d−m)} pulled back
    to each chart; descends to CP^n.
    """
    n, m, d = variety.n, variety.m, variety.total_degree
    construction = AntiholomorphicConstruction(construction)
    if n - m != 1:
        raise ArgumentError(f"antiholomorphic currents are built on curves, got dimension {n - m}")
    if h is not None and h.degree != d - n - 1:
        raise ArgumentError(f"h must have degree d−n−1 = {d - n - 1}, got {h.degree}")
    if d < 3:
        logger.info("%s: degree %d < 3, the current is expected to be exact", name, d)

    if construction == AntiholomorphicConstruction.affine:
        if n != 2:
            raise ArgumentError("the affine construction needs a plane curve (n=2, m=1)")
        charts = {}
        for a in range(n + 1):
            F = variety.chart_polys(a)[0]
            c1 = ChartFormCoefficient.from_chart_polynomial(F.derivative(1), conjugate=True, s=d - 1)
            c2 = ChartFormCoefficient.from_chart_polynomial(F.derivative(0), conjugate=True, s=d - 1) * -1
            form = ChartForm(a, n, 1, {(0,): c1, (1,): c2}) * (-1) ** a
            if h is not None:
                form = form * ChartFormCoefficient.from_chart_polynomial(dehomogenize(h, a), conjugate=True)
            charts[a] = form
        return ResidualCurrent(name, variety, 1, CurrentKind.antiholomorphic, charts, False,
                               ["affine ambient extension; not chart-compatible"])

    N = n + 1
    h = h if h is not None else HomogeneousPolynomial.monomial((0,) * N) if d - n - 1 == 0 else None
    if h is None:
        raise ArgumentError("the homogeneous construction needs h of degree d−n−1 ≥ 0")
    zbar = [{((0,) * N, _unit(N, j)): ComplexRational(1)} for j in range(N)]
    columns = [zbar] + [[_holomorphic(dP) for dP in P.gradient()] for P in variety.polys]
    hbar = _antiholomorphic(h)
    components: Dict[FormIndex, Dict[BiTerm, ComplexRational]] = {}
    for R in range(N):
        rows = [j for j in range(N) if j != R]
        minor = _bi_det(columns, rows)
        if not minor:
            continue
        sign = -1 if (R + n) % 2 else 1
        components[(R,)] = {k: v * sign for k, v in _poly_mul(minor, hbar).items()}
    form = HomogeneousForm(N, 1, components, d - m)
    charts = {a: form.pullback(a) for a in range(N)}
    return ResidualCurrent(name, variety, 1, CurrentKind.antiholomorphic, charts, True,
                           ["homogeneous determinant construction"])


def make_ideal_current(
    variety: Variety,
    index: int = 0,
    antiholomorphic_variable: int = 1,
    differential: int = 1,
    name: str = "ideal",
) -> ResidualCurrent:
    """Φ_α = F_k^{(α)}·w̄_j dw̄_l: zero on V, hence closed and annihilated."""
    n, m = variety.n, variety.m
    q = n - m
    for label, v, top in (("index", index, m), ("variable", antiholomorphic_variable, n), ("differential", differential, n)):
        if not 0 <= v < top:
            raise ArgumentError(f"ideal current {label} {v} out of range 0..{top - 1}")
    charts = {}
    for a in range(n + 1):
        F = ChartFormCoefficient.from_chart_polynomial(variety.chart_polys(a)[index])
        coeff = F * ChartFormCoefficient.wbar(n, antiholomorphic_variable)
        fill = [l for l in range(n) if l != differential][: q - 1]
        I = tuple(sorted([differential] + fill))
        charts[a] = ChartForm(a, n, q, {I: coeff})
    return ResidualCurrent(name, variety, q, CurrentKind.ideal, charts, True, [f"F_{index + 1} times a smooth form"])


def _rational(pair: Sequence[int]) -> ComplexRational:
    return ComplexRational(Fraction(int(pair[0]), int(pair[1])))


def current_from_spec(variety: Variety, spec: CurrentSpec) -> ResidualCurrent:
    N = variety.n + 1
    kind = CurrentKind(spec.kind)
    if kind == CurrentKind.exact:
        numerator: Dict[BiTerm, ComplexRational] = {}
        for t in spec.psi_terms:
            key = (tuple(t.z), tuple(t.zbar))
            c = ComplexRational(Fraction(*t.re), Fraction(*t.im))
            numerator[key] = numerator.get(key, ZERO) + c
        current = make_exact_current(variety, numerator, spec.psi_s, spec.name)
    elif kind == CurrentKind.antiholomorphic:
        h = polynomial_from_spec(spec.h, N) if spec.h is not None and spec.h.terms else None
        current = make_antiholomorphic(variety, spec.construction, h, spec.name)
    elif kind == CurrentKind.ideal:
        current = make_ideal_current(variety, spec.ideal_index, spec.ideal_antiholomorphic_variable,
                                     spec.ideal_differential, spec.name)
    else:
        current = zero_current(variety, spec.name)
    if tuple(spec.scale) != (1, 1):
        current = current.scaled(_rational(spec.scale), spec.name)
    return current


# ── Tangential restriction ──────────────────────────────────────────────────
def tangent_frames(variety: Variety, alpha: int, W: np.ndarray) -> np.ndarray:
    """Orthonormal holomorphic tangent frames of V at W, shape (K, n, n−m)."""
    J = variety.jacobian_chart(alpha, W)
    _, _, Vh = np.linalg.svd(J)
    return np.conj(np.swapaxes(Vh[:, variety.m:, :], 1, 2))


def restrict_tangential(values: Mapping[FormIndex, np.ndarray], frames: np.ndarray) -> np.ndarray:
    """max over L of |Σ_I c_I det(conj(T)[I, L])|, the size of a (0,r)-form on T^{0,1}V."""
    K, _, k = frames.shape
    if not values:
        return np.zeros(K)
    r = len(next(iter(values)))
    if r > k:
        return np.zeros(K)
    conj = np.conj(frames)
    best = np.zeros(K)
    for L in itertools.combinations(range(k), r):
        total = np.zeros(K, dtype=complex)
        for I, c in values.items():
            sub = conj[:, list(I), :][:, :, list(L)]
            total += np.asarray(c) * (np.linalg.det(sub) if r else 1.0)
        best = np.maximum(best, np.abs(total))
    return best


def _max_abs(values: Mapping[FormIndex, np.ndarray]) -> float:
    return max((float(np.max(np.abs(v), initial=0.0)) for v in values.values()), default=0.0)


def _ideal_fit_residual(variety: Variety, forms: Mapping[int, ChartForm], points: Mapping[int, np.ndarray],
                        radius: float, seed: int, limit: int = 200) -> float:
    """Least-squares fit of the form against span{F_k·(1, w_l, w̄_l)} just off V."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for a, W in sorted(points.items()):
        if not len(W) or forms[a].is_zero():
            continue
        W = W[:limit]
        offset = rng.standard_normal(W.shape) + 1j * rng.standard_normal(W.shape)
        P = W + radius * offset / np.sqrt(2.0)
        F = variety.evaluate_chart(a, P)
        basis = [np.ones(len(P))] + [P[:, l] for l in range(variety.n)] + [np.conj(P[:, l]) for l in range(variety.n)]
        A = np.stack([F[:, k] * b for k in range(variety.m) for b in basis], axis=-1)
        for c in forms[a].evaluate(P).values():
            norm = np.linalg.norm(c)
            if norm == 0:
                continue
            x, *_ = np.linalg.lstsq(A, c, rcond=None)
            worst = max(worst, float(np.linalg.norm(c - A @ x) / norm))
    return worst


def check_closed(
    current: ResidualCurrent,
    points: Mapping[int, np.ndarray],
    tol: float = 1e-8,
    fit_radius: float = 1e-3,
    seed: int = 0,
) -> ClosednessReport:
    """∂̄Φ_α computed exactly, then restricted to the (0,q+1) directions of V at samples.

    The residue current ∂̄(1/F) is annihilated by F_k, F̄_k and dF̄_k, so on a
    reduced V the product ∂̄(1/F)∧∂̄Φ vanishes exactly when the tangential
    restriction of ∂̄Φ does; that restriction decides closedness. The ambient
    fit ∂̄Φ ≈ Σ F_k·A_k only tests the holomorphic part of that ideal, a
    sufficient but not necessary condition, and is reported alongside.
    Residuals are relative to max(|Φ|, 1).
    """
    variety = current.variety
    dforms = {a: dbar(f) for a, f in current.charts.items()}
    symbolic_zero = all(f.is_zero() for f in dforms.values())
    structural = current.q + 1 > variety.n - variety.m
    tangential = 0.0
    count = 0
    for a, W in sorted(points.items()):
        if not len(W):
            continue
        count += len(W)
        if symbolic_zero or structural:
            continue
        values = dforms[a].evaluate(W)
        restricted = restrict_tangential(values, tangent_frames(variety, a, W))
        scale = max(_max_abs(values), _max_abs(current.charts[a].evaluate(W)), 1.0)
        tangential = max(tangential, float(restricted.max(initial=0.0)) / scale)
    ambient = None if symbolic_zero else _ideal_fit_residual(variety, dforms, points, fit_radius, seed)
    closed = symbolic_zero or structural or tangential <= tol
    logger.debug("closedness %s: symbolic=%s structural=%s tangential=%.3e", current.name, symbolic_zero, structural, tangential)
    return ClosednessReport(
        current=current.name,
        closed=closed,
        symbolic_zero=symbolic_zero,
        structural_zero=structural,
        tangential_residual=tangential,
        ambient_fit_residual=ambient,
        samples=count,
    )


# ── Chart transitions ───────────────────────────────────────────────────────
def chart_change(W: np.ndarray, alpha: int, beta: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Chart-β coordinates v of points W in chart α, with ∂v/∂w (K, n, n) and z = lift(W)."""
    z = lift(W, alpha)
    n = W.shape[-1]
    v = to_chart(z, beta)
    src = chart_indices(alpha, n)
    dst = chart_indices(beta, n)
    zb = z[:, beta]
    D = np.zeros((W.shape[0], n, n), dtype=complex)
    for i, j in enumerate(dst):
        for l, jl in enumerate(src):
            D[:, i, l] = ((1.0 if j == jl else 0.0) - v[:, i] * (1.0 if beta == jl else 0.0)) / zb
    return v, D, z


def _overlap(W: np.ndarray, alpha: int, beta: int, ratio: float = 0.2) -> np.ndarray:
    z = lift(W, alpha)
    return np.abs(z[:, beta]) > ratio * np.max(np.abs(z), axis=-1)


def pullback_values(form: ChartForm, W: np.ndarray, alpha: int) -> Dict[FormIndex, np.ndarray]:
    """Coefficients in chart α of the chart-β form ``form`` at points W of chart α."""
    v, D, _ = chart_change(W, alpha, form.chart)
    values = form.evaluate(v)
    out: Dict[FormIndex, np.ndarray] = {}
    conjD = np.conj(D)
    for L in itertools.combinations(range(form.num_vars), form.degree):
        total = np.zeros(W.shape[0], dtype=complex)
        for I, c in values.items():
            sub = conjD[:, list(I), :][:, :, list(L)]
            total += c * (np.linalg.det(sub) if form.degree else 1.0)
        out[L] = total
    return out


def compatibility_report(current: ResidualCurrent, points: Mapping[int, np.ndarray], tol: float = 1e-6) -> Tuple[WitnessReport, List[DiagnosticFlag]]:
    """Φ_α − Φ_β restricted to V on chart overlaps, relative to max(|Φ_α|, 1)."""
    variety = current.variety
    worst = 0.0
    pairs = 0
    for a, W in sorted(points.items()):
        for b in range(variety.n + 1):
            if b == a or not len(W):
                continue
            Wo = W[_overlap(W, a, b)]
            if not len(Wo):
                continue
            pairs += 1
            own = current.charts[a].evaluate(Wo)
            other = pullback_values(current.charts[b], Wo, a)
            keys = set(own) | set(other)
            zeros = np.zeros(len(Wo), dtype=complex)
            diff = {I: own.get(I, zeros) - other.get(I, zeros) for I in keys}
            restricted = restrict_tangential(diff, tangent_frames(variety, a, Wo))
            scale = max(_max_abs(own), _max_abs(other), 1.0)
            worst = max(worst, float(restricted.max(initial=0.0)) / scale)
    ok = worst <= tol
    flags = []
    if not ok:
        flags.append(DiagnosticFlag(flag_id=f"{current.name}-compatibility", category=FlagCategory.compatibility,
                                    message=f"{current.name}: chart forms disagree on V overlaps (residual {worst:.3e})"))
        logger.warning("current %s is not chart-compatible (residual %.3e)", current.name, worst)
    report = WitnessReport(name=f"compatibility:{current.name}", verdict=Verdict.passed if ok else Verdict.failed,
                           residual=worst, details={"chart_pairs": pairs, "tol": tol})
    return report, flags


# ── Dualizing sections ──────────────────────────────────────────────────────
@dataclass
class DualizingSection:
    """γ_α = (−1)^α h^{(α)}(w) dw_1∧...∧dw_n with twist l_αβ = (z_β/z_α)^d."""

    name: str
    variety: Variety
    h: HomogeneousPolynomial

    @property
    def twist(self) -> int:
        return self.variety.total_degree

    def chart_value(self, alpha: int, W: np.ndarray) -> np.ndarray:
        return (-1) ** alpha * self.h.evaluate(lift(W, alpha))

    def chart_polynomial(self, alpha: int) -> ChartPolynomial:
        return dehomogenize(self.h, alpha) * ((-1) ** alpha)


def section_dimension(variety: Variety) -> int:
    e = variety.total_degree - variety.n - 1
    return comb(e + variety.n, variety.n) if e >= 0 else 0


def make_dualizing_section(variety: Variety, h: HomogeneousPolynomial, name: str = "") -> DualizingSection:
    e = variety.total_degree - variety.n - 1
    if e < 0:
        raise ArgumentError(f"d−n−1 = {e} < 0: the dualizing bundle has no sections")
    if h.num_vars != variety.n + 1 or h.degree != e:
        raise ArgumentError(f"h must be homogeneous of degree d−n−1 = {e} in {variety.n + 1} variables")
    return DualizingSection(name or repr(sorted(h.terms)), variety, h)


def monomials(num_vars: int, degree: int) -> List[MultiIndex]:
    out = []
    for combo in itertools.combinations_with_replacement(range(num_vars), degree):
        e = [0] * num_vars
        for i in combo:
            e[i] += 1
        out.append(tuple(e))
    return sorted(out, reverse=True)


def section_basis(variety: Variety) -> List[DualizingSection]:
    """Monomial sections z^e, |e| = d−n−1; empty when d ≤ n."""
    e = variety.total_degree - variety.n - 1
    if e < 0:
        return []
    return [
        make_dualizing_section(variety, HomogeneousPolynomial.monomial(mono), "z^" + "".join(map(str, mono)))
        for mono in monomials(variety.n + 1, e)
    ]


def transition_report(section: DualizingSection, points: Mapping[int, np.ndarray], tol: float = 1e-8) -> WitnessReport:
    """γ_α = l_αβ·γ_β on overlaps, γ_β pulled back by det(∂v/∂w)."""
    variety = section.variety
    worst = 0.0
    for a, W in sorted(points.items()):
        for b in range(variety.n + 1):
            if b == a or not len(W):
                continue
            Wo = W[_overlap(W, a, b)]
            if not len(Wo):
                continue
            v, D, z = chart_change(Wo, a, b)
            l_ab = transition_factor(a, b, variety)
            ratio = (z[:, b] / z[:, a]) ** l_ab.exponent
            own = section.chart_value(a, Wo)
            other = ratio * section.chart_value(b, v) * np.linalg.det(D)
            scale = max(float(np.max(np.abs(own))), 1e-300)
            worst = max(worst, float(np.max(np.abs(own - other))) / scale)
    return WitnessReport(name=f"transition:{section.name}", verdict=Verdict.passed if worst <= tol else Verdict.failed,
                         residual=worst, details={"twist": section.twist})


def section_dbar(section: DualizingSection, samples: Mapping[int, ChartSamples], step: float = 1e-5) -> Tuple[float, float]:
    """∂̄ of γ_α by central Wirtinger differences at the samples of V.

    Returns (max |∂γ_α/∂w̄_l| relative to max(|γ_α|, 1), ∫_V ϑ_α |∂̄γ_α|).
    """
    worst, mass = 0.0, 0.0
    for a, chart in sorted(samples.items()):
        for proj in chart.projections:
            W = proj.points
            if not W.shape[0]:
                continue
            size = max(float(np.max(np.abs(section.chart_value(a, W)))), 1.0)
            grad = np.zeros(W.shape[0])
            for l in range(W.shape[1]):
                e = np.zeros(W.shape[1])
                e[l] = step
                dx = (section.chart_value(a, W + e) - section.chart_value(a, W - e)) / (2 * step)
                dy = (section.chart_value(a, W + 1j * e) - section.chart_value(a, W - 1j * e)) / (2 * step)
                grad = np.maximum(grad, np.abs(0.5 * (dx + 1j * dy)))
            worst = max(worst, float(grad.max()) / size)
            mass += float(np.sum(proj.weights * partition_weight(W) * grad))
    return worst, mass


# ── Pairing ─────────────────────────────────────────────────────────────────
def pair_numerators(
    samples: Mapping[int, ChartSamples],
    numerators: Mapping[int, Numerator],
    eta: float = 1e-3,
    eta_halvings: int = 3,
) -> ResidueReport:
    """Σ_α of fibered residues, sharing one η-ladder across charts."""
    return pair_densities(samples, {a: samples[a].densities(f) for a, f in numerators.items()}, eta, eta_halvings)


def pair_densities(
    samples: Mapping[int, ChartSamples],
    densities: Mapping[int, Sequence[np.ndarray]],
    eta: float = 1e-3,
    eta_halvings: int = 3,
) -> ResidueReport:
    levels = eta_ladder(eta, eta_halvings)
    values = np.zeros(len(levels), dtype=complex)
    flags: List[DiagnosticFlag] = []
    excluded = 0.0
    for a in sorted(densities):
        chart = samples[a]
        chart_densities = densities[a]
        values += np.array([cutoff_sum(chart, chart_densities, e) for e in levels])
        flags.extend(chart.flags)
        excluded += chart.excluded
    limit = richardson_limit(4.0, list(values))
    return ladder_report(levels, list(values), limit, eta=levels[-1], excluded_measure=excluded, flags=flags)


def partition_weight(W: np.ndarray) -> np.ndarray:
    """ϑ_α = |z_α|²/|z|² = 1/(1 + |w|²) in chart α."""
    return 1.0 / (1.0 + np.sum(np.abs(W) ** 2, axis=-1))


def current_numerator(current: ResidualCurrent, section: DualizingSection, alpha: int) -> Numerator:
    form = current.charts[alpha]

    def numerator(W: np.ndarray) -> Dict[FormIndex, np.ndarray]:
        weight = partition_weight(W) * section.chart_value(alpha, W)
        return {I: weight * c for I, c in form.evaluate(W).items()}

    return numerator


def pair_current(
    current: ResidualCurrent,
    section: DualizingSection,
    samples: Mapping[int, ChartSamples],
    eta: float = 1e-3,
    eta_halvings: int = 3,
) -> ResidueReport:
    """⟨φ, γ⟩ = Σ_α ∫ ϑ_α γ_α∧Φ_α ⋀∂̄(1/F^{(α)}_k) as fibered residues."""
    variety = current.variety
    if current.q != variety.n - variety.m:
        raise ArgumentError(f"pairing needs a (0,{variety.n - variety.m}) current, got (0,{current.q})")
    if section.variety is not variety:
        raise ArgumentError("current and section live on different varieties")
    numerators = {a: current_numerator(current, section, a) for a in range(variety.n + 1)}
    report = pair_numerators(samples, numerators, eta, eta_halvings)
    logger.debug("pairing <%s, %s> = %s", current.name, section.name, report.extrapolated.to_complex())
    return report
