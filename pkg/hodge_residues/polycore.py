"""Exact polynomial algebra, charts and variety sampling.

Polynomials carry Gaussian-rational coefficients and are evaluated either
exactly (``ComplexRational`` inputs) or in vectorized complex floating point.
A variety is a complete intersection {P_1 = ... = P_m = 0} in CP^n; its
points are sampled chart by chart as fibers of a coordinate projection.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import logging
from dataclasses import dataclass
from fractions import Fraction
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .models import ArgumentError, ChartError, PolynomialSpec, VarietySpec, WitnessReport, Verdict

logger = logging.getLogger(__name__)

MultiIndex = Tuple[int, ...]
Scalar = Union[int, Fraction, "ComplexRational"]


# ── Exact scalars ───────────────────────────────────────────────────────────
@dataclass(frozen=True)
class ComplexRational:
    re: Fraction = Fraction(0)
    im: Fraction = Fraction(0)

    def __post_init__(self):
        object.__setattr__(self, "re", Fraction(self.re))
        object.__setattr__(self, "im", Fraction(self.im))

    @classmethod
    def coerce(cls, value: Scalar) -> "ComplexRational":
        if isinstance(value, ComplexRational):
            return value
        if isinstance(value, (int, Fraction)):
            return cls(Fraction(value), Fraction(0))
        raise TypeError(f"cannot convert {type(value).__name__} to ComplexRational")

    def is_zero(self) -> bool:
        return self.re == 0 and self.im == 0

    def conjugate(self) -> "ComplexRational":
        return ComplexRational(self.re, -self.im)

    def __complex__(self) -> complex:
        return complex(float(self.re), float(self.im))

    def __add__(self, other: Scalar) -> "ComplexRational":
        o = ComplexRational.coerce(other)
        return ComplexRational(self.re + o.re, self.im + o.im)

    __radd__ = __add__

    def __neg__(self) -> "ComplexRational":
        return ComplexRational(-self.re, -self.im)

    def __sub__(self, other: Scalar) -> "ComplexRational":
        return self + (-ComplexRational.coerce(other))

    def __rsub__(self, other: Scalar) -> "ComplexRational":
        return ComplexRational.coerce(other) - self

    def __mul__(self, other: Scalar) -> "ComplexRational":
        o = ComplexRational.coerce(other)
        return ComplexRational(self.re * o.re - self.im * o.im, self.re * o.im + self.im * o.re)

    __rmul__ = __mul__

    def __truediv__(self, other: Scalar) -> "ComplexRational":
        o = ComplexRational.coerce(other)
        norm = o.re * o.re + o.im * o.im
        if norm == 0:
            raise ZeroDivisionError("division by exact zero")
        num = self * o.conjugate()
        return ComplexRational(num.re / norm, num.im / norm)

    def __pow__(self, k: int) -> "ComplexRational":
        if k < 0:
            return ComplexRational(1) / (self ** (-k))
        out = ComplexRational(1)
        base = self
        while k:
            if k & 1:
                out = out * base
            base = base * base
            k >>= 1
        return out

    def __eq__(self, other: object) -> bool:
        if isinstance(other, (int, Fraction)):
            other = ComplexRational.coerce(other)
        if not isinstance(other, ComplexRational):
            return NotImplemented
        return self.re == other.re and self.im == other.im

    def __hash__(self) -> int:
        return hash((self.re, self.im))

    def __repr__(self) -> str:
        if self.im == 0:
            return f"{self.re}"
        return f"({self.re}{'+' if self.im >= 0 else '-'}{abs(self.im)}i)"

    def to_pairs(self) -> List[List[int]]:
        return [[self.re.numerator, self.re.denominator], [self.im.numerator, self.im.denominator]]

    @classmethod
    def from_pairs(cls, pairs: Sequence[Sequence[int]]) -> "ComplexRational":
        return cls(Fraction(*pairs[0]), Fraction(*pairs[1]))


ZERO = ComplexRational(0)
ONE = ComplexRational(1)


def _is_exact(value: object) -> bool:
    return isinstance(value, (int, Fraction, ComplexRational)) and not isinstance(value, bool)


def _clean(terms: Mapping) -> Dict:
    return {k: v for k, v in terms.items() if not v.is_zero()}


def _add_terms(a: Mapping, b: Mapping, sign: int = 1) -> Dict:
    out = dict(a)
    for k, v in b.items():
        out[k] = out.get(k, ZERO) + (v if sign > 0 else -v)
    return _clean(out)


def _numeric_tables(terms: Mapping[MultiIndex, ComplexRational], num_vars: int):
    if not terms:
        return np.zeros((0, num_vars), dtype=int), np.zeros(0, dtype=complex)
    keys = sorted(terms)
    exps = np.array(keys, dtype=int).reshape(len(keys), num_vars)
    coeffs = np.array([complex(terms[k]) for k in keys], dtype=complex)
    return exps, coeffs


def _evaluate_tables(exps: np.ndarray, coeffs: np.ndarray, points: np.ndarray) -> np.ndarray:
    points = np.asarray(points, dtype=complex)
    if coeffs.size == 0:
        return np.zeros(points.shape[:-1], dtype=complex)
    monomials = np.prod(points[..., None, :] ** exps, axis=-1)
    return monomials @ coeffs


def _evaluate_exact(terms: Mapping[MultiIndex, ComplexRational], point: Sequence[Scalar]) -> ComplexRational:
    coords = [ComplexRational.coerce(x) for x in point]
    powers: Dict[Tuple[int, int], ComplexRational] = {}
    total = ZERO
    for exps, c in sorted(terms.items()):
        value = c
        for i, e in enumerate(exps):
            if e == 0:
                continue
            key = (i, e)
            if key not in powers:
                powers[key] = coords[i] ** e
            value = value * powers[key]
        total = total + value
    return total


# ── Homogeneous polynomials ─────────────────────────────────────────────────
class HomogeneousPolynomial:
    """Homogeneous polynomial in z_0..z_n with Gaussian-rational coefficients."""

    def __init__(self, num_vars: int, degree: int, terms: Mapping[MultiIndex, Scalar]):
        self.num_vars = num_vars
        self.degree = degree
        clean: Dict[MultiIndex, ComplexRational] = {}
        for exps, c in terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != num_vars:
                raise ArgumentError(f"multi-index {exps} has length {len(exps)}, expected {num_vars}")
            if any(e < 0 for e in exps):
                raise ArgumentError(f"negative exponent in {exps}")
            if sum(exps) != degree:
                raise ArgumentError(f"term {exps} has degree {sum(exps)}, expected {degree}")
            c = ComplexRational.coerce(c)
            clean[exps] = clean.get(exps, ZERO) + c
        self.terms: Dict[MultiIndex, ComplexRational] = _clean(clean)
        self._tables = None

    @classmethod
    def monomial(cls, exps: Sequence[int], coefficient: Scalar = 1) -> "HomogeneousPolynomial":
        exps = tuple(exps)
        return cls(len(exps), sum(exps), {exps: coefficient})

    @classmethod
    def zero(cls, num_vars: int, degree: int) -> "HomogeneousPolynomial":
        return cls(num_vars, degree, {})

    def is_zero(self) -> bool:
        return not self.terms

    def _check_compatible(self, other: "HomogeneousPolynomial") -> None:
        if other.num_vars != self.num_vars or other.degree != self.degree:
            raise ArgumentError("polynomials must share num_vars and degree")

    def __add__(self, other: "HomogeneousPolynomial") -> "HomogeneousPolynomial":
        self._check_compatible(other)
        return HomogeneousPolynomial(self.num_vars, self.degree, _add_terms(self.terms, other.terms))

    def __sub__(self, other: "HomogeneousPolynomial") -> "HomogeneousPolynomial":
        self._check_compatible(other)
        return HomogeneousPolynomial(self.num_vars, self.degree, _add_terms(self.terms, other.terms, -1))

    def __neg__(self) -> "HomogeneousPolynomial":
        return HomogeneousPolynomial(self.num_vars, self.degree, {k: -v for k, v in self.terms.items()})

    def __mul__(self, other: Union[Scalar, "HomogeneousPolynomial"]) -> "HomogeneousPolynomial":
        if isinstance(other, HomogeneousPolynomial):
            if other.num_vars != self.num_vars:
                raise ArgumentError("num_vars mismatch")
            out: Dict[MultiIndex, ComplexRational] = {}
            for ea, ca in self.terms.items():
                for eb, cb in other.terms.items():
                    e = tuple(x + y for x, y in zip(ea, eb))
                    out[e] = out.get(e, ZERO) + ca * cb
            return HomogeneousPolynomial(self.num_vars, self.degree + other.degree, out)
        c = ComplexRational.coerce(other)
        return HomogeneousPolynomial(self.num_vars, self.degree, {k: v * c for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HomogeneousPolynomial):
            return NotImplemented
        return (self.num_vars, self.degree, self.terms) == (other.num_vars, other.degree, other.terms)

    def __hash__(self) -> int:
        return hash(self.content_hash())

    def __repr__(self) -> str:
        return f"HomogeneousPolynomial(n+1={self.num_vars}, d={self.degree}, terms={len(self.terms)})"

    def derivative(self, i: int) -> "HomogeneousPolynomial":
        out: Dict[MultiIndex, ComplexRational] = {}
        for exps, c in self.terms.items():
            if exps[i] == 0:
                continue
            e = list(exps)
            e[i] -= 1
            out[tuple(e)] = c * exps[i]
        return HomogeneousPolynomial(self.num_vars, max(self.degree - 1, 0), out)

    def gradient(self) -> List["HomogeneousPolynomial"]:
        return [self.derivative(i) for i in range(self.num_vars)]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        if self._tables is None:
            self._tables = _numeric_tables(self.terms, self.num_vars)
        return _evaluate_tables(*self._tables, points)

    def canonical(self) -> List:
        return [[list(e), c.to_pairs()] for e, c in sorted(self.terms.items())]

    def content_hash(self) -> str:
        payload = json.dumps([self.num_vars, self.degree, self.canonical()], separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def eval_poly(P: HomogeneousPolynomial, point: Sequence) -> Union[ComplexRational, complex]:
    """Evaluate P at a point; exact when every coordinate is an exact scalar."""
    if len(point) != P.num_vars:
        raise ArgumentError(f"point has length {len(point)}, polynomial expects {P.num_vars}")
    if all(_is_exact(x) for x in point):
        return _evaluate_exact(P.terms, point)
    return complex(P.evaluate(np.asarray(point, dtype=complex)))


def polynomial_from_spec(spec: PolynomialSpec, num_vars: int, degree: Optional[int] = None) -> HomogeneousPolynomial:
    terms: Dict[MultiIndex, ComplexRational] = {}
    degrees = set()
    for t in spec.terms:
        if len(t.exponents) != num_vars:
            raise ArgumentError(f"term {t.exponents} has length {len(t.exponents)}, expected {num_vars}")
        re, im = t.coefficient()
        key = tuple(t.exponents)
        terms[key] = terms.get(key, ZERO) + ComplexRational(re, im)
        degrees.add(sum(t.exponents))
    if len(degrees) > 1:
        raise ArgumentError(f"polynomial is not homogeneous: term degrees {sorted(degrees)}")
    if degree is None:
        if not degrees:
            raise ArgumentError("cannot infer the degree of an empty polynomial")
        degree = degrees.pop()
    return HomogeneousPolynomial(num_vars, degree, terms)


# ── Chart polynomials ───────────────────────────────────────────────────────
def chart_indices(alpha: int, n: int) -> List[int]:
    """Homogeneous indices carried by the affine coordinates w_1..w_n of chart α."""
    return [j for j in range(n + 1) if j != alpha]


class ChartPolynomial:
    """Polynomial in the affine coordinates w_1..w_n of chart α."""

    def __init__(self, chart: int, num_vars: int, terms: Mapping[MultiIndex, Scalar]):
        self.chart = chart
        self.num_vars = num_vars
        clean: Dict[MultiIndex, ComplexRational] = {}
        for exps, c in terms.items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != num_vars:
                raise ArgumentError(f"multi-index {exps} has length {len(exps)}, expected {num_vars}")
            clean[exps] = clean.get(exps, ZERO) + ComplexRational.coerce(c)
        self.terms: Dict[MultiIndex, ComplexRational] = _clean(clean)
        self._tables = None

    @classmethod
    def constant(cls, chart: int, num_vars: int, value: Scalar = 1) -> "ChartPolynomial":
        return cls(chart, num_vars, {(0,) * num_vars: value})

    @property
    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=0)

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "ChartPolynomial") -> "ChartPolynomial":
        return ChartPolynomial(self.chart, self.num_vars, _add_terms(self.terms, other.terms))

    def __sub__(self, other: "ChartPolynomial") -> "ChartPolynomial":
        return ChartPolynomial(self.chart, self.num_vars, _add_terms(self.terms, other.terms, -1))

    def __mul__(self, other: Union[Scalar, "ChartPolynomial"]) -> "ChartPolynomial":
        if isinstance(other, ChartPolynomial):
            out: Dict[MultiIndex, ComplexRational] = {}
            for ea, ca in self.terms.items():
                for eb, cb in other.terms.items():
                    e = tuple(x + y for x, y in zip(ea, eb))
                    out[e] = out.get(e, ZERO) + ca * cb
            return ChartPolynomial(self.chart, self.num_vars, out)
        c = ComplexRational.coerce(other)
        return ChartPolynomial(self.chart, self.num_vars, {k: v * c for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ChartPolynomial):
            return NotImplemented
        return (self.chart, self.num_vars, self.terms) == (other.chart, other.num_vars, other.terms)

    def __hash__(self) -> int:
        return hash((self.chart, self.num_vars, tuple(sorted(self.terms.items()))))

    def __repr__(self) -> str:
        return f"ChartPolynomial(chart={self.chart}, terms={dict(sorted(self.terms.items()))})"

    def derivative(self, l: int) -> "ChartPolynomial":
        out: Dict[MultiIndex, ComplexRational] = {}
        for exps, c in self.terms.items():
            if exps[l] == 0:
                continue
            e = list(exps)
            e[l] -= 1
            out[tuple(e)] = c * exps[l]
        return ChartPolynomial(self.chart, self.num_vars, out)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        if self._tables is None:
            self._tables = _numeric_tables(self.terms, self.num_vars)
        return _evaluate_tables(*self._tables, points)

    def evaluate_exact(self, point: Sequence[Scalar]) -> ComplexRational:
        if len(point) != self.num_vars:
            raise ArgumentError(f"point has length {len(point)}, expected {self.num_vars}")
        return _evaluate_exact(self.terms, point)

    def term_magnitude(self, points: np.ndarray) -> np.ndarray:
        """Σ|c_t||w^e_t|, the natural scale for residuals of this polynomial."""
        if self._tables is None:
            self._tables = _numeric_tables(self.terms, self.num_vars)
        exps, coeffs = self._tables
        points = np.abs(np.asarray(points, dtype=complex))
        if coeffs.size == 0:
            return np.zeros(points.shape[:-1])
        return np.prod(points[..., None, :] ** exps, axis=-1) @ np.abs(coeffs)

    def homogenize(self, degree: Optional[int] = None) -> HomogeneousPolynomial:
        degree = self.degree if degree is None else degree
        out: Dict[MultiIndex, ComplexRational] = {}
        for exps, c in self.terms.items():
            rest = degree - sum(exps)
            if rest < 0:
                raise ArgumentError(f"term {exps} exceeds homogenization degree {degree}")
            full = list(exps)
            full.insert(self.chart, rest)
            out[tuple(full)] = c
        return HomogeneousPolynomial(self.num_vars + 1, degree, out)


def dehomogenize(P: HomogeneousPolynomial, alpha: int) -> ChartPolynomial:
    """F^(α)(w) = P(z)/z_α^d with w the remaining coordinates divided by z_α."""
    if not 0 <= alpha < P.num_vars:
        raise ArgumentError(f"chart {alpha} out of range 0..{P.num_vars - 1}")
    out = {e[:alpha] + e[alpha + 1:]: c for e, c in P.terms.items()}
    return ChartPolynomial(alpha, P.num_vars - 1, out)


def homogenize(F: ChartPolynomial, degree: Optional[int] = None) -> HomogeneousPolynomial:
    return F.homogenize(degree)


def to_chart(z: np.ndarray, alpha: int) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    za = z[..., alpha]
    if np.any(np.abs(za) == 0):
        raise ChartError(f"point has z_{alpha} = 0, outside chart {alpha}")
    w = z / za[..., None]
    return np.delete(w, alpha, axis=-1)


def lift(w: np.ndarray, alpha: int) -> np.ndarray:
    """Homogeneous representative with 1 in slot α."""
    w = np.asarray(w, dtype=complex)
    return np.insert(w, alpha, 1.0, axis=-1)


def sphere_lift(w: np.ndarray, alpha: int) -> np.ndarray:
    z = lift(w, alpha)
    return z / np.linalg.norm(z, axis=-1, keepdims=True)


def normalize_point(z: Sequence[complex]) -> Tuple[np.ndarray, int]:
    """Unit-sphere representative whose largest coordinate is real positive."""
    z = np.asarray(z, dtype=complex)
    norm = np.linalg.norm(z)
    if norm == 0:
        raise ArgumentError("zero vector is not a projective point")
    beta = int(np.argmax(np.abs(z)))
    phase = z[beta] / abs(z[beta])
    return z / (norm * phase), beta


# ── Transition data ─────────────────────────────────────────────────────────
@dataclass(frozen=True)
class TransitionFactor:
    """l_αβ = (z_β/z_α)^d with A_αβ = diag((z_β/z_α)^{d_k})."""

    alpha: int
    beta: int
    degrees: Tuple[int, ...]

    @property
    def exponent(self) -> int:
        return sum(self.degrees)

    def _ratio(self, z: Sequence):
        zb, za = z[self.beta], z[self.alpha]
        if _is_exact(zb) and _is_exact(za):
            return ComplexRational.coerce(zb) / ComplexRational.coerce(za)
        return complex(zb) / complex(za)

    def evaluate(self, z: Sequence):
        return self._ratio(z) ** self.exponent

    def matrix(self, z: Sequence) -> List[list]:
        ratio = self._ratio(z)
        size = len(self.degrees)
        zero = ZERO if isinstance(ratio, ComplexRational) else 0j
        return [[ratio ** dk if i == j else zero for j, dk in enumerate(self.degrees)] for i in range(size)]

    def describe(self) -> str:
        return f"(z_{self.beta}/z_{self.alpha})^{self.exponent}"


# ── Variety ─────────────────────────────────────────────────────────────────
class Variety:
    """Complete intersection V = {P_1 = ... = P_m = 0} in CP^n with chart cutoffs g_α."""

    def __init__(
        self,
        polys: Sequence[HomogeneousPolynomial],
        chart_cutoffs: Optional[Sequence[ChartPolynomial]] = None,
        name: str = "",
    ):
        if not polys:
            raise ArgumentError("a variety needs at least one polynomial")
        num_vars = polys[0].num_vars
        if any(P.num_vars != num_vars for P in polys):
            raise ArgumentError("all polynomials must live in the same CP^n")
        self.n = num_vars - 1
        self.m = len(polys)
        if self.m > self.n:
            raise ArgumentError(f"codimension {self.m} exceeds ambient dimension {self.n}")
        self.polys = tuple(polys)
        self.degrees = tuple(P.degree for P in polys)
        self.total_degree = sum(self.degrees)
        self.name = name
        if chart_cutoffs is None:
            chart_cutoffs = [ChartPolynomial.constant(a, self.n) for a in range(self.n + 1)]
        if len(chart_cutoffs) != self.n + 1:
            raise ArgumentError("one cutoff per chart is required")
        self.chart_cutoffs = tuple(chart_cutoffs)
        self._charts: Dict[int, List[ChartPolynomial]] = {}
        self._jacobians: Dict[int, List[List[ChartPolynomial]]] = {}

    @property
    def dimension(self) -> int:
        return self.n - self.m

    def __repr__(self) -> str:
        return f"Variety({self.name or 'unnamed'}, n={self.n}, m={self.m}, degrees={self.degrees})"

    def chart_polys(self, alpha: int) -> List[ChartPolynomial]:
        if alpha not in self._charts:
            self._charts[alpha] = [dehomogenize(P, alpha) for P in self.polys]
        return self._charts[alpha]

    def chart_jacobian_polys(self, alpha: int) -> List[List[ChartPolynomial]]:
        if alpha not in self._jacobians:
            self._jacobians[alpha] = [[F.derivative(l) for l in range(self.n)] for F in self.chart_polys(alpha)]
        return self._jacobians[alpha]

    def evaluate_chart(self, alpha: int, W: np.ndarray) -> np.ndarray:
        return np.stack([F.evaluate(W) for F in self.chart_polys(alpha)], axis=-1)

    def jacobian_chart(self, alpha: int, W: np.ndarray) -> np.ndarray:
        rows = [np.stack([d.evaluate(W) for d in row], axis=-1) for row in self.chart_jacobian_polys(alpha)]
        return np.stack(rows, axis=-2)

    def residual_scale(self, alpha: int, W: np.ndarray) -> np.ndarray:
        return np.stack([1.0 + F.term_magnitude(W) for F in self.chart_polys(alpha)], axis=-1)

    def cutoff(self, alpha: int, W: np.ndarray) -> np.ndarray:
        return self.chart_cutoffs[alpha].evaluate(W)


def transition_factor(alpha: int, beta: int, variety: Variety) -> TransitionFactor:
    if alpha == beta:
        raise ArgumentError("transition factor needs two distinct charts")
    for c in (alpha, beta):
        if not 0 <= c <= variety.n:
            raise ArgumentError(f"chart {c} out of range 0..{variety.n}")
    return TransitionFactor(alpha, beta, variety.degrees)


def variety_from_spec(spec: VarietySpec) -> Variety:
    N = spec.n + 1
    polys = [polynomial_from_spec(p, N) for p in spec.polys]
    cutoffs = None
    if spec.cutoffs is not None:
        cutoffs = []
        for a, g in enumerate(spec.cutoffs):
            terms: Dict[MultiIndex, ComplexRational] = {}
            for t in g.terms:
                re, im = t.coefficient()
                key = tuple(t.exponents)
                terms[key] = terms.get(key, ZERO) + ComplexRational(re, im)
            cutoffs.append(ChartPolynomial(a, spec.n, terms))
    return Variety(polys, cutoffs, spec.name)


def partition_of_unity(z: np.ndarray) -> np.ndarray:
    """ϑ_α(z) = |z_α|²/Σ_β|z_β|²."""
    z = np.asarray(z, dtype=complex)
    sq = np.abs(z) ** 2
    total = sq.sum(axis=-1, keepdims=True)
    if np.any(total == 0):
        raise ArgumentError("zero vector has no partition weights")
    return sq / total


# ── Base grids ──────────────────────────────────────────────────────────────
@dataclass
class BaseGrid:
    """Quadrature nodes over C^k with Lebesgue area weights."""

    points: np.ndarray
    weights: np.ndarray

    @property
    def size(self) -> int:
        return int(self.weights.size)

    @property
    def dim(self) -> int:
        return int(self.points.shape[1])


def _radial_rule(radial_nodes: int, angular_nodes: int, radius: Optional[float], scale: float):
    x, wx = np.polynomial.legendre.leggauss(radial_nodes)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * wx
    if radius is None:
        r = scale * s / (1.0 - s)
        dr = scale / (1.0 - s) ** 2
    else:
        r = radius * s
        dr = np.full_like(s, radius)
    theta = 2.0 * np.pi * (np.arange(angular_nodes) + 0.5) / angular_nodes
    rr, tt = np.meshgrid(r, theta, indexing="ij")
    weights = np.outer(ws * dr * r, np.full(angular_nodes, 2.0 * np.pi / angular_nodes))
    return (rr * np.exp(1j * tt)).ravel(), weights.ravel()


def _tensor(points1: np.ndarray, weights1: np.ndarray, k: int) -> BaseGrid:
    if k == 0:
        return BaseGrid(np.zeros((1, 0), dtype=complex), np.ones(1))
    grids = [points1] * k
    mesh = np.meshgrid(*grids, indexing="ij")
    wmesh = np.meshgrid(*([weights1] * k), indexing="ij")
    points = np.stack([g.ravel() for g in mesh], axis=-1)
    weights = np.prod(np.stack([g.ravel() for g in wmesh], axis=-1), axis=-1)
    return BaseGrid(points, weights)


def plane_grid(k: int, radial_nodes: int = 40, angular_nodes: int = 48, scale: float = 1.0) -> BaseGrid:
    """Grid over all of C^k: polar in each factor with r = R0·s/(1−s)."""
    p, w = _radial_rule(radial_nodes, angular_nodes, None, scale)
    return _tensor(p, w, k)


def disk_grid(k: int, radius: float, radial_nodes: int = 24, angular_nodes: int = 32) -> BaseGrid:
    p, w = _radial_rule(radial_nodes, angular_nodes, radius, 1.0)
    return _tensor(p, w, k)


# ── Root solving ────────────────────────────────────────────────────────────
@dataclass
class VarietySample:
    chart: int
    base_index: int
    base_point: np.ndarray
    weight: float
    fiber_axes: Tuple[int, ...]
    fiber_roots: np.ndarray
    jacobian_dets: np.ndarray
    expected_roots: int
    excluded: int = 0
    degenerate: bool = False

    @property
    def points(self) -> np.ndarray:
        """Full chart coordinates (R, n) of the accepted roots."""
        n = len(self.fiber_axes) + len(self.base_point)
        out = np.zeros((len(self.fiber_roots), n), dtype=complex)
        base_axes = [l for l in range(n) if l not in self.fiber_axes]
        out[:, list(self.fiber_axes)] = self.fiber_roots
        out[:, base_axes] = self.base_point
        return out

    @property
    def excluded_weight(self) -> float:
        if self.expected_roots == 0:
            return 0.0
        return self.weight * self.excluded / self.expected_roots


def excluded_measure(samples: Iterable[VarietySample]) -> float:
    return float(sum(s.excluded_weight for s in samples))


def _split_axes(n: int, fiber_axes: Sequence[int]) -> Tuple[List[int], List[int]]:
    fiber = sorted(fiber_axes)
    base = [l for l in range(n) if l not in fiber]
    return fiber, base


def _assemble(n: int, fiber: List[int], base: List[int], X: np.ndarray, U: np.ndarray) -> np.ndarray:
    W = np.zeros(X.shape[:-1] + (n,), dtype=complex)
    W[..., fiber] = X
    W[..., base] = U
    return W


def _univariate_coefficients(F: ChartPolynomial, axis: int, U: np.ndarray, base: List[int]) -> np.ndarray:
    """Coefficients (highest first) of F as a polynomial in w_axis at each base node."""
    groups: Dict[int, Dict[MultiIndex, ComplexRational]] = {}
    for exps, c in F.terms.items():
        rest = tuple(exps[l] for l in base)
        bucket = groups.setdefault(exps[axis], {})
        bucket[rest] = bucket.get(rest, ZERO) + c
    degree = max(groups) if groups else 0
    coeffs = np.zeros((U.shape[0], degree + 1), dtype=complex)
    for e, terms in groups.items():
        poly = ChartPolynomial(F.chart, len(base), terms)
        coeffs[:, degree - e] = poly.evaluate(U)
    return coeffs


def batched_roots(coeffs: np.ndarray) -> List[np.ndarray]:
    """Roots of many univariate polynomials (highest coefficient first).

    Companion-matrix eigenvalues, batched where the leading coefficient is
    healthy; rows with a vanishing leading coefficient fall back to numpy.roots.
    """
    rows, width = coeffs.shape
    degree = width - 1
    out: List[Optional[np.ndarray]] = [None] * rows
    if degree == 0:
        return [np.zeros(0, dtype=complex) for _ in range(rows)]
    scale = np.max(np.abs(coeffs), axis=1)
    healthy = np.abs(coeffs[:, 0]) > 1e-14 * np.maximum(scale, 1e-300)
    idx = np.nonzero(healthy)[0]
    if idx.size:
        monic = coeffs[idx, 1:] / coeffs[idx, :1]
        comp = np.zeros((idx.size, degree, degree), dtype=complex)
        comp[:, 0, :] = -monic
        if degree > 1:
            comp[:, np.arange(1, degree), np.arange(degree - 1)] = 1.0
        eig = np.linalg.eigvals(comp)
        for j, i in enumerate(idx):
            out[i] = eig[j]
    for i in np.nonzero(~healthy)[0]:
        out[i] = np.roots(coeffs[i]) if scale[i] > 0 else np.zeros(0, dtype=complex)
    return out  # type: ignore[return-value]


def newton_polish(
    variety: Variety,
    alpha: int,
    W: np.ndarray,
    fiber: Sequence[int],
    target: Optional[np.ndarray] = None,
    iterations: int = 8,
    tol: float = 1e-15,
) -> np.ndarray:
    """Holomorphic Newton on F(w) = target, moving only the fiber coordinates."""
    W = np.array(W, dtype=complex)
    fiber = list(fiber)
    for _ in range(iterations):
        F = variety.evaluate_chart(alpha, W)
        if target is not None:
            F = F - target
        scale = variety.residual_scale(alpha, W)
        if np.all(np.abs(F) <= tol * scale):
            break
        J = variety.jacobian_chart(alpha, W)[..., fiber]
        det = np.linalg.det(J)
        ok = np.abs(det) > 1e-300
        delta = np.zeros_like(F)
        if np.any(ok):
            delta[ok] = np.linalg.solve(J[ok], F[ok][..., None])[..., 0]
        W[..., fiber] -= delta
    return W


def _fiber_degrees(variety: Variety, alpha: int, fiber: List[int]) -> List[int]:
    return [max((sum(e[l] for l in fiber) for e in F.terms), default=0) for F in variety.chart_polys(alpha)]


def _homotopy_roots(
    variety: Variety,
    alpha: int,
    U: np.ndarray,
    fiber: List[int],
    base: List[int],
    target: Optional[np.ndarray],
    seed: int,
    steps: int = 120,
) -> Tuple[np.ndarray, np.ndarray]:
    """Total-degree homotopy from x_k^{D_k} = 1, tracked for all base nodes at once.

    Returns (X, owner): candidate fiber roots (B, m) and the base-node index of each.
    """
    n, m = variety.n, variety.m
    degrees = _fiber_degrees(variety, alpha, fiber)
    rng = np.random.default_rng(seed)
    gamma = np.exp(2j * np.pi * rng.random())
    start_sets = [np.exp(2j * np.pi * np.arange(D) / D) for D in degrees]
    starts = np.array(list(itertools.product(*start_sets)), dtype=complex).reshape(-1, m)
    N, S = U.shape[0], starts.shape[0]
    X = np.tile(starts, (N, 1))
    owner = np.repeat(np.arange(N), S)
    Uall = U[owner]
    tgt = None if target is None else target[owner]
    D = np.array(degrees)

    def H(X, s):
        W = _assemble(n, fiber, base, X, Uall)
        F = variety.evaluate_chart(alpha, W)
        if tgt is not None:
            F = F - tgt
        G = X ** D - 1.0
        return (1 - s) * gamma * G + s * F, F - gamma * G, W

    def Hx(X, W, s):
        J = variety.jacobian_chart(alpha, W)[..., fiber]
        G = np.zeros_like(J)
        idx = np.arange(m)
        G[:, idx, idx] = D * X ** (D - 1)
        return (1 - s) * gamma * G + s * J

    def velocity(X, s):
        _, Hs, W = H(X, s)
        A = Hx(X, W, s)
        ok = np.abs(np.linalg.det(A)) > 1e-300
        v = np.zeros_like(X)
        if np.any(ok):
            v[ok] = -np.linalg.solve(A[ok], Hs[ok][..., None])[..., 0]
        return v

    grid = 1.0 - (1.0 - np.linspace(0.0, 1.0, steps + 1)) ** 2
    for s0, s1 in zip(grid[:-1], grid[1:]):
        h = s1 - s0
        k1 = velocity(X, s0)
        k2 = velocity(X + 0.5 * h * k1, s0 + 0.5 * h)
        k3 = velocity(X + 0.5 * h * k2, s0 + 0.5 * h)
        k4 = velocity(X + h * k3, s1)
        X = X + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        for _ in range(2):
            val, _, W = H(X, s1)
            A = Hx(X, W, s1)
            ok = np.abs(np.linalg.det(A)) > 1e-300
            if np.any(ok):
                X[ok] -= np.linalg.solve(A[ok], val[ok][..., None])[..., 0]
    return X, owner


def solve_fibers(
    variety: Variety,
    alpha: int,
    U: np.ndarray,
    fiber_axes: Sequence[int],
    target: Optional[np.ndarray] = None,
    seed: int = 0,
) -> Tuple[List[np.ndarray], int]:
    """All roots of F(w_S, u) = target over each base node u.

    Returns the per-node list of full chart points (R_i, n) and the generic
    root count of the fiber.
    """
    n, m = variety.n, variety.m
    fiber, base = _split_axes(n, fiber_axes)
    U = np.asarray(U, dtype=complex)
    if U.ndim != 2 or U.shape[1] != len(base):
        raise ArgumentError(f"base nodes must have shape (N, {len(base)}), got {U.shape}")
    if m == 1:
        F = variety.chart_polys(alpha)[0]
        coeffs = _univariate_coefficients(F, fiber[0], U, base)
        if target is not None:
            coeffs[:, -1] -= np.asarray(target).reshape(-1)
        expected = coeffs.shape[1] - 1
        roots = batched_roots(coeffs)
        points = []
        for i, r in enumerate(roots):
            W = np.zeros((len(r), n), dtype=complex)
            W[:, fiber[0]] = r
            W[:, base] = U[i]
            points.append(W)
    else:
        expected = int(np.prod(_fiber_degrees(variety, alpha, fiber)))
        tgt = None if target is None else np.asarray(target).reshape(-1, m)
        X, owner = _homotopy_roots(variety, alpha, U, fiber, base, tgt, seed)
        W_all = _assemble(n, fiber, base, X, U[owner])
        points = []
        for i in range(U.shape[0]):
            W = W_all[owner == i]
            W = W[np.all(np.isfinite(W), axis=1) & (np.abs(W).max(axis=1) < 1e8)]
            points.append(W)
    flat = np.concatenate(points) if points else np.zeros((0, n), dtype=complex)
    if flat.size:
        owner = np.concatenate([np.full(len(p), i) for i, p in enumerate(points)])
        tgt = None if target is None else np.asarray(target).reshape(-1, m)[owner]
        flat = newton_polish(variety, alpha, flat, fiber, tgt)
        counts = np.cumsum([0] + [len(p) for p in points])
        points = [flat[counts[i]:counts[i + 1]] for i in range(len(points))]
    if m > 1:
        points = [_dedupe(p) for p in points]
    return points, expected


def _dedupe(W: np.ndarray, tol: float = 1e-8) -> np.ndarray:
    kept: List[np.ndarray] = []
    for row in W:
        if all(np.max(np.abs(row - k)) > tol * (1 + np.max(np.abs(k))) for k in kept):
            kept.append(row)
    return np.array(kept, dtype=complex).reshape(-1, W.shape[-1])


def sample_variety(
    variety: Variety,
    chart: int,
    base_grid: BaseGrid,
    fiber_axes: Optional[Sequence[int]] = None,
    root_tol: float = 1e-12,
    degeneracy_tol: float = 1e-8,
    seed: int = 0,
) -> List[VarietySample]:
    """Fibered samples of V in chart α over the base grid.

    The fiber coordinates default to w_1..w_m; roots with a near-singular fiber
    Jacobian or an unconverged residual are excluded and counted.
    """
    if not 0 <= chart <= variety.n:
        raise ArgumentError(f"chart {chart} out of range 0..{variety.n}")
    n, m = variety.n, variety.m
    fiber_axes = tuple(range(m)) if fiber_axes is None else tuple(sorted(fiber_axes))
    if len(fiber_axes) != m:
        raise ArgumentError(f"need exactly m={m} fiber axes, got {fiber_axes}")
    fiber, base = _split_axes(n, fiber_axes)
    if base_grid.dim != len(base):
        raise ArgumentError(f"base grid has dimension {base_grid.dim}, expected {len(base)}")
    per_node, expected = solve_fibers(variety, chart, base_grid.points, fiber_axes, seed=seed)
    samples: List[VarietySample] = []
    degenerate_nodes = 0
    for i, W in enumerate(per_node):
        if W.shape[0]:
            F = variety.evaluate_chart(chart, W)
            scale = variety.residual_scale(chart, W)
            J = variety.jacobian_chart(chart, W)
            det = np.linalg.det(J[..., fiber])
            jscale = np.prod(np.linalg.norm(J, axis=-1), axis=-1)
            converged = np.all(np.abs(F) <= root_tol * scale, axis=-1)
            simple = np.abs(det) >= degeneracy_tol * np.maximum(jscale, 1.0)
            keep = converged & simple
        else:
            keep = np.zeros(0, dtype=bool)
            det = np.zeros(0, dtype=complex)
        kept = W[keep]
        excluded = expected - int(keep.sum())
        degenerate = excluded > 0 and not keep.any()
        degenerate_nodes += int(degenerate)
        samples.append(
            VarietySample(
                chart=chart,
                base_index=i,
                base_point=base_grid.points[i],
                weight=float(base_grid.weights[i]),
                fiber_axes=fiber_axes,
                fiber_roots=kept[:, fiber],
                jacobian_dets=det[keep],
                expected_roots=expected,
                excluded=max(excluded, 0),
                degenerate=degenerate,
            )
        )
    if degenerate_nodes:
        logger.warning("chart %d axes %s: %d degenerate base nodes", chart, fiber_axes, degenerate_nodes)
    logger.debug("chart %d axes %s: %d nodes sampled, %d roots expected per node",
                 chart, fiber_axes, len(samples), expected)
    return samples


def fiber_axis_choices(variety: Variety) -> List[Tuple[int, ...]]:
    return list(itertools.combinations(range(variety.n), variety.m))


# ── Witnesses ───────────────────────────────────────────────────────────────
def reducedness_witness(variety: Variety, samples: Sequence[VarietySample], rank_tol: float = 1e-8) -> WitnessReport:
    """Jacobian rank m at every accepted sample; fails when most roots are degenerate."""
    accepted = sum(len(s.fiber_roots) for s in samples)
    expected = sum(s.expected_roots for s in samples)
    min_ratio = np.inf
    for s in samples:
        if not len(s.fiber_roots):
            continue
        J = variety.jacobian_chart(s.chart, s.points)
        sv = np.linalg.svd(J, compute_uv=False)
        ratio = sv[..., -1] / np.maximum(sv[..., 0], 1e-300)
        min_ratio = min(min_ratio, float(ratio.min()))
    # a chart that misses V has nothing to witness
    fraction = accepted / expected if expected else 1.0
    ok = expected == 0 or (accepted > 0 and fraction >= 0.5 and min_ratio > rank_tol)
    return WitnessReport(
        name="reducedness",
        verdict=Verdict.passed if ok else Verdict.failed,
        residual=float(1.0 - fraction),
        details={
            "accepted_roots": accepted,
            "expected_roots": expected,
            "min_singular_ratio": None if not np.isfinite(min_ratio) else min_ratio,
            "rank_required": variety.m,
        },
    )


def cutoff_witness(variety: Variety, samples: Sequence[VarietySample], eta: float) -> WitnessReport:
    """Share of sampled V-measure where |g_α| ≤ η; g_α must not vanish on V."""
    total = 0.0
    cut = 0.0
    for s in samples:
        if not len(s.fiber_roots):
            continue
        g = np.abs(variety.cutoff(s.chart, s.points))
        total += s.weight * len(g)
        cut += s.weight * float(np.sum(g <= eta))
    fraction = cut / total if total else 0.0
    return WitnessReport(
        name=f"cutoff_chart_{samples[0].chart if samples else -1}",
        verdict=Verdict.passed if fraction < 0.5 else Verdict.failed,
        residual=fraction,
        details={"eta": eta},
    )
