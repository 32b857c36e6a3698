"""Exterior forms over dζ, dζ̄, dz̄ (and simplex parameters dt), kernel brackets,
Dirichlet simplex moments and the projector constants.

The bracket det[c_0, ..., c_n] of n+1 columns, some of them scalar vectors
and some columns of 1-forms, is expanded along the differential columns
(generalized Laplace expansion); scalar minors are evaluated in batch.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from math import factorial
from typing import Dict, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
import sympy

from .models import ArgumentError, ChartError, ComplexValue, ConstantFactor, ConstantProvenance, SingularKernelError

logger = logging.getLogger(__name__)

FAMILIES = ("dzeta", "dzetabar", "dzbar", "dt")
_FAMILY_INDEX = {name: i for i, name in enumerate(FAMILIES)}

FormKey = Tuple[Tuple[int, ...], Tuple[int, ...], Tuple[int, ...], Tuple[int, ...]]
EMPTY_KEY: FormKey = ((), (), (), ())


def _permutation_sign(seq: Sequence) -> int:
    sign = 1
    seq = list(seq)
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


def _key_to_sequence(key: FormKey) -> List[Tuple[int, int]]:
    return [(f, idx) for f, indices in enumerate(key) for idx in indices]


def _canonical(sequence: Sequence[Tuple[int, int]]) -> Tuple[int, Optional[FormKey]]:
    """Sort a product of basis 1-forms; returns (sign, key) or (0, None) on repeats."""
    if len(set(sequence)) != len(sequence):
        return 0, None
    sign = _permutation_sign(sequence)
    buckets: List[List[int]] = [[] for _ in FAMILIES]
    for f, idx in sorted(sequence):
        buckets[f].append(idx)
    return sign, tuple(tuple(b) for b in buckets)  # type: ignore[return-value]


def key_degree(key: FormKey) -> int:
    return sum(len(k) for k in key)


def format_key(key: FormKey) -> str:
    parts = []
    for name, indices in zip(FAMILIES, key):
        parts.extend(f"{name}{i}" for i in indices)
    return "^".join(parts) if parts else "1"


class ExteriorForm:
    """Finite sum of basis monomials with complex coefficients."""

    def __init__(self, num_vars: int, coefficients: Optional[Mapping[FormKey, complex]] = None):
        self.num_vars = num_vars
        self.coefficients: Dict[FormKey, complex] = {}
        for key, c in (coefficients or {}).items():
            if c != 0:
                self.coefficients[key] = self.coefficients.get(key, 0) + complex(c)

    @classmethod
    def basis(cls, family: str, index: int, num_vars: int) -> "ExteriorForm":
        if family not in _FAMILY_INDEX:
            raise ArgumentError(f"unknown differential family '{family}'")
        key = [(), (), (), ()]
        key[_FAMILY_INDEX[family]] = (index,)
        return cls(num_vars, {tuple(key): 1.0})  # type: ignore[dict-item]

    @classmethod
    def scalar(cls, value: complex, num_vars: int) -> "ExteriorForm":
        return cls(num_vars, {EMPTY_KEY: value})

    def __add__(self, other: "ExteriorForm") -> "ExteriorForm":
        out = dict(self.coefficients)
        for k, v in other.coefficients.items():
            out[k] = out.get(k, 0) + v
        return ExteriorForm(self.num_vars, out)

    def __sub__(self, other: "ExteriorForm") -> "ExteriorForm":
        return self + other * -1.0

    def __mul__(self, c: complex) -> "ExteriorForm":
        return ExteriorForm(self.num_vars, {k: v * c for k, v in self.coefficients.items()})

    __rmul__ = __mul__

    def __neg__(self) -> "ExteriorForm":
        return self * -1.0

    def __repr__(self) -> str:
        body = " + ".join(f"({v:.4g}){format_key(k)}" for k, v in sorted(self.coefficients.items()))
        return f"ExteriorForm({body or '0'})"

    def is_zero(self, tol: float = 0.0) -> bool:
        return all(abs(v) <= tol for v in self.coefficients.values())

    def max_abs(self) -> float:
        return max((abs(v) for v in self.coefficients.values()), default=0.0)

    def is_close(self, other: "ExteriorForm", tol: float = 1e-12) -> bool:
        return (self - other).max_abs() <= tol * max(1.0, self.max_abs(), other.max_abs())

    def coefficient(self, key: FormKey) -> complex:
        return self.coefficients.get(key, 0j)

    def wedge(self, other: "ExteriorForm") -> "ExteriorForm":
        if other.num_vars != self.num_vars:
            raise ArgumentError("forms live on different spaces")
        out: Dict[FormKey, complex] = {}
        for ka, va in self.coefficients.items():
            sa = _key_to_sequence(ka)
            for kb, vb in other.coefficients.items():
                sign, key = _canonical(sa + _key_to_sequence(kb))
                if sign == 0:
                    continue
                out[key] = out.get(key, 0) + sign * va * vb
        return ExteriorForm(self.num_vars, out)

    def component(self, family: str, degree: int) -> "ExteriorForm":
        f = _FAMILY_INDEX[family]
        return ExteriorForm(self.num_vars, {k: v for k, v in self.coefficients.items() if len(k[f]) == degree})

    def graded_pieces(self, family: str) -> Dict[int, "ExteriorForm"]:
        f = _FAMILY_INDEX[family]
        degrees = sorted({len(k[f]) for k in self.coefficients})
        return {r: self.component(family, r) for r in degrees}

    def pair_holomorphic(self, vectors: np.ndarray) -> complex:
        """Value of a pure dζ-form on complex tangent vectors (columns of ``vectors``)."""
        vectors = np.asarray(vectors, dtype=complex)
        total = 0j
        for key, c in self.coefficients.items():
            if any(key[1:]):
                raise ArgumentError("pair_holomorphic expects a pure dζ form")
            rows = list(key[0])
            if len(rows) != vectors.shape[1]:
                raise ArgumentError("number of vectors must match the form degree")
            total += c * np.linalg.det(vectors[rows, :]) if rows else c
        return complex(total)


# ── Bracket expansion ───────────────────────────────────────────────────────
ColumnValue = Union[np.ndarray, Tuple[str, Optional[np.ndarray]]]


def _differential_patterns(rows: Tuple[int, ...], families: Sequence[str]) -> Dict[FormKey, int]:
    """det of the block whose column c is (d^{family_c}_r)_{r in rows}, as integer-weighted forms."""
    out: Dict[FormKey, int] = {}
    fam_idx = [_FAMILY_INDEX[f] for f in families]
    for perm in itertools.permutations(range(len(rows))):
        psign = _permutation_sign(perm)
        sequence = [(fam_idx[c], rows[perm[c]]) for c in range(len(rows))]
        sign, key = _canonical(sequence)
        if sign == 0:
            continue
        out[key] = out.get(key, 0) + psign * sign
    return {k: v for k, v in out.items() if v != 0}


def bracket_coefficients(columns: Sequence[ColumnValue], num_points: Optional[int] = None) -> Dict[FormKey, np.ndarray]:
    """Expand det[columns] into form coefficients, vectorized over points.

    A scalar column is an array (N, n+1). A differential column is
    ``(family, scale)`` where ``scale`` is None or an (N,) multiplier.
    """
    size = len(columns)
    diff_pos = [i for i, c in enumerate(columns) if isinstance(c, tuple)]
    scal_pos = [i for i, c in enumerate(columns) if not isinstance(c, tuple)]
    N = num_points
    for i in scal_pos:
        arr = np.asarray(columns[i])
        if arr.shape[-1] != size:
            raise ArgumentError(f"column {i} has {arr.shape[-1]} entries, bracket needs {size}")
        N = arr.shape[0] if arr.ndim == 2 else 1
    N = 1 if N is None else N
    scalars = np.zeros((N, size, len(scal_pos)), dtype=complex)
    for j, i in enumerate(scal_pos):
        scalars[:, :, j] = np.asarray(columns[i], dtype=complex).reshape(N, size)
    factor = np.ones(N, dtype=complex)
    families = []
    for i in diff_pos:
        fam, scale = columns[i]  # type: ignore[misc]
        families.append(fam)
        if scale is not None:
            factor = factor * np.asarray(scale, dtype=complex).reshape(N)
    p = len(diff_pos)
    csum = sum(diff_pos)
    out: Dict[FormKey, np.ndarray] = {}
    for R in itertools.combinations(range(size), p):
        eps = -1 if (sum(R) + csum) % 2 else 1
        patterns = _differential_patterns(R, families)
        if not patterns:
            continue
        rest = [r for r in range(size) if r not in R]
        if scal_pos:
            minor = np.linalg.det(scalars[:, rest, :])
        else:
            minor = np.ones(N, dtype=complex)
        base = eps * minor * factor
        for key, mult in patterns.items():
            out[key] = out.get(key, 0) + mult * base
    return out


def eval_B(zeta: np.ndarray, z: np.ndarray) -> np.ndarray:
    """B(ζ, z) = Σ ζ̄_j (ζ_j − z_j)."""
    zeta = np.asarray(zeta, dtype=complex)
    z = np.asarray(z, dtype=complex)
    return np.sum(np.conj(zeta) * (zeta - z), axis=-1)


def eval_Bstar(zeta: np.ndarray, z: np.ndarray) -> np.ndarray:
    """B*(ζ, z) = Σ z̄_j (ζ_j − z_j)."""
    zeta = np.asarray(zeta, dtype=complex)
    z = np.asarray(z, dtype=complex)
    return np.sum(np.conj(z) * (zeta - z), axis=-1)


# ── Kernel column specs ─────────────────────────────────────────────────────
class ColumnKind(str, Enum):
    zbar = "zbar"
    zetabar = "zetabar"
    hefer = "hefer"
    dzbar = "dzbar"
    dzetabar = "dzetabar"


class Denominator(str, Enum):
    none = "none"
    B = "B"
    Bstar = "Bstar"
    P = "P"


@dataclass(frozen=True)
class KernelColumn:
    kind: ColumnKind
    hefer_index: Optional[int] = None
    denominator: Denominator = Denominator.none


@dataclass(frozen=True)
class KernelColumnSpec:
    num_vars: int
    columns: Tuple[KernelColumn, ...]

    def __post_init__(self):
        if len(self.columns) != self.num_vars:
            raise ArgumentError(f"bracket needs {self.num_vars} columns, got {len(self.columns)}")

    def count(self, kind: ColumnKind) -> int:
        return sum(1 for c in self.columns if c.kind == kind)

    @classmethod
    def projector(cls, n: int, m: int, q: int) -> "KernelColumnSpec":
        """det[z̄, Q_1..Q_m, dz̄^q]."""
        if 1 + m + q != n + 1:
            raise ArgumentError(f"projector bracket needs q = n − m = {n - m}, got {q}")
        cols = [KernelColumn(ColumnKind.zbar)]
        cols += [KernelColumn(ColumnKind.hefer, k) for k in range(m)]
        cols += [KernelColumn(ColumnKind.dzbar)] * q
        return cls(n + 1, tuple(cols))

    @classmethod
    def solver(cls, n: int, m: int, q: int) -> "KernelColumnSpec":
        """det[z̄/B*, ζ̄/B, Q_k/(P_k(ζ)−P_k(z)), dz̄^{q−1}/B*, dζ̄^{n−m−q}/B]."""
        if not 1 <= q <= n - m:
            raise ArgumentError(f"solver degree q must lie in 1..{n - m}, got {q}")
        cols = [KernelColumn(ColumnKind.zbar, None, Denominator.Bstar),
                KernelColumn(ColumnKind.zetabar, None, Denominator.B)]
        cols += [KernelColumn(ColumnKind.hefer, k, Denominator.P) for k in range(m)]
        cols += [KernelColumn(ColumnKind.dzbar, None, Denominator.Bstar)] * (q - 1)
        cols += [KernelColumn(ColumnKind.dzetabar, None, Denominator.B)] * (n - m - q)
        return cls(n + 1, tuple(cols))

    @classmethod
    def partial(cls, n: int, q: int) -> "KernelColumnSpec":
        """Bracket of a partial tube with no Hefer column: det[z̄/B*, ζ̄/B, dz̄^{q−1}/B*, dζ̄^{n−q}/B]."""
        cols = [KernelColumn(ColumnKind.zbar, None, Denominator.Bstar),
                KernelColumn(ColumnKind.zetabar, None, Denominator.B)]
        cols += [KernelColumn(ColumnKind.dzbar, None, Denominator.Bstar)] * (q - 1)
        cols += [KernelColumn(ColumnKind.dzetabar, None, Denominator.B)] * (n - q)
        return cls(n + 1, tuple(cols))


@dataclass
class KernelPoint:
    """Evaluation data for a bracket: points ζ, z (N, n+1) and Hefer vectors Q_k(ζ, z).

    ``zetabar`` replaces conj(ζ) when the kernel is continued off the sphere
    in the overall phase of ζ.
    """

    zeta: np.ndarray
    z: np.ndarray
    hefer_values: Sequence[np.ndarray] = ()
    poly_differences: Sequence[np.ndarray] = ()
    zetabar: Optional[np.ndarray] = None


def _check_denominator(value: np.ndarray, name: str, scale: float = 1.0) -> None:
    if np.any(np.abs(value) <= 1e-14 * max(scale, 1.0)):
        raise SingularKernelError(name)


def kernel_columns(spec: KernelColumnSpec, point: KernelPoint) -> List[ColumnValue]:
    zeta = np.atleast_2d(np.asarray(point.zeta, dtype=complex))
    z = np.atleast_2d(np.asarray(point.z, dtype=complex))
    zetabar = np.conj(zeta) if point.zetabar is None else np.atleast_2d(np.asarray(point.zetabar, dtype=complex))
    dens: Dict[str, np.ndarray] = {}
    kinds = {c.denominator for c in spec.columns}
    if Denominator.B in kinds:
        dens["B"] = np.sum(zetabar * (zeta - z), axis=-1)
        _check_denominator(dens["B"], "B")
    if Denominator.Bstar in kinds:
        dens["Bstar"] = eval_Bstar(zeta, z)
        _check_denominator(dens["Bstar"], "Bstar")
    out: List[ColumnValue] = []
    for col in spec.columns:
        if col.denominator == Denominator.P:
            den = np.atleast_1d(point.poly_differences[col.hefer_index])
            _check_denominator(den, f"P_{col.hefer_index + 1}")
        elif col.denominator == Denominator.none:
            den = None
        else:
            den = dens[col.denominator.value]
        if col.kind in (ColumnKind.dzbar, ColumnKind.dzetabar):
            family = "dzbar" if col.kind == ColumnKind.dzbar else "dzetabar"
            out.append((family, None if den is None else 1.0 / den))
            continue
        if col.kind == ColumnKind.zbar:
            vec = np.conj(z)
        elif col.kind == ColumnKind.zetabar:
            vec = zetabar
        else:
            vec = np.atleast_2d(point.hefer_values[col.hefer_index])
        out.append(vec if den is None else vec / den[:, None])
    return out


def omega_prime_q(spec: KernelColumnSpec, point: KernelPoint) -> ExteriorForm:
    """The bracket kernel at a single point pair as an ExteriorForm."""
    coeffs = bracket_coefficients(kernel_columns(spec, point), num_points=1)
    return ExteriorForm(spec.num_vars, {k: complex(v[0]) for k, v in coeffs.items()})


def omega(num_vars: int) -> ExteriorForm:
    """ω(ζ) = dζ_0 ∧ ... ∧ dζ_n."""
    return ExteriorForm(num_vars, {(tuple(range(num_vars)), (), (), ()): 1.0})


def omega_prime(eta: Sequence[complex], d_eta: Sequence[ExteriorForm]) -> ExteriorForm:
    """ω′(η) = Σ_k (−1)^k η_k ⋀_{j≠k} dη_j."""
    N = len(eta)
    if len(d_eta) != N:
        raise ArgumentError("η and dη must have the same length")
    total = ExteriorForm(N)
    for k in range(N):
        prod = ExteriorForm.scalar(1.0, N)
        for j in range(N):
            if j != k:
                prod = prod.wedge(d_eta[j])
        total = total + prod * ((-1) ** k * eta[k])
    return total


# ── Simplex moments ─────────────────────────────────────────────────────────
@dataclass(frozen=True)
class SimplexMoment:
    alpha: Tuple[int, ...]
    beta: int
    p: int

    @property
    def value(self) -> Fraction:
        return simplex_moment(self.alpha, self.beta, self.p)


def simplex_moment(alpha: Sequence[int], beta: int, p: int) -> Fraction:
    """∫_Δ μ^α (1 − Σμ)^β dμ over the p-simplex = β!Πα_i!/(β + Σα_i + p)!."""
    alpha = tuple(alpha)
    if beta < 0 or any(a < 0 for a in alpha):
        raise ArgumentError("simplex exponents must be non-negative")
    if len(alpha) != p:
        raise ArgumentError(f"alpha must have p={p} entries")
    num = factorial(beta)
    for a in alpha:
        num *= factorial(a)
    return Fraction(num, factorial(beta + sum(alpha) + p))


# ── Constants with provenance ───────────────────────────────────────────────
@dataclass
class ProjectorConstant:
    n: int
    m: int
    d: int
    r: int
    q: int
    value: sympy.Expr
    c_r: int
    empty: bool
    provenance: ConstantProvenance

    @property
    def numeric(self) -> complex:
        return complex(sympy.N(self.value, 30))


def _provenance(label: str, n: int, m: int, d: int, q: int, r: Optional[int],
                factors: List[Tuple[str, sympy.Expr, str]], value: sympy.Expr) -> ConstantProvenance:
    return ConstantProvenance(
        label=label, n=n, m=m, d=d, q=q, r=r,
        factors=[ConstantFactor(name=name, value=str(sympy.nsimplify(v)), note=note) for name, v, note in factors],
        exact=str(sympy.simplify(value)),
        numeric=ComplexValue.of(complex(sympy.N(value, 30))),
    )


def projector_constant(n: int, m: int, d: int, r: int) -> ProjectorConstant:
    """C(n, m, d, r) composed symbolically; out-of-range r is the empty-sum signal."""
    q = n - m
    if d <= n or not 0 <= r <= d - n - 1:
        zero = sympy.Integer(0)
        prov = _provenance("projector", n, m, d, q, r, [("empty_range", zero, "r outside 0..d−n−1")], zero)
        return ProjectorConstant(n, m, d, r, q, zero, 0, True, prov)
    I, pi = sympy.I, sympy.pi
    c_r = sympy.binomial(q + r, q)
    simplex = simplex_moment((0,) * m, q, m)
    factors = [
        ("global", sympy.factorial(n) / (2 * pi * I) ** (n + 1), "n!/(2πi)^(n+1)"),
        ("sign", sympy.Integer((-1) ** (m - 1) * (-1) ** (q + 1)), "(−1)^(|J|−1)(−1)^(q+1), |J| = m"),
        ("c_r", c_r, "binomial(q+r, q) from (1−x)^(−q−1)"),
        ("simplex", sympy.Rational(simplex.numerator, simplex.denominator), "∫(1−Σμ)^q over the m-simplex"),
        ("expansion", sympy.Rational(1, factorial(q)), "repeated dz̄ columns of the bracket"),
        ("residue", I ** (m + 1), "i^(m+1); the (2π)^m of the tube phases sits in the fibered residue densities"),
    ]
    value = sympy.Integer(1)
    for _, v, _ in factors:
        value = value * v
    prov = _provenance("projector", n, m, d, q, r, factors, value)
    return ProjectorConstant(n, m, d, r, q, value, int(c_r), False, prov)


def solver_constant(n: int, m: int, q: int) -> Tuple[complex, ConstantProvenance]:
    """C(n, q, |J|) for the solution operator with |J| = m."""
    I, pi = sympy.I, sympy.pi
    factors = [
        ("global", sympy.factorial(n) / (2 * pi * I) ** (n + 1), "n!/(2πi)^(n+1)"),
        ("sign", sympy.Integer((-1) ** m * (-1) ** q), "(−1)^|J|(−1)^q"),
        ("simplex", sympy.Rational(1, factorial(m + 1)), "volume of the (m+1)-simplex Δ_J"),
        ("expansion", sympy.Rational(1, factorial(q - 1) * factorial(n - m - q)), "repeated dz̄, dζ̄ columns"),
    ]
    value = sympy.Integer(1)
    for _, v, _ in factors:
        value = value * v
    prov = _provenance("solver", n, m, n - m, q, None, factors, value)
    return complex(sympy.N(value, 30)), prov


# ── Chart reduction ─────────────────────────────────────────────────────────
@dataclass
class ChartReduction:
    """ζ on the sphere written as ρ·e^{iφ}·(lift of w) in chart α."""

    alpha: int
    zeta: np.ndarray
    w: np.ndarray
    rho: float
    phase: complex
    tau: float

    @property
    def n(self) -> int:
        return self.w.size

    @property
    def omega_prime_coefficient(self) -> complex:
        """ω′(ζ) = (−1)^α ζ_α^{n+1} dw_1∧...∧dw_n."""
        za = self.zeta[self.alpha]
        return complex((-1) ** self.alpha * za ** (self.n + 1))

    def r0_residual(self) -> float:
        """|1 + Σ|w_i|² − τ²/|ζ_α|²|."""
        return float(abs(1.0 + np.sum(np.abs(self.w) ** 2) - self.tau ** 2 / self.rho ** 2))

    def dmodule_residual(self, v: np.ndarray) -> float:
        """Σζ̄_i v_i against (τ²/ζ_α)v_α + |ζ_α|² Σ w̄_i dw_i(v) for a tangent vector v."""
        v = np.asarray(v, dtype=complex)
        za = self.zeta[self.alpha]
        others = [j for j in range(self.n + 1) if j != self.alpha]
        dw = (v[others] - self.w * v[self.alpha]) / za
        lhs = np.sum(np.conj(self.zeta) * v)
        rhs = self.tau ** 2 / za * v[self.alpha] + abs(za) ** 2 * np.sum(np.conj(self.w) * dw)
        return float(abs(lhs - rhs))

    def chart_tangents(self) -> np.ndarray:
        """Columns ∂ζ/∂w_l at fixed ζ_α."""
        za = self.zeta[self.alpha]
        others = [j for j in range(self.n + 1) if j != self.alpha]
        out = np.zeros((self.n + 1, self.n), dtype=complex)
        for l, j in enumerate(others):
            out[j, l] = za
        return out


def chart_reduce(zeta: Sequence[complex], alpha: int) -> ChartReduction:
    zeta = np.asarray(zeta, dtype=complex)
    if not 0 <= alpha < zeta.size:
        raise ArgumentError(f"chart {alpha} out of range")
    za = zeta[alpha]
    if abs(za) == 0:
        raise ChartError(f"ζ_{alpha} = 0, point outside chart {alpha}")
    w = np.delete(zeta / za, alpha)
    return ChartReduction(alpha, zeta, w, float(abs(za)), complex(za / abs(za)), float(np.linalg.norm(zeta)))


def omega_prime_form_at(zeta: Sequence[complex]) -> ExteriorForm:
    """ω′(ζ) = Σ_k (−1)^k ζ_k ⋀_{j≠k} dζ_j with constant coefficients frozen at ζ."""
    zeta = np.asarray(zeta, dtype=complex)
    N = zeta.size
    return omega_prime(list(zeta), [ExteriorForm.basis("dzeta", j, N) for j in range(N)])


# ── Kernel identity check ───────────────────────────────────────────────────
def domega_residual(
    polys: Sequence,
    decompositions: Sequence,
    zeta: np.ndarray,
    z: np.ndarray,
    weights: Sequence[float],
    step: float = 1e-5,
) -> Dict[int, float]:
    """Graded residuals of dη_0∧...∧dη_n for the convex combination η.

    η = λ z̄/B* + μ_0 ζ̄/B + Σ_k μ_k Q_k/(P_k(ζ) − P_k(z)) with λ = 1 − Σμ and
    ``weights`` = (μ_0, μ_1, ..., μ_m). The differential runs over ζ̄, z̄ and
    the μ parameters with ζ, z held fixed; every dz̄-degree piece must vanish.
    Returned values are relative to the product of the 1-form norms.
    """
    zeta = np.asarray(zeta, dtype=complex)
    z = np.asarray(z, dtype=complex)
    N = zeta.size
    mus = np.asarray(weights, dtype=float)
    Qs = [dec.evaluate(zeta, z) for dec in decompositions]
    dP = [complex(P.evaluate(zeta) - P.evaluate(z)) for P in polys]

    def eta(zetabar: np.ndarray, zbar: np.ndarray, mu: np.ndarray) -> np.ndarray:
        B = np.sum(zetabar * (zeta - z))
        Bs = np.sum(zbar * (zeta - z))
        lam = 1.0 - mu.sum()
        out = lam * zbar / Bs + mu[0] * zetabar / B
        for k, Q in enumerate(Qs):
            out = out + mu[k + 1] * Q / dP[k]
        return out

    zb0, zetab0 = np.conj(z), np.conj(zeta)
    partials: List[Tuple[str, int, np.ndarray]] = []
    for l in range(N):
        e = np.zeros(N, dtype=complex)
        e[l] = step
        partials.append(("dzetabar", l, (eta(zetab0 + e, zb0, mus) - eta(zetab0 - e, zb0, mus)) / (2 * step)))
        partials.append(("dzbar", l, (eta(zetab0, zb0 + e, mus) - eta(zetab0, zb0 - e, mus)) / (2 * step)))
    for i in range(mus.size):
        e = np.zeros(mus.size)
        e[i] = step
        partials.append(("dt", i, (eta(zetab0, zb0, mus + e) - eta(zetab0, zb0, mus - e)) / (2 * step)))

    one_forms = []
    for j in range(N):
        form = ExteriorForm(N)
        for family, idx, values in partials:
            form = form + ExteriorForm.basis(family, idx, N) * values[j]
        one_forms.append(form)
    top = ExteriorForm.scalar(1.0, N)
    for f in one_forms:
        top = top.wedge(f)
    scale = float(np.prod([max(f.max_abs(), 1e-300) for f in one_forms]))
    return {r: piece.max_abs() / scale for r, piece in top.graded_pieces("dzbar").items()} or {0: 0.0}
