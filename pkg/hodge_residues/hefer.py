"""Hefer (Weil) coefficients: P(ζ) − P(z) = Σ_i Q^i(ζ, z)·(ζ_i − z_i).

The decomposition is built monomial by monomial, peeling variables in
ascending index order, and extended linearly. Decompositions are cached on
disk, one JSON record per source polynomial, keyed by its content hash.
"""

from __future__ import annotations

import json
import logging
import os
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .models import ArgumentError
from .polycore import ZERO, ComplexRational, HomogeneousPolynomial, MultiIndex, Scalar, _clean

logger = logging.getLogger(__name__)

CACHE_DIR_ENV = "HODGE_RESIDUES_CACHE_DIR"
CACHE_FORMAT = "hodge-residues/hefer"
CACHE_VERSION = 1

BiIndex = Tuple[MultiIndex, MultiIndex]


class BihomogeneousPolynomial:
    """Polynomial in (ζ, z) whose terms all have deg_ζ + deg_z = joint_degree."""

    def __init__(self, num_vars: int, joint_degree: int, terms: Mapping[BiIndex, Scalar]):
        self.num_vars = num_vars
        self.joint_degree = joint_degree
        clean: Dict[BiIndex, ComplexRational] = {}
        for (ez, ew), c in terms.items():
            ez, ew = tuple(ez), tuple(ew)
            if len(ez) != num_vars or len(ew) != num_vars:
                raise ArgumentError(f"term ({ez}, {ew}) does not have {num_vars} variables per block")
            if sum(ez) + sum(ew) != joint_degree:
                raise ArgumentError(f"term ({ez}, {ew}) has joint degree {sum(ez) + sum(ew)}, expected {joint_degree}")
            clean[(ez, ew)] = clean.get((ez, ew), ZERO) + ComplexRational.coerce(c)
        self.terms: Dict[BiIndex, ComplexRational] = _clean(clean)
        self._tables = None

    @classmethod
    def zero(cls, num_vars: int, joint_degree: int) -> "BihomogeneousPolynomial":
        return cls(num_vars, joint_degree, {})

    def is_zero(self) -> bool:
        return not self.terms

    def __add__(self, other: "BihomogeneousPolynomial") -> "BihomogeneousPolynomial":
        if other.num_vars != self.num_vars or other.joint_degree != self.joint_degree:
            raise ArgumentError("bihomogeneous polynomials must share shape")
        out = dict(self.terms)
        for k, v in other.terms.items():
            out[k] = out.get(k, ZERO) + v
        return BihomogeneousPolynomial(self.num_vars, self.joint_degree, out)

    def __mul__(self, c: Scalar) -> "BihomogeneousPolynomial":
        c = ComplexRational.coerce(c)
        return BihomogeneousPolynomial(self.num_vars, self.joint_degree, {k: v * c for k, v in self.terms.items()})

    __rmul__ = __mul__

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, BihomogeneousPolynomial):
            return NotImplemented
        return (self.num_vars, self.joint_degree, self.terms) == (other.num_vars, other.joint_degree, other.terms)

    def __repr__(self) -> str:
        return f"BihomogeneousPolynomial(n+1={self.num_vars}, joint_degree={self.joint_degree}, terms={len(self.terms)})"

    def zeta_degrees(self) -> List[int]:
        return sorted({sum(ez) for ez, _ in self.terms})

    def component(self, zeta_degree: int) -> "BihomogeneousPolynomial":
        """Terms of ζ-degree exactly ``zeta_degree``."""
        return BihomogeneousPolynomial(
            self.num_vars,
            self.joint_degree,
            {k: v for k, v in self.terms.items() if sum(k[0]) == zeta_degree},
        )

    def _numeric(self):
        if self._tables is None:
            keys = sorted(self.terms)
            if keys:
                ez = np.array([k[0] for k in keys], dtype=int)
                ew = np.array([k[1] for k in keys], dtype=int)
                c = np.array([complex(self.terms[k]) for k in keys])
            else:
                ez = ew = np.zeros((0, self.num_vars), dtype=int)
                c = np.zeros(0, dtype=complex)
            self._tables = (ez, ew, c)
        return self._tables

    def evaluate(self, zeta: np.ndarray, z: np.ndarray) -> np.ndarray:
        ez, ew, c = self._numeric()
        zeta = np.asarray(zeta, dtype=complex)
        z = np.asarray(z, dtype=complex)
        shape = np.broadcast_shapes(zeta.shape[:-1], z.shape[:-1])
        if c.size == 0:
            return np.zeros(shape, dtype=complex)
        mz = np.prod(zeta[..., None, :] ** ez, axis=-1)
        mw = np.prod(z[..., None, :] ** ew, axis=-1)
        return (mz * mw) @ c

    def canonical(self) -> List:
        return [[list(ez), list(ew), c.to_pairs()] for (ez, ew), c in sorted(self.terms.items())]

    @classmethod
    def from_canonical(cls, num_vars: int, joint_degree: int, rows: Sequence) -> "BihomogeneousPolynomial":
        return cls(num_vars, joint_degree, {(tuple(ez), tuple(ew)): ComplexRational.from_pairs(c) for ez, ew, c in rows})


@dataclass
class HeferDecomposition:
    source: HomogeneousPolynomial
    coefficients: List[BihomogeneousPolynomial]

    @property
    def num_vars(self) -> int:
        return self.source.num_vars

    def residual(self) -> Dict[BiIndex, ComplexRational]:
        """Exact terms of P(ζ) − P(z) − Σ Q^i·(ζ_i − z_i); empty when the identity holds."""
        N = self.num_vars
        zero = (0,) * N
        out: Dict[BiIndex, ComplexRational] = {}

        def acc(key: BiIndex, c: ComplexRational) -> None:
            out[key] = out.get(key, ZERO) + c

        for e, c in self.source.terms.items():
            acc((e, zero), c)
            acc((zero, e), -c)
        for i, Q in enumerate(self.coefficients):
            for (ez, ew), c in Q.terms.items():
                shifted_zeta = list(ez)
                shifted_zeta[i] += 1
                shifted_z = list(ew)
                shifted_z[i] += 1
                acc((tuple(shifted_zeta), ew), -c)
                acc((ez, tuple(shifted_z)), c)
        return _clean(out)

    def is_exact(self) -> bool:
        return not self.residual()

    def evaluate(self, zeta: np.ndarray, z: np.ndarray) -> np.ndarray:
        """Stacked values (..., n+1) of Q^0..Q^n."""
        return np.stack([Q.evaluate(zeta, z) for Q in self.coefficients], axis=-1)

    def to_record(self) -> Dict:
        return {
            "format": CACHE_FORMAT,
            "version": CACHE_VERSION,
            "hash": self.source.content_hash(),
            "num_vars": self.num_vars,
            "degree": self.source.degree,
            "source": self.source.canonical(),
            "coefficients": [Q.canonical() for Q in self.coefficients],
        }

    @classmethod
    def from_record(cls, record: Dict) -> "HeferDecomposition":
        if record.get("format") != CACHE_FORMAT or record.get("version") != CACHE_VERSION:
            raise ValueError("unsupported Hefer cache record")
        N, d = record["num_vars"], record["degree"]
        source = HomogeneousPolynomial(N, d, {tuple(e): ComplexRational.from_pairs(c) for e, c in record["source"]})
        joint = max(d - 1, 0)
        coeffs = [BihomogeneousPolynomial.from_canonical(N, joint, rows) for rows in record["coefficients"]]
        return cls(source, coeffs)


# ── Construction ────────────────────────────────────────────────────────────
def hefer_monomial(monomial: Sequence[int], coefficient: Scalar = 1) -> HeferDecomposition:
    """Decompose c·ζ^e by peeling variables in ascending index order.

    For the variable i_j with exponent e_j the coefficient is
    z-prefix · (Σ_l ζ_{i_j}^{e_j−1−l} z_{i_j}^l) · ζ-suffix.
    """
    e = tuple(int(x) for x in monomial)
    N = len(e)
    d = sum(e)
    c = ComplexRational.coerce(coefficient)
    source = HomogeneousPolynomial(N, d, {e: c})
    joint = max(d - 1, 0)
    if d == 0:
        return HeferDecomposition(source, [BihomogeneousPolynomial.zero(N, joint) for _ in range(N)])
    coeffs: List[BihomogeneousPolynomial] = []
    for i in range(N):
        if e[i] == 0:
            coeffs.append(BihomogeneousPolynomial.zero(N, joint))
            continue
        prefix = tuple(e[j] if j < i else 0 for j in range(N))
        suffix = tuple(e[j] if j > i else 0 for j in range(N))
        terms: Dict[BiIndex, ComplexRational] = {}
        for l in range(e[i]):
            ez = list(suffix)
            ez[i] = e[i] - 1 - l
            ew = list(prefix)
            ew[i] = l
            terms[(tuple(ez), tuple(ew))] = c
        coeffs.append(BihomogeneousPolynomial(N, joint, terms))
    return HeferDecomposition(source, coeffs)


MEMO_SIZE = 64


@lru_cache(maxsize=MEMO_SIZE)
def _decompose(P: HomogeneousPolynomial) -> HeferDecomposition:
    N = P.num_vars
    joint = max(P.degree - 1, 0)
    totals = [BihomogeneousPolynomial.zero(N, joint) for _ in range(N)]
    for e, c in sorted(P.terms.items()):
        part = hefer_monomial(e, c)
        totals = [a + b for a, b in zip(totals, part.coefficients)]
    return HeferDecomposition(P, totals)


def hefer_decompose(P: HomogeneousPolynomial, cache: Optional["HeferCache"] = None) -> HeferDecomposition:
    """Linear extension of ``hefer_monomial``; the disk cache is read first and written through."""
    if cache is None:
        return _decompose(P)
    hit = cache.get(P)
    if hit is not None:
        return hit
    result = _decompose(P)
    cache.put(result)
    return result


def eval_hefer(Q: BihomogeneousPolynomial, zeta: Sequence[complex], z: Sequence[complex]) -> complex:
    if len(zeta) != Q.num_vars or len(z) != Q.num_vars:
        raise ArgumentError(f"expected vectors of length {Q.num_vars}")
    return complex(Q.evaluate(np.asarray(zeta, dtype=complex), np.asarray(z, dtype=complex)))


# ── Disk cache ──────────────────────────────────────────────────────────────
def default_cache_dir() -> Path:
    override = os.environ.get(CACHE_DIR_ENV)
    if override:
        return Path(override)
    return Path.home() / ".cache" / "hodge_residues"


class HeferCache:
    def __init__(self, directory: Optional[os.PathLike] = None):
        self.directory = Path(directory) if directory is not None else default_cache_dir()

    def _path(self, key: str) -> Path:
        return self.directory / f"hefer-{key}.json"

    def __contains__(self, P: HomogeneousPolynomial) -> bool:
        return self._path(P.content_hash()).is_file()

    def get(self, P: HomogeneousPolynomial) -> Optional[HeferDecomposition]:
        path = self._path(P.content_hash())
        if not path.is_file():
            return None
        try:
            with open(path, "r", encoding="utf-8") as f:
                record = json.load(f)
            result = HeferDecomposition.from_record(record)
        except (OSError, ValueError, KeyError) as exc:
            logger.warning("Ignoring unreadable Hefer cache entry %s: %s", path, exc)
            return None
        if result.source != P:
            logger.warning("Hefer cache entry %s does not match its key; ignoring", path)
            return None
        logger.debug("Hefer cache hit %s", path.name)
        return result

    def put(self, decomposition: HeferDecomposition) -> Path:
        self.directory.mkdir(parents=True, exist_ok=True)
        path = self._path(decomposition.source.content_hash())
        tmp = path.with_suffix(".tmp")
        with open(tmp, "w", encoding="utf-8") as f:
            json.dump(decomposition.to_record(), f, indent=2)
        os.replace(tmp, path)
        return path

    def entries(self) -> List[Dict]:
        if not self.directory.is_dir():
            return []
        out = []
        for path in sorted(self.directory.glob("hefer-*.json")):
            try:
                with open(path, "r", encoding="utf-8") as f:
                    record = json.load(f)
                out.append({
                    "file": path.name,
                    "hash": record.get("hash"),
                    "version": record.get("version"),
                    "num_vars": record.get("num_vars"),
                    "degree": record.get("degree"),
                    "bytes": path.stat().st_size,
                })
            except (OSError, ValueError):
                out.append({"file": path.name, "hash": None, "version": None})
        return out

    def clear(self) -> int:
        clear_memo()
        if not self.directory.is_dir():
            return 0
        removed = 0
        for path in self.directory.glob("hefer-*.json"):
            path.unlink()
            removed += 1
        return removed


def clear_memo() -> None:
    _decompose.cache_clear()


def memo_size() -> int:
    return _decompose.cache_info().currsize
