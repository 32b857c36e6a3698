"""Tests for the Hefer decomposition P(ζ) − P(z) = Σ Q^i·(ζ_i − z_i) and its disk cache."""

from __future__ import annotations

import shutil
import tempfile

import numpy as np
import pytest

from hodge_residues.hefer import (
    MEMO_SIZE,
    BihomogeneousPolynomial,
    HeferCache,
    HeferDecomposition,
    clear_memo,
    eval_hefer,
    hefer_decompose,
    hefer_monomial,
    memo_size,
)
from hodge_residues.models import ArgumentError
from hodge_residues.polycore import ComplexRational, HomogeneousPolynomial


# ── Fixtures ────────────────────────────────────────────────────────────────

@pytest.fixture
def tmp_dir():
    d = tempfile.mkdtemp()
    yield d
    shutil.rmtree(d, ignore_errors=True)


def _make_quartic() -> HomogeneousPolynomial:
    return HomogeneousPolynomial(3, 4, {
        (4, 0, 0): 1,
        (0, 4, 0): ComplexRational(0, 2),
        (1, 1, 2): -3,
        (0, 1, 3): ComplexRational(1, -1),
    })


def _random_points(seed: int, count: int, num_vars: int = 3):
    rng = np.random.default_rng(seed)
    zeta = rng.standard_normal((count, num_vars)) + 1j * rng.standard_normal((count, num_vars))
    z = rng.standard_normal((count, num_vars)) + 1j * rng.standard_normal((count, num_vars))
    return zeta, z


def _random_polynomial(rng: np.random.Generator) -> HomogeneousPolynomial:
    num_vars = int(rng.integers(1, 6))
    degree = int(rng.integers(1, 7))
    terms = {}
    for _ in range(int(rng.integers(1, 6))):
        e = tuple(int(x) for x in rng.multinomial(degree, [1.0 / num_vars] * num_vars))
        terms[e] = ComplexRational(int(rng.integers(-5, 6)), int(rng.integers(-5, 6)))
    return HomogeneousPolynomial(num_vars, degree, terms)


# ── Decomposition ───────────────────────────────────────────────────────────

class TestHeferMonomial:
    @pytest.mark.parametrize("monomial", [(3, 0, 0), (1, 1, 1), (0, 2, 1), (2, 0, 2, 1)])
    def test_identity_holds_exactly(self, monomial):
        assert hefer_monomial(monomial, ComplexRational(2, -1)).is_exact()

    def test_coefficients_have_joint_degree_d_minus_one(self):
        dec = hefer_monomial((2, 1, 0))
        assert all(Q.joint_degree == 2 for Q in dec.coefficients)
        assert dec.coefficients[2].is_zero()

    def test_constant_has_zero_coefficients(self):
        dec = hefer_monomial((0, 0))
        assert all(Q.is_zero() for Q in dec.coefficients)
        assert dec.is_exact()

    def test_peeling_order(self):
        # z0² z1: the z0 column keeps the ζ1 suffix, the z1 column the z0² prefix
        dec = hefer_monomial((2, 1))
        Q0, Q1 = dec.coefficients
        assert set(Q0.terms) == {((1, 1), (0, 0)), ((0, 1), (1, 0))}
        assert set(Q1.terms) == {((0, 0), (2, 0))}


class TestHeferDecompose:
    def setup_method(self):
        clear_memo()

    def test_linear_extension_is_exact(self):
        dec = hefer_decompose(_make_quartic())
        assert dec.is_exact()
        assert dec.residual() == {}

    def test_numeric_identity(self):
        P = _make_quartic()
        dec = hefer_decompose(P)
        zeta, z = _random_points(11, 20)
        lhs = P.evaluate(zeta) - P.evaluate(z)
        rhs = np.sum(dec.evaluate(zeta, z) * (zeta - z), axis=-1)
        assert np.allclose(lhs, rhs, rtol=1e-12, atol=1e-10)

    def test_random_polynomials(self):
        rng = np.random.default_rng(2026)
        for _ in range(50):
            P = _random_polynomial(rng)
            dec = hefer_decompose(P)
            assert dec.is_exact(), P
            zeta, z = _random_points(int(rng.integers(1 << 30)), 5, P.num_vars)
            lhs = P.evaluate(zeta) - P.evaluate(z)
            rhs = np.sum(dec.evaluate(zeta, z) * (zeta - z), axis=-1)
            assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-8)

    def test_memo_returns_same_object(self):
        P = _make_quartic()
        assert hefer_decompose(P) is hefer_decompose(P)

    def test_memo_is_bounded(self):
        for k in range(MEMO_SIZE + 10):
            hefer_decompose(HomogeneousPolynomial.monomial((k, 1)))
        assert memo_size() == MEMO_SIZE

    def test_cache_clear_drops_memo(self, tmp_dir):
        hefer_decompose(_make_quartic())
        assert memo_size() == 1
        HeferCache(tmp_dir).clear()
        assert memo_size() == 0

    def test_zeta_degree_components(self):
        dec = hefer_decompose(HomogeneousPolynomial(3, 3, {(3, 0, 0): 1, (0, 3, 0): 1, (0, 0, 3): 1}))
        Q = dec.coefficients[0]
        assert Q.zeta_degrees() == [0, 1, 2]
        assert Q.component(2).zeta_degrees() == [2]

    def test_eval_hefer_checks_length(self):
        dec = hefer_monomial((1, 1, 0))
        with pytest.raises(ArgumentError):
            eval_hefer(dec.coefficients[0], [1, 2], [1, 2, 3])

    def test_bihomogeneous_rejects_wrong_joint_degree(self):
        with pytest.raises(ArgumentError):
            BihomogeneousPolynomial(2, 2, {((1, 0), (0, 0)): 1})


# ── Disk cache ──────────────────────────────────────────────────────────────

class TestHeferCache:
    def setup_method(self):
        clear_memo()

    def test_put_get(self, tmp_dir):
        cache = HeferCache(tmp_dir)
        P = _make_quartic()
        assert cache.get(P) is None
        dec = hefer_decompose(P, cache)
        hit = cache.get(P)
        assert hit is not None
        assert hit.coefficients == dec.coefficients

    def test_record_shape(self):
        record = hefer_decompose(_make_quartic()).to_record()
        assert record["format"] == "hodge-residues/hefer"
        assert record["degree"] == 4
        assert len(record["coefficients"]) == 3
        assert HeferDecomposition.from_record(record).is_exact()

    def test_entries_and_clear(self, tmp_dir):
        cache = HeferCache(tmp_dir)
        hefer_decompose(_make_quartic(), cache)
        hefer_decompose(HomogeneousPolynomial.monomial((1, 2, 0)), cache)
        entries = cache.entries()
        assert len(entries) == 2
        assert {e["degree"] for e in entries} == {3, 4}
        assert cache.clear() == 2
        assert cache.entries() == []

    def test_unreadable_entry_is_ignored(self, tmp_dir):
        cache = HeferCache(tmp_dir)
        P = _make_quartic()
        path = cache.put(hefer_decompose(P))
        path.write_text("not json", encoding="utf-8")
        assert cache.get(P) is None

    def test_env_override(self, tmp_dir, monkeypatch):
        monkeypatch.setenv("HODGE_RESIDUES_CACHE_DIR", tmp_dir)
        assert str(HeferCache().directory) == tmp_dir

    def test_missing_directory_is_empty(self, tmp_dir):
        cache = HeferCache(f"{tmp_dir}/absent")
        assert cache.entries() == []
        assert cache.clear() == 0
