"""Tests for exact polynomials, charts, transition data and sampling of V.

Varieties used throughout:
  1. Fermat cubic z0³ + z1³ + z2³ in CP² (smooth plane curve, d > n)
  2. Line z2 = 0 in CP² (misses chart 2 entirely)
  3. Double line z1² = 0 (non-reduced, Jacobian rank drops on V)
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest

from hodge_residues.models import ArgumentError, ChartError, PolynomialSpec, PolynomialTermSpec, VarietySpec, Verdict
from hodge_residues.polycore import (
    ComplexRational,
    HomogeneousPolynomial,
    Variety,
    batched_roots,
    cutoff_witness,
    dehomogenize,
    disk_grid,
    eval_poly,
    excluded_measure,
    fiber_axis_choices,
    normalize_point,
    partition_of_unity,
    plane_grid,
    polynomial_from_spec,
    reducedness_witness,
    sample_variety,
    to_chart,
    transition_factor,
    variety_from_spec,
)


# ── Fixtures ────────────────────────────────────────────────────────────────

def _fermat(degree: int = 3) -> HomogeneousPolynomial:
    return HomogeneousPolynomial(3, degree, {(degree, 0, 0): 1, (0, degree, 0): 1, (0, 0, degree): 1})


def _make_cubic() -> Variety:
    return Variety([_fermat(3)], name="fermat-cubic")


def _make_line() -> Variety:
    return Variety([HomogeneousPolynomial.monomial((0, 0, 1))], name="line")


def _make_double_line() -> Variety:
    return Variety([HomogeneousPolynomial.monomial((0, 2, 0))], name="double-line")


def _term(exponents, re=(1, 1), im=(0, 1)) -> PolynomialTermSpec:
    return PolynomialTermSpec(exponents=list(exponents), re=re, im=im)


# ── Exact scalars ───────────────────────────────────────────────────────────

class TestComplexRational:
    def test_product_is_exact(self):
        a = ComplexRational(1, 2)
        b = ComplexRational(3, -1)
        assert a * b == ComplexRational(5, 5)

    def test_division_and_inverse_power(self):
        a = ComplexRational(Fraction(1, 2), 1)
        assert a / a == 1
        assert a ** -1 * a == 1

    def test_division_by_zero_raises(self):
        with pytest.raises(ZeroDivisionError):
            ComplexRational(1) / ComplexRational(0)

    def test_pairs_preserve_value(self):
        a = ComplexRational(Fraction(-3, 7), Fraction(5, 2))
        assert ComplexRational.from_pairs(a.to_pairs()) == a

    def test_rejects_floats(self):
        with pytest.raises(TypeError):
            ComplexRational.coerce(0.5)


# ── Homogeneous polynomials ─────────────────────────────────────────────────

class TestHomogeneousPolynomial:
    def test_rejects_wrong_degree(self):
        with pytest.raises(ArgumentError):
            HomogeneousPolynomial(3, 2, {(1, 0, 0): 1})

    def test_rejects_negative_exponent(self):
        with pytest.raises(ArgumentError):
            HomogeneousPolynomial(2, 1, {(2, -1): 1})

    def test_zero_terms_are_dropped(self):
        P = HomogeneousPolynomial(2, 1, {(1, 0): 1}) - HomogeneousPolynomial(2, 1, {(1, 0): 1})
        assert P.is_zero()

    def test_exact_evaluation(self):
        P = HomogeneousPolynomial(2, 2, {(2, 0): 1, (0, 2): 1})
        assert eval_poly(P, [1, 2]) == 5
        assert eval_poly(P, [ComplexRational(0, 1), 1]) == 0

    def test_numeric_evaluation_matches_exact(self):
        P = _fermat(3)
        value = eval_poly(P, [0.5, 1.0, 2.0])
        assert isinstance(value, complex)
        assert abs(value - (0.125 + 1.0 + 8.0)) < 1e-12

    def test_derivative(self):
        P = HomogeneousPolynomial.monomial((2, 1, 0), 3)
        assert P.derivative(0) == HomogeneousPolynomial.monomial((1, 1, 0), 6)
        assert P.derivative(2).is_zero()

    def test_product_degree_adds(self):
        P = HomogeneousPolynomial.monomial((1, 0))
        Q = HomogeneousPolynomial.monomial((0, 2))
        assert (P * Q).degree == 3

    def test_content_hash_ignores_term_order(self):
        a = HomogeneousPolynomial(2, 1, {(1, 0): 1, (0, 1): 2})
        b = HomogeneousPolynomial(2, 1, {(0, 1): 2, (1, 0): 1})
        assert a.content_hash() == b.content_hash()

    def test_spec_must_be_homogeneous(self):
        spec = PolynomialSpec(terms=[_term((2, 0, 0)), _term((1, 0, 0))])
        with pytest.raises(ArgumentError):
            polynomial_from_spec(spec, 3)


# ── Charts and transitions ──────────────────────────────────────────────────

class TestCharts:
    def test_dehomogenize_then_homogenize(self):
        P = _fermat(3)
        F = dehomogenize(P, 1)
        assert F.num_vars == 2
        assert F.homogenize(3) == P

    def test_to_chart_outside_chart_raises(self):
        with pytest.raises(ChartError):
            to_chart(np.array([0.0, 1.0, 2.0]), 0)

    def test_normalize_point(self):
        z, beta = normalize_point([1j, 3.0, -1.0])
        assert beta == 1
        assert abs(np.linalg.norm(z) - 1.0) < 1e-12
        assert abs(z[1].imag) < 1e-15 and z[1].real > 0

    def test_partition_of_unity_sums_to_one(self):
        rng = np.random.default_rng(7)
        z = rng.standard_normal((5, 3)) + 1j * rng.standard_normal((5, 3))
        assert np.allclose(partition_of_unity(z).sum(axis=-1), 1.0)

    def test_transition_factor_exact(self):
        variety = _make_cubic()
        l01 = transition_factor(0, 1, variety)
        assert l01.exponent == 3
        assert l01.evaluate([1, 2, 3]) == 8
        assert l01.describe() == "(z_1/z_0)^3"

    def test_transition_factor_needs_distinct_charts(self):
        with pytest.raises(ArgumentError):
            transition_factor(1, 1, _make_cubic())

    def test_codimension_above_dimension_rejected(self):
        lin = [HomogeneousPolynomial.monomial(e) for e in ((1, 0), (0, 1))]
        with pytest.raises(ArgumentError):
            Variety(lin)

    def test_variety_from_spec(self):
        spec = VarietySpec(
            name="cubic",
            n=2,
            polys=[PolynomialSpec(terms=[_term((3, 0, 0)), _term((0, 3, 0)), _term((0, 0, 3))])],
        )
        variety = variety_from_spec(spec)
        assert (variety.n, variety.m, variety.degrees) == (2, 1, (3,))
        assert variety.dimension == 1


# ── Grids and roots ─────────────────────────────────────────────────────────

class TestGrids:
    def test_plane_grid_integrates_gaussian(self):
        grid = plane_grid(1, radial_nodes=40, angular_nodes=16)
        total = np.sum(grid.weights * np.exp(-np.abs(grid.points[:, 0]) ** 2))
        assert abs(total - np.pi) < 1e-6

    def test_disk_grid_area(self):
        grid = disk_grid(1, radius=1.0, radial_nodes=8, angular_nodes=8)
        assert abs(grid.weights.sum() - np.pi) < 1e-10

    def test_zero_dimensional_base(self):
        grid = plane_grid(0)
        assert grid.size == 1 and grid.dim == 0

    def test_batched_roots(self):
        roots = batched_roots(np.array([[1.0, 0.0, -1.0], [0.0, 1.0, -2.0]], dtype=complex))
        assert np.allclose(sorted(roots[0].real), [-1.0, 1.0])
        assert np.allclose(roots[1], [2.0])


class TestSampling:
    def setup_method(self):
        self.grid = plane_grid(1, radial_nodes=6, angular_nodes=8)

    def test_line_is_hit_once_per_node(self):
        samples = sample_variety(_make_line(), 0, self.grid, fiber_axes=(1,))
        assert all(len(s.fiber_roots) == 1 for s in samples)
        assert np.allclose(np.concatenate([s.fiber_roots[:, 0] for s in samples]), 0.0)
        assert excluded_measure(samples) == 0.0

    def test_cubic_roots_lie_on_v(self):
        variety = _make_cubic()
        samples = sample_variety(variety, 0, self.grid)
        accepted = sum(len(s.fiber_roots) for s in samples)
        assert accepted >= 0.9 * 3 * len(samples)
        for s in samples:
            if len(s.fiber_roots):
                residual = np.abs(variety.evaluate_chart(0, s.points))
                assert np.all(residual <= 1e-9 * variety.residual_scale(0, s.points))

    def test_fiber_axis_choices(self):
        assert fiber_axis_choices(_make_cubic()) == [(0,), (1,)]


# ── Witnesses ───────────────────────────────────────────────────────────────

class TestWitnesses:
    def setup_method(self):
        self.grid = plane_grid(1, radial_nodes=6, angular_nodes=8)

    def test_cubic_is_reduced(self):
        variety = _make_cubic()
        samples = sample_variety(variety, 0, self.grid)
        assert reducedness_witness(variety, samples).verdict == Verdict.passed

    def test_double_line_is_not_reduced(self):
        variety = _make_double_line()
        samples = sample_variety(variety, 0, self.grid, fiber_axes=(0,))
        report = reducedness_witness(variety, samples)
        assert report.verdict == Verdict.failed

    def test_chart_missing_v_passes(self):
        variety = _make_line()
        samples = sample_variety(variety, 2, self.grid, fiber_axes=(0,))
        assert reducedness_witness(variety, samples).verdict == Verdict.passed
        assert cutoff_witness(variety, samples, 1e-3).residual == 0.0

    def test_constant_cutoff_never_cuts(self):
        variety = _make_cubic()
        samples = sample_variety(variety, 1, self.grid)
        report = cutoff_witness(variety, samples, 1e-3)
        assert report.verdict == Verdict.passed
        assert report.name == "cutoff_chart_1"
