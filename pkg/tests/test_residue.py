"""Tests for admissible paths, extrapolation and the three residue routes.

The line V = {w2 = 0} in chart 0 of CP² has a linear defining function, so
the tube integral does not depend on ε and every route must agree exactly
up to quadrature of ∫ e^{−|w1|²} = π. The Cauchy oracles live in CP¹ and CP²
with V a point; the Fermat cubic checks the routes against each other.
"""

from __future__ import annotations

import numpy as np
import pytest

from hodge_residues.models import ArgumentError, NonAdmissiblePathError, PathFamily, Projection
from hodge_residues.polycore import HomogeneousPolynomial, Variety, plane_grid
from hodge_residues.residue import (
    admissible_path,
    eta_ladder,
    fibered_residue,
    polynomial_limit,
    prepare_samples,
    richardson_limit,
    sphere_chi,
    tube_integrate,
    tube_residue,
    weighted_tube_equivalence,
)


# ── Fixtures ────────────────────────────────────────────────────────────────

def _make_line() -> Variety:
    return Variety([HomogeneousPolynomial.monomial((0, 0, 1))], name="line")


def _gaussian(W: np.ndarray):
    return {(0,): np.exp(-np.abs(W[:, 0]) ** 2)}


# ── Paths ───────────────────────────────────────────────────────────────────

class TestAdmissiblePath:
    def test_single_codimension_is_always_admissible(self):
        assert admissible_path(1, PathFamily.linear).admissible

    def test_linear_rejected_for_m2(self):
        with pytest.raises(NonAdmissiblePathError):
            admissible_path(2, PathFamily.linear)

    def test_non_admissible_on_request(self):
        path = admissible_path(2, PathFamily.quadratic, allow_non_admissible=True)
        assert not path.admissible
        assert not path.ratios_decrease([0.1, 0.05, 0.02])

    def test_exponential_ratios_decrease(self):
        path = admissible_path(2)
        assert path.ratios_decrease([0.1, 0.05, 0.02])

    def test_positive_parameter_required(self):
        with pytest.raises(ArgumentError):
            admissible_path(1).log_eps(0.0)

    def test_underflow_reported(self):
        with pytest.raises(ArgumentError):
            admissible_path(2)(0.02)

    def test_codimension_must_be_positive(self):
        with pytest.raises(ArgumentError):
            admissible_path(0)


# ── Extrapolation ───────────────────────────────────────────────────────────

class TestExtrapolation:
    def test_richardson_removes_two_orders(self):
        values = [1 + h + h * h for h in (1.0, 0.5, 0.25)]
        assert abs(richardson_limit(2.0, values) - 1.0) < 1e-12

    def test_richardson_empty(self):
        with pytest.raises(ArgumentError):
            richardson_limit(2.0, [])

    def test_polynomial_limit(self):
        levels = [0.1, 0.05, 0.025]
        assert abs(polynomial_limit(levels, [1 + 2 * x for x in levels]) - 1.0) < 1e-12

    def test_polynomial_limit_single_value(self):
        assert polynomial_limit([0.3], [4.0 + 1j]) == 4.0 + 1j

    def test_eta_ladder_halves(self):
        assert eta_ladder(1e-3, 2) == [1e-3, 5e-4, 2.5e-4]


# ── Residue routes ──────────────────────────────────────────────────────────

class TestResidueRoutes:
    def setup_method(self):
        self.variety = _make_line()
        self.grid = plane_grid(1, radial_nodes=40, angular_nodes=8)

    def test_fibered_matches_closed_form(self):
        report = fibered_residue(self.variety, 0, _gaussian, self.grid)
        assert abs(abs(report.extrapolated.to_complex()) - 4 * np.pi ** 2) < 1e-4
        assert report.excluded_measure == 0.0

    def test_tube_matches_fibered(self):
        path = admissible_path(1)
        tube = tube_residue(self.variety, 0, _gaussian, path, [0.1, 0.05, 0.02], self.grid,
                            phase_nodes=8, fiber_axes=(1,))
        fibered = fibered_residue(self.variety, 0, _gaussian, self.grid)
        a = tube.extrapolated.to_complex()
        b = fibered.extrapolated.to_complex()
        assert abs(a - b) < 1e-8 * abs(b)

    def test_path_codimension_must_match(self):
        path = admissible_path(2)
        with pytest.raises(ArgumentError):
            tube_residue(self.variety, 0, _gaussian, path, [0.5], self.grid, fiber_axes=(1,))

    def test_unit_weight_reuses_plain_tube(self):
        report = weighted_tube_equivalence(self.variety, 0, _gaussian, None, admissible_path(1),
                                           [0.1, 0.05], self.grid, phase_nodes=8, fiber_axes=(1,))
        assert report.difference == 0.0

    def test_sphere_weight_is_one_on_patch_boundary(self):
        chi = sphere_chi(self.variety, 0.5)
        W = np.array([[0.5, 0.0]], dtype=complex)
        assert np.allclose(chi(W), 1.0)

    def test_prepared_samples_are_reused(self):
        samples = prepare_samples(self.variety, 0, self.grid, Projection.partition)
        a = fibered_residue(self.variety, 0, _gaussian, samples=samples)
        b = fibered_residue(self.variety, 0, lambda W: {(0,): 2.0 * _gaussian(W)[(0,)]}, samples=samples)
        assert abs(b.extrapolated.to_complex() - 2.0 * a.extrapolated.to_complex()) < 1e-10

    def test_needs_grid_or_samples(self):
        with pytest.raises(ArgumentError):
            fibered_residue(self.variety, 0, _gaussian)

    def test_bad_numerator_key(self):
        with pytest.raises(ArgumentError):
            fibered_residue(self.variety, 0, lambda W: {(0, 1): np.ones(len(W))}, self.grid)


# ── Closed-form oracles ─────────────────────────────────────────────────────

def _point_in_cp1() -> Variety:
    # chart 0: F = w
    return Variety([HomogeneousPolynomial.monomial((0, 1))], name="point")


def _origin_in_cp2() -> Variety:
    # chart 0: F = (w0, w1)
    return Variety([HomogeneousPolynomial.monomial((0, 1, 0)), HomogeneousPolynomial.monomial((0, 0, 1))],
                   name="origin")


def _fermat_cubic() -> Variety:
    return Variety([HomogeneousPolynomial(3, 3, {(3, 0, 0): 1, (0, 3, 0): 1, (0, 0, 3): 1})], name="fermat-3")


def _cubic_numerator(W: np.ndarray):
    # w0² cancels 1/(∂F/∂w0) at the branch points of the w0-projection
    return {(1,): W[:, 0] ** 2 * np.exp(-np.sum(np.abs(W) ** 2, axis=-1))}


class TestCauchyOracles:
    def test_dw_over_w(self):
        report = tube_residue(_point_in_cp1(), 0, lambda W: {(): np.ones(len(W))}, admissible_path(1),
                              [0.5, 0.25, 0.1], plane_grid(0), phase_nodes=8)
        assert abs(report.extrapolated.to_complex() - 2j * np.pi) < 1e-12
        for entry in report.ladder:
            assert abs(entry.value.to_complex() - 2j * np.pi) < 1e-12

    def test_higher_order_pole(self):
        # h(w)dw/w³ picks the w² coefficient of h
        h = [1.0, 2.0, 3.0 - 1.0j, 5.0]

        def numerator(W):
            w = W[:, 0]
            return {(): sum(c * w ** k for k, c in enumerate(h)) / w ** 2}

        value = tube_integrate(_point_in_cp1(), 0, numerator, [0.5], plane_grid(0), phase_nodes=16)
        assert abs(value - 2j * np.pi * h[2]) < 1e-12

    def test_torus(self):
        value = tube_integrate(_origin_in_cp2(), 0, lambda W: {(): np.ones(len(W))}, [0.3, 0.2],
                               plane_grid(0), phase_nodes=8)
        assert abs(value - (2j * np.pi) ** 2) < 1e-10


class TestCubicResidues:
    def setup_method(self):
        self.variety = _fermat_cubic()
        self.grid = plane_grid(1, radial_nodes=24, angular_nodes=24)

    def _tube(self, family: PathFamily, ts):
        return tube_residue(self.variety, 0, _cubic_numerator, admissible_path(1, family), ts, self.grid,
                            phase_nodes=16, fiber_axes=(0,)).extrapolated.to_complex()

    def test_tube_matches_fibered(self):
        tube = self._tube(PathFamily.linear, [0.04, 0.02, 0.01])
        fibered = fibered_residue(self.variety, 0, _cubic_numerator, self.grid).extrapolated.to_complex()
        assert abs(fibered) > 1e-2
        assert abs(tube - fibered) < 1e-3 * abs(fibered)

    def test_limit_does_not_depend_on_path(self):
        linear = self._tube(PathFamily.linear, [0.04, 0.02, 0.01])
        quadratic = self._tube(PathFamily.quadratic, [0.2, 0.14, 0.1])
        assert abs(linear - quadratic) < 1e-3 * abs(linear)

    def test_weighted_tube_has_the_same_limit(self):
        report = weighted_tube_equivalence(self.variety, 0, _cubic_numerator, sphere_chi(self.variety, 1.0),
                                           admissible_path(1), [0.04, 0.02, 0.01], self.grid,
                                           phase_nodes=16, fiber_axes=(0,))
        unweighted = report.unweighted.extrapolated.to_complex()
        assert report.difference > 0.0
        assert report.difference < 1e-2 * abs(unweighted)
