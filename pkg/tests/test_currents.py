"""Tests for residual currents, closedness, chart compatibility and dualizing sections."""

from __future__ import annotations

import numpy as np
import pytest

from hodge_residues.currents import (
    ChartForm,
    ChartFormCoefficient,
    ResidualCurrent,
    compatibility_report,
    check_closed,
    current_from_spec,
    dbar,
    make_antiholomorphic,
    make_dualizing_section,
    make_exact_current,
    make_ideal_current,
    monomials,
    pair_current,
    section_basis,
    section_dbar,
    section_dimension,
    transition_report,
    zero_current,
)
from hodge_residues.models import (
    AntiholomorphicConstruction,
    ArgumentError,
    BihomogeneousTermSpec,
    CurrentKind,
    CurrentSpec,
    Verdict,
)
from hodge_residues.polycore import HomogeneousPolynomial, Variety, plane_grid, sample_variety
from hodge_residues.residue import prepare_samples


# ── Fixtures ────────────────────────────────────────────────────────────────

def _fermat(degree: int) -> Variety:
    P = HomogeneousPolynomial(3, degree, {(degree, 0, 0): 1, (0, degree, 0): 1, (0, 0, degree): 1})
    return Variety([P], name=f"fermat-{degree}")


def _chart_points(variety: Variety, radial: int = 6, angular: int = 8):
    grid = plane_grid(variety.n - variety.m, radial, angular)
    points = {}
    for a in range(variety.n + 1):
        samples = sample_variety(variety, a, grid)
        points[a] = np.concatenate([s.points for s in samples if len(s.fiber_roots)])
    return points


def _exact_cubic(variety: Variety):
    return make_exact_current(variety, {((0, 0, 1), (0, 1, 0)): 1}, 1, "exact")


# ── Chart coefficients ──────────────────────────────────────────────────────

class TestChartFormCoefficient:
    def test_dbar_of_holomorphic_vanishes(self):
        c = ChartFormCoefficient(2, {((2, 1), (0, 0)): 3})
        assert c.dbar(0).is_zero() and c.dbar(1).is_zero()

    def test_dbar_quotient_rule_numeric(self):
        # ∂/∂w̄_0 of w̄_0/(1+|w|²) at a point, against a central difference
        c = ChartFormCoefficient(2, {((0, 0), (1, 0)): 1}, s=1)
        d = c.dbar(0)
        w = np.array([[0.3 + 0.2j, -0.4 + 0.1j]])
        h = 1e-6
        plus = w.copy()
        plus[0, 0] += h
        minus = w.copy()
        minus[0, 0] -= h
        iplus = w.copy()
        iplus[0, 0] += 1j * h
        iminus = w.copy()
        iminus[0, 0] -= 1j * h
        dx = (c.evaluate(plus) - c.evaluate(minus)) / (2 * h)
        dy = (c.evaluate(iplus) - c.evaluate(iminus)) / (2 * h)
        assert abs(d.evaluate(w)[0] - 0.5 * (dx[0] + 1j * dy[0])) < 1e-8

    def test_sum_raises_weight(self):
        a = ChartFormCoefficient.constant(2)
        b = ChartFormCoefficient(2, {((0, 0), (0, 0)): 1}, s=1)
        w = np.array([[0.5, 1j]])
        assert np.allclose((a + b).evaluate(w), 1.0 + 1.0 / 2.25)

    def test_negative_weight_rejected(self):
        with pytest.raises(ArgumentError):
            ChartFormCoefficient(2, {}, s=-1)

    def test_dbar_squared_is_zero(self):
        c = ChartFormCoefficient(2, {((1, 0), (0, 2)): 1, ((0, 1), (1, 1)): 2}, s=2)
        form = ChartForm(0, 2, 0, {(): c})
        assert dbar(dbar(form)).is_zero()


# ── Currents ────────────────────────────────────────────────────────────────

class TestCurrents:
    def setup_method(self):
        self.cubic = _fermat(3)

    def test_exact_current_needs_balanced_bidegree(self):
        with pytest.raises(ArgumentError):
            make_exact_current(self.cubic, {((0, 0, 1), (0, 0, 0)): 1}, 1)

    def test_exact_current_is_a_one_form(self):
        current = _exact_cubic(self.cubic)
        assert current.q == 1
        assert current.kind == CurrentKind.exact
        assert not current.is_zero()

    def test_homogeneous_antiholomorphic_needs_h_on_quartic(self):
        with pytest.raises(ArgumentError):
            make_antiholomorphic(_fermat(4), AntiholomorphicConstruction.homogeneous)

    def test_antiholomorphic_rejects_wrong_h_degree(self):
        with pytest.raises(ArgumentError):
            make_antiholomorphic(self.cubic, h=HomogeneousPolynomial.monomial((1, 0, 0)))

    def test_ideal_current_vanishes_on_v(self):
        current = make_ideal_current(self.cubic)
        points = _chart_points(self.cubic)
        for a, W in points.items():
            for values in current.charts[a].evaluate(W).values():
                scale = 1.0 + np.sum(np.abs(W), axis=-1) ** 4
                assert np.all(np.abs(values) <= 1e-8 * scale)

    def test_ideal_index_range(self):
        with pytest.raises(ArgumentError):
            make_ideal_current(self.cubic, index=1)

    def test_sum_keeps_least_trivial_kind(self):
        total = make_ideal_current(self.cubic) + _exact_cubic(self.cubic)
        assert total.kind == CurrentKind.exact

    def test_from_spec_scale(self):
        spec = CurrentSpec(
            name="half-exact",
            kind=CurrentKind.exact,
            psi_terms=[BihomogeneousTermSpec(z=[0, 0, 1], zbar=[0, 1, 0], re=(1, 1))],
            psi_s=1,
            scale=(1, 2),
        )
        current = current_from_spec(self.cubic, spec)
        full = _exact_cubic(self.cubic)
        W = np.array([[0.2 + 0.1j, -0.3j]])
        half = current.charts[0].evaluate(W)
        ref = full.charts[0].evaluate(W)
        for I in ref:
            assert np.allclose(half[I], 0.5 * ref[I])


class TestClosedness:
    def setup_method(self):
        self.cubic = _fermat(3)
        self.points = _chart_points(self.cubic)

    def test_top_degree_current_is_structurally_closed(self):
        report = check_closed(_exact_cubic(self.cubic), self.points)
        assert report.closed and report.structural_zero
        assert report.samples > 0

    def test_zero_current(self):
        report = check_closed(zero_current(self.cubic), self.points)
        assert report.closed and report.symbolic_zero
        assert report.ambient_fit_residual is None

    def test_conjugate_ideal_form_is_closed_without_ambient_fit(self):
        # Φ_α = F̄^(α) dw̄_0 on a cubic surface: ∂̄Φ = dF̄∧dw̄_0 vanishes on T^{0,1}V
        # but is not in the holomorphic ideal F·(1, w, w̄) near V
        surface = Variety([HomogeneousPolynomial(4, 3, {(3, 0, 0, 0): 1, (0, 3, 0, 0): 1,
                                                        (0, 0, 3, 0): 1, (0, 0, 0, 3): 1})], name="fermat-surface")
        charts = {}
        for a in range(4):
            Fbar = ChartFormCoefficient.from_chart_polynomial(surface.chart_polys(a)[0], conjugate=True)
            charts[a] = ChartForm(a, 3, 1, {(0,): Fbar})
        current = ResidualCurrent("conjugate-ideal", surface, 1, CurrentKind.ideal, charts)
        report = check_closed(current, _chart_points(surface, 4, 4))
        assert not report.structural_zero and not report.symbolic_zero
        assert report.tangential_residual < 1e-8
        assert report.closed
        assert report.ambient_fit_residual > 0.5


class TestCompatibility:
    def setup_method(self):
        self.cubic = _fermat(3)
        self.points = _chart_points(self.cubic)

    def test_homogeneous_construction_descends(self):
        current = make_antiholomorphic(self.cubic, AntiholomorphicConstruction.homogeneous)
        report, flags = compatibility_report(current, self.points)
        assert report.verdict == Verdict.passed
        assert flags == []
        assert report.details["chart_pairs"] > 0

    def test_exact_current_descends(self):
        report, _ = compatibility_report(_exact_cubic(self.cubic), self.points)
        assert report.verdict == Verdict.passed


# ── Sections ────────────────────────────────────────────────────────────────

class TestSections:
    def test_dimensions(self):
        assert section_dimension(_fermat(3)) == 1
        assert section_dimension(_fermat(4)) == 3
        assert section_dimension(_fermat(2)) == 0

    def test_basis_matches_dimension(self):
        assert len(section_basis(_fermat(4))) == 3
        assert section_basis(_fermat(2)) == []

    def test_monomials_order(self):
        mons = monomials(3, 2)
        assert len(mons) == 6
        assert mons[0] == (2, 0, 0)

    def test_section_degree_checked(self):
        with pytest.raises(ArgumentError):
            make_dualizing_section(_fermat(4), HomogeneousPolynomial.monomial((0, 0, 0)))

    def test_no_sections_below_degree(self):
        with pytest.raises(ArgumentError):
            make_dualizing_section(_fermat(2), HomogeneousPolynomial.monomial((0, 0, 0)))

    def test_transition_rule(self):
        variety = _fermat(4)
        points = _chart_points(variety)
        for section in section_basis(variety):
            assert transition_report(section, points).verdict == Verdict.passed


# ── Pairing ─────────────────────────────────────────────────────────────────

class TestPairing:
    def setup_method(self):
        self.cubic = _fermat(3)
        grid = plane_grid(1, 24, 24)
        self.samples = {a: prepare_samples(self.cubic, a, grid) for a in range(3)}
        self.section = section_basis(self.cubic)[0]

    def test_ideal_current_pairs_to_zero(self):
        report = pair_current(make_ideal_current(self.cubic), self.section, self.samples)
        assert abs(report.extrapolated.to_complex()) < 1e-6

    def test_antiholomorphic_class_is_nonzero(self):
        current = make_antiholomorphic(self.cubic, AntiholomorphicConstruction.homogeneous)
        report = pair_current(current, self.section, self.samples)
        assert abs(report.extrapolated.to_complex()) > 1e-3

    def test_degree_mismatch_rejected(self):
        with pytest.raises(ArgumentError):
            pair_current(zero_current(self.cubic, q=0), self.section, self.samples)


class TestSectionDbar:
    def setup_method(self):
        self.cubic = _fermat(3)
        grid = plane_grid(1, 8, 8)
        self.samples = {a: prepare_samples(self.cubic, a, grid) for a in range(3)}

    def test_holomorphic_section_has_no_dbar(self):
        worst, mass = section_dbar(section_basis(self.cubic)[0], self.samples)
        assert worst < 1e-8
        assert mass < 1e-8

    def test_antiholomorphic_coefficient_is_detected(self):
        class Conjugate:
            def chart_value(self, alpha, W):
                return np.conj(W[:, 0])

        worst, mass = section_dbar(Conjugate(), self.samples)
        assert worst > 0
        assert mass > 0
