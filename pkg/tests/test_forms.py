"""Tests for exterior algebra, bracket expansion, simplex moments and kernel constants."""

from __future__ import annotations

from fractions import Fraction

import mpmath
import numpy as np
import pytest

from hodge_residues.forms import (
    EMPTY_KEY,
    ExteriorForm,
    KernelColumnSpec,
    KernelPoint,
    bracket_coefficients,
    chart_reduce,
    domega_residual,
    eval_B,
    eval_Bstar,
    kernel_columns,
    omega,
    omega_prime_form_at,
    projector_constant,
    simplex_moment,
    solver_constant,
)
from hodge_residues.hefer import hefer_decompose
from hodge_residues.models import ArgumentError, ChartError, SingularKernelError
from hodge_residues.polycore import HomogeneousPolynomial


# ── Fixtures ────────────────────────────────────────────────────────────────

def _fermat_cubic() -> HomogeneousPolynomial:
    return HomogeneousPolynomial(3, 3, {(3, 0, 0): 1, (0, 3, 0): 1, (0, 0, 3): 1})


def _random_pair(seed: int):
    rng = np.random.default_rng(seed)
    zeta = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    return zeta / np.linalg.norm(zeta), z / np.linalg.norm(z)


# ── Exterior algebra ────────────────────────────────────────────────────────

class TestExteriorForm:
    def test_wedge_anticommutes(self):
        a = ExteriorForm.basis("dzbar", 0, 3)
        b = ExteriorForm.basis("dzeta", 2, 3)
        assert a.wedge(b).is_close(-(b.wedge(a)))

    def test_wedge_square_vanishes(self):
        a = ExteriorForm.basis("dzetabar", 1, 3)
        assert a.wedge(a).is_zero()

    def test_unknown_family(self):
        with pytest.raises(ArgumentError):
            ExteriorForm.basis("dw", 0, 3)

    def test_omega_pairs_to_determinant(self):
        rng = np.random.default_rng(3)
        vectors = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        assert abs(omega(3).pair_holomorphic(vectors) - np.linalg.det(vectors)) < 1e-12

    def test_omega_prime_coefficients(self):
        zeta = np.array([1.0, 2.0j, -0.5])
        form = omega_prime_form_at(zeta)
        # ω′ = ζ0 dζ1∧dζ2 − ζ1 dζ0∧dζ2 + ζ2 dζ0∧dζ1
        assert form.coefficient(((1, 2), (), (), ())) == zeta[0]
        assert form.coefficient(((0, 2), (), (), ())) == -zeta[1]
        assert form.coefficient(((0, 1), (), (), ())) == zeta[2]

    def test_graded_pieces(self):
        f = ExteriorForm.basis("dzbar", 0, 2) + ExteriorForm.scalar(2.0, 2)
        pieces = f.graded_pieces("dzbar")
        assert sorted(pieces) == [0, 1]
        assert pieces[0].coefficient(EMPTY_KEY) == 2.0


class TestBracket:
    def test_scalar_columns_give_determinant(self):
        rng = np.random.default_rng(5)
        cols = [rng.standard_normal((4, 2)) + 0j for _ in range(2)]
        out = bracket_coefficients(cols)
        expected = cols[0][:, 0] * cols[1][:, 1] - cols[0][:, 1] * cols[1][:, 0]
        assert np.allclose(out[EMPTY_KEY], expected)

    def test_one_differential_column(self):
        # det[v, dz̄] = v0 dz̄1 − v1 dz̄0
        v = np.array([[2.0, 5.0]], dtype=complex)
        out = bracket_coefficients([v, ("dzbar", None)])
        assert np.allclose(out[((), (), (1,), ())], 2.0)
        assert np.allclose(out[((), (), (0,), ())], -5.0)

    def test_column_length_checked(self):
        with pytest.raises(ArgumentError):
            bracket_coefficients([np.ones((1, 3)), ("dzbar", None)])


class TestKernelColumns:
    def test_projector_spec_degree(self):
        spec = KernelColumnSpec.projector(2, 1, 1)
        assert spec.num_vars == 3
        with pytest.raises(ArgumentError):
            KernelColumnSpec.projector(2, 1, 0)

    def test_solver_spec_range(self):
        with pytest.raises(ArgumentError):
            KernelColumnSpec.solver(2, 1, 2)

    def test_singular_denominator(self):
        zeta, _ = _random_pair(1)
        spec = KernelColumnSpec.solver(2, 1, 1)
        point = KernelPoint(zeta=zeta[None, :], z=zeta[None, :])
        with pytest.raises(SingularKernelError):
            kernel_columns(spec, point)

    def test_b_vanishes_on_diagonal(self):
        zeta, z = _random_pair(2)
        assert abs(eval_B(zeta, zeta)) < 1e-15
        assert abs(eval_B(zeta, z) - (1.0 - np.vdot(zeta, z))) < 1e-12
        assert abs(eval_Bstar(zeta, z) - (np.vdot(z, zeta) - 1.0)) < 1e-12

    def test_kernel_identity_holds(self):
        P = _fermat_cubic()
        zeta, z = _random_pair(9)
        residuals = domega_residual([P], [hefer_decompose(P)], zeta, z, weights=(0.2, 0.3))
        assert max(residuals.values()) < 1e-6


# ── Simplex moments and constants ───────────────────────────────────────────

class TestSimplexMoment:
    def test_volumes(self):
        assert simplex_moment((0, 0), 0, 2) == Fraction(1, 2)
        assert simplex_moment((0, 0, 0), 0, 3) == Fraction(1, 6)

    def test_matches_beta_integral(self):
        # ∫_0^1 μ(1−μ) dμ
        numeric = mpmath.quad(lambda x: x * (1 - x), [0, 1])
        assert abs(float(simplex_moment((1,), 1, 1)) - float(numeric)) < 1e-14

    def test_bad_shape(self):
        with pytest.raises(ArgumentError):
            simplex_moment((1, 1), 0, 1)


class TestConstants:
    def test_empty_range_below_degree(self):
        c = projector_constant(2, 1, 2, 0)
        assert c.empty and c.value == 0

    def test_empty_range_above_r(self):
        assert projector_constant(2, 1, 4, 2).empty

    def test_cubic_projector_constant(self):
        c = projector_constant(2, 1, 3, 0)
        assert not c.empty
        assert c.c_r == 1
        # global · sign · c_r · simplex · expansion · residue
        expected = 2 / (2j * np.pi) ** 3 * 1 * 0.5 * (1j) ** 2
        assert abs(c.numeric - expected) < 1e-12
        assert c.provenance.label == "projector"
        assert [f.name for f in c.provenance.factors][0] == "global"

    def test_cubic_phase_integral_gives_real_kappa(self):
        # C·2πi is the κ the projector applies for r = 0
        kappa = projector_constant(2, 1, 3, 0).numeric * 2j * np.pi
        assert abs(kappa - 1.0 / (4.0 * np.pi ** 2)) < 1e-14

    def test_quartic_binomial_factor(self):
        assert projector_constant(2, 1, 4, 1).c_r == 2

    def test_solver_constant(self):
        value, prov = solver_constant(2, 1, 1)
        expected = 2 / (2j * np.pi) ** 3 * 1 * 0.5
        assert abs(value - expected) < 1e-12
        assert prov.label == "solver"


class TestChartReduction:
    def test_sphere_relation(self):
        zeta, _ = _random_pair(4)
        red = chart_reduce(zeta, 1)
        assert red.r0_residual() < 1e-12
        assert abs(abs(red.phase) - 1.0) < 1e-12

    def test_dmodule_relation(self):
        zeta, _ = _random_pair(6)
        red = chart_reduce(zeta, 0)
        for v in np.eye(3, dtype=complex):
            assert red.dmodule_residual(v) < 1e-12

    def test_outside_chart(self):
        with pytest.raises(ChartError):
            chart_reduce([0.0, 1.0, 0.0], 0)
