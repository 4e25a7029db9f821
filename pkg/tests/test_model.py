"""Potentials, dipole operator, and Hamiltonian application."""

import math

import numpy as np
import pytest

import qoct
from qoct import (
    ComplexField,
    DipoleOperator,
    Potential,
    build_grid,
    dipole_expectation,
    inner_product,
    normalized,
    potential_eval,
    potential_field,
)
from qoct.model import apply_hamiltonian

from conftest import random_state


def test_potential_point_values():
    assert potential_eval(Potential(kind="well_1d"), 0.0) == 0.0
    assert potential_eval(Potential(kind="soft_coulomb_2d"), (0.0, 0.0)) == -1.0
    assert potential_eval(Potential(kind="well_2d"), (0.0, 1.0)) == 0.5


def test_potential_formulas_random_points():
    rng = np.random.default_rng(11)
    well = Potential(kind="well_1d")
    well2 = Potential(kind="well_2d")
    soft = Potential(kind="soft_coulomb_2d")
    for _ in range(100):
        x, y = rng.uniform(-6.0, 6.0, size=2)
        ref = x**4 / 64 + x**3 / 256 - x**2 / 4
        assert math.isclose(potential_eval(well, x), ref, rel_tol=1e-14,
                            abs_tol=1e-16)
        assert math.isclose(potential_eval(well2, (x, y)), ref + y**2 / 2,
                            rel_tol=1e-14, abs_tol=1e-16)
        assert math.isclose(potential_eval(soft, (x, y)),
                            -1.0 / math.sqrt(1 + x**2 + y**2), rel_tol=1e-14)


def test_custom_polynomial_matches_horner():
    rng = np.random.default_rng(12)
    cx = (0.3, -1.2, 0.0, 0.25)
    cy = (0.0, 0.5, 1.5)
    p1 = Potential(kind="custom_polynomial", x_coefficients=cx)
    p2 = Potential(kind="custom_polynomial", x_coefficients=cx,
                   y_coefficients=cy)
    assert p1.dim == 1 and p2.dim == 2
    for _ in range(100):
        x, y = rng.uniform(-3.0, 3.0, size=2)
        ref_x = sum(c * x**k for k, c in enumerate(cx))
        ref_y = sum(c * y**k for k, c in enumerate(cy))
        assert math.isclose(potential_eval(p1, x), ref_x, rel_tol=1e-13,
                            abs_tol=1e-15)
        assert math.isclose(potential_eval(p2, (x, y)), ref_x + ref_y,
                            rel_tol=1e-13, abs_tol=1e-15)


def test_potential_validation():
    with pytest.raises(ValueError, match="unknown potential kind"):
        Potential(kind="morse")
    with pytest.raises(ValueError, match="needs x_coefficients"):
        Potential(kind="custom_polynomial")
    with pytest.raises(ValueError, match="no polynomial coefficients"):
        Potential(kind="well_1d", x_coefficients=(1.0,))
    with pytest.raises(ValueError, match="coordinates"):
        Potential(kind="well_2d").evaluate(1.0)
    with pytest.raises(ValueError, match="grid"):
        potential_field(Potential(kind="soft_coulomb_2d"), build_grid(1, 0.5, 3.0))


def test_potential_field_matches_pointwise_eval():
    g = build_grid(2, 0.5, 2.0)
    pot = Potential(kind="well_2d")
    field = potential_field(pot, g)
    xm, ym = g.meshes
    idx = [(0, 0), (3, 5), (8, 8), (2, 7)]
    for i, j in idx:
        assert field.values[i, j] == pytest.approx(
            potential_eval(pot, (xm[i, j], ym[i, j])), rel=1e-15)


def test_potential_finite_everywhere():
    g = build_grid(2, 0.25, 4.0)
    for kind in ("well_2d", "soft_coulomb_2d"):
        vals = potential_field(Potential(kind=kind), g).values
        assert np.all(np.isfinite(vals))


def test_dipole_operator_normalizes_polarization():
    mu = DipoleOperator((3.0, 4.0))
    assert mu.polarization == pytest.approx((0.6, 0.8))
    assert DipoleOperator((-2.0,)).polarization == (-1.0,)
    with pytest.raises(ValueError, match="nonzero"):
        DipoleOperator((0.0, 0.0))
    with pytest.raises(ValueError, match="components"):
        DipoleOperator((1.0, 0.0, 0.0))


def test_dipole_operator_on_grid():
    g = build_grid(2, 0.5, 2.0)
    vals = DipoleOperator((3.0, 4.0)).on_grid(g).values
    xm, ym = g.meshes
    np.testing.assert_allclose(vals, 0.6 * xm + 0.8 * ym, atol=1e-15)
    with pytest.raises(ValueError, match="grid"):
        DipoleOperator((1.0,)).on_grid(g)


def test_hamiltonian_hermitian_on_boundary_vanishing_fields():
    rng = np.random.default_rng(21)
    for g in (build_grid(1, 0.1, 4.0), build_grid(2, 0.25, 2.0)):
        kind = "well_1d" if g.dim == 1 else "soft_coulomb_2d"
        V = potential_field(Potential(kind=kind), g)
        mu = DipoleOperator((1.0,) if g.dim == 1 else (0.6, 0.8))
        for _ in range(5):
            a = random_state(g, rng)
            b = random_state(g, rng)
            lhs = inner_product(a, apply_hamiltonian(b, V, mu, 0.3))
            rhs = inner_product(apply_hamiltonian(a, V, mu, 0.3), b)
            assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_hamiltonian_matches_dense_oracle():
    from conftest import dense_hamiltonian

    rng = np.random.default_rng(22)
    g = build_grid(2, 0.5, 2.0)
    V = potential_field(Potential(kind="well_2d"), g)
    H = dense_hamiltonian(g, V.values)
    psi = random_state(g, rng)
    out = apply_hamiltonian(psi, V).values.ravel()
    np.testing.assert_allclose(out, H @ psi.values.ravel(), atol=1e-12)


def test_hamiltonian_eigen_relation(well1d, well1d_pairs):
    grid, V = well1d
    for pair in well1d_pairs:
        r = apply_hamiltonian(pair.state, V).values - pair.energy * pair.state.values
        res = np.sqrt(np.sum(np.abs(r) ** 2) * grid.quadrature_weight)
        assert res <= 1e-8


def test_hamiltonian_linear_in_field(well1d, well1d_pairs):
    grid, V = well1d
    mu = DipoleOperator((1.0,))
    psi = well1d_pairs[0].state
    eps = 0.37
    diff = (apply_hamiltonian(psi, V, mu, eps).values
            - apply_hamiltonian(psi, V, mu, 0.0).values)
    expect = -eps * mu.on_grid(grid).values * psi.values
    # identical up to the final rounding of the two three-term sums
    np.testing.assert_allclose(diff, expect, atol=1e-13)


def test_hamiltonian_linear_in_state(well1d):
    grid, V = well1d
    rng = np.random.default_rng(23)
    a = random_state(grid, rng)
    b = random_state(grid, rng)
    c = 0.7 - 0.2j
    lhs = apply_hamiltonian(ComplexField(grid, a.values + c * b.values), V)
    rhs = apply_hamiltonian(a, V).values + c * apply_hamiltonian(b, V).values
    np.testing.assert_allclose(lhs.values, rhs, atol=1e-11)


def test_hamiltonian_validation(well1d):
    grid, V = well1d
    other = build_grid(1, 0.1, 4.0)
    psi = ComplexField(other, np.ones(other.shape, dtype=complex))
    with pytest.raises(ValueError, match="different grids"):
        apply_hamiltonian(psi, V)
    good = ComplexField(grid, np.ones(grid.shape, dtype=complex))
    with pytest.raises(ValueError, match="dipole"):
        apply_hamiltonian(good, V, None, 0.5)


def test_eigen_residual_shrinks_under_refinement():
    # exact harmonic ground state phi, E = 1/2; residual is O(h^4) so each
    # halving should shrink it by far more than the 4x floor asserted here
    pot = Potential(kind="custom_polynomial", x_coefficients=(0.0, 0.0, 0.5))
    res = []
    for h in (0.2, 0.1):
        g = build_grid(1, h, 8.0)
        V = potential_field(pot, g)
        x = g.meshes[0]
        phi = np.pi**-0.25 * np.exp(-0.5 * x**2)
        psi = ComplexField(g, phi.astype(complex))
        r = apply_hamiltonian(psi, V).values - 0.5 * psi.values
        res.append(np.sqrt(np.sum(np.abs(r) ** 2) * g.quadrature_weight))
    assert res[0] / res[1] >= 4.0


def test_dipole_expectation_parity_zero():
    g = build_grid(1, 0.1, 6.0)
    x = g.meshes[0]
    even = normalized(ComplexField(g, (np.exp(-0.4 * x**2)
                                       * (1 + 0.3 * np.cos(x))).astype(complex)))
    d = dipole_expectation(even, even, DipoleOperator((1.0,)))
    assert abs(d) <= 1e-8


def test_dipole_expectation_diagonal_real(well1d):
    grid, _ = well1d
    rng = np.random.default_rng(24)
    psi = random_state(grid, rng)
    d = dipole_expectation(psi, psi, DipoleOperator((1.0,)))
    assert abs(d.imag) <= 1e-10


def test_dipole_expectation_matches_sum_oracle():
    rng = np.random.default_rng(25)
    g = build_grid(2, 0.25, 2.0)
    mu = DipoleOperator((0.6, 0.8))
    chi = random_state(g, rng)
    psi = random_state(g, rng)
    got = dipole_expectation(chi, psi, mu)
    xm, ym = g.meshes
    ref = np.sum(np.conj(chi.values) * (0.6 * xm + 0.8 * ym) * psi.values)
    ref *= g.quadrature_weight
    assert abs(got - ref) <= 1e-12 * abs(ref)


def test_dipole_expectation_grid_mismatch(well1d):
    grid, _ = well1d
    other = build_grid(1, 0.1, 4.0)
    a = ComplexField(grid, np.ones(grid.shape, dtype=complex))
    b = ComplexField(other, np.ones(other.shape, dtype=complex))
    with pytest.raises(ValueError, match="grid"):
        dipole_expectation(a, b, DipoleOperator((1.0,)))
