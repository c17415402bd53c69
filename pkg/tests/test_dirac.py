import time

import numpy as np
import pytest
from numpy.testing import assert_allclose

from superliouville.dirac import (
    PHASE_TAG,
    BasisMismatchError,
    SpinorState,
    apply_dirac,
    build_basis,
    dirac_pairing,
    evaluate_bilinear,
    gram_matrix,
    h_half_norm,
    l4_ratio,
    random_spinor,
    spectrum_table,
    split_pm,
    wigner_d,
)
from superliouville.geometry import FOUR_PI, GridError, build_grid, integrate

THETA = np.linspace(0.05, np.pi - 0.05, 41)


def test_wigner_d_closed_forms():
    c, s = np.cos(THETA / 2), np.sin(THETA / 2)
    assert_allclose(wigner_d(0.5, 0.5, 0.5, THETA), c, atol=1e-14)
    assert_allclose(wigner_d(0.5, -0.5, 0.5, THETA), s, atol=1e-14)
    assert_allclose(wigner_d(0.5, 0.5, -0.5, THETA), -s, atol=1e-14)
    assert_allclose(wigner_d(1, 1, 0, THETA), -np.sin(THETA) / np.sqrt(2), atol=1e-14)
    assert_allclose(wigner_d(1, 0, 0, THETA), np.cos(THETA), atol=1e-14)
    assert_allclose(wigner_d(1.5, 1.5, 0.5, THETA), -np.sqrt(3) * c**2 * s, atol=1e-14)


@pytest.mark.parametrize("j", [0.5, 1.5, 2.5, 3.5])
def test_wigner_d_unitary_columns(j):
    for mp in (0.5, -0.5):
        total = sum(wigner_d(j, m, mp, THETA) ** 2 for m in np.arange(-j, j + 1))
        assert_allclose(total, 1.0, atol=1e-12)


def _eth(f, m, s, h):
    # eth on spin weight s, profile f(theta) e^{i m phi}, central differences
    t = THETA
    g = lambda x: np.sin(x) ** (-s) * f(x)
    dg = (g(t + h) - g(t - h)) / (2 * h)
    return -np.sin(t) ** s * (dg - m / np.sin(t) * g(t))


def _ethb(f, m, s, h):
    t = THETA
    g = lambda x: np.sin(x) ** s * f(x)
    dg = (g(t + h) - g(t - h)) / (2 * h)
    return -np.sin(t) ** (-s) * (dg + m / np.sin(t) * g(t))


def test_profiles_satisfy_eth_relations():
    grid = build_grid(8)
    basis = build_basis(grid, 4)
    h = 1e-5
    for n in range(basis.size):
        j, m = basis.j[n], basis.m[n]
        a = lambda x: basis.profiles_at(x)[0][n]
        b = lambda x: basis.profiles_at(x)[1][n]
        A, B = basis.profiles_at(THETA)
        assert_allclose(_eth(a, m, -0.5, h), (j + 0.5) * B[n], atol=1e-6)
        assert_allclose(_ethb(b, m, 0.5, h), -(j + 0.5) * A[n], atol=1e-6)


def test_basis_counts_and_order():
    basis = build_basis(build_grid(16), 5)
    assert basis.size == 60
    assert basis.multiplicities() == spectrum_table(5)
    assert spectrum_table(3) == {-3: 6, -2: 4, -1: 2, 1: 2, 2: 4, 3: 6}
    assert np.all(np.diff(np.abs(basis.eigenvalues)) >= 0)
    assert basis.phase_tag == PHASE_TAG


def test_orthonormality(basis):
    assert_allclose(gram_matrix(basis), np.eye(basis.size), atol=1e-12)


def test_build_time_band5():
    grid = build_grid(16)
    t0 = time.perf_counter()
    basis = build_basis(grid, 5)
    _ = basis.components
    assert time.perf_counter() - t0 < 10.0


def test_band_guard():
    grid = build_grid(4)
    with pytest.raises(GridError):
        build_basis(grid, 6)
    with pytest.raises(ValueError):
        build_basis(grid, 0)


def test_killing_spinor_constant_length(basis, psi0):
    assert_allclose(psi0.density, 1.0, atol=1e-12)
    assert_allclose(psi0.norm2(), FOUR_PI, rtol=1e-12)
    assert_allclose(apply_dirac(basis, psi0).coeffs, psi0.coeffs)


def test_every_unit_lambda_one_spinor_has_constant_length(basis):
    rng = np.random.default_rng(3)
    idx = np.flatnonzero(basis.eigenvalues == 1.0)
    for _ in range(5):
        a = np.zeros(basis.size, dtype=complex)
        a[idx] = rng.standard_normal(idx.size) + 1j * rng.standard_normal(idx.size)
        d = SpinorState(basis, a).density
        assert np.ptp(d) < 1e-12 * d.mean()


def test_split_and_norms(basis, rng):
    psi = random_spinor(basis, rng)
    plus, minus = split_pm(psi)
    assert_allclose((plus + minus).coeffs, psi.coeffs)
    assert_allclose(plus.norm2() + minus.norm2(), psi.norm2(), rtol=1e-12)
    hh = h_half_norm(psi)
    lam = np.abs(basis.eigenvalues)
    assert_allclose(hh.hilbert_norm2, np.sum((1 + lam) * np.abs(psi.coeffs) ** 2))
    assert hh.equivalent_norm2 <= hh.hilbert_norm2
    # equivalence constant for |lambda| >= 1
    assert hh.hilbert_norm2 <= 2 * hh.equivalent_norm2 + 1e-12
    assert_allclose(dirac_pairing(psi), dirac_pairing(plus) + dirac_pairing(minus), rtol=1e-12)
    assert dirac_pairing(plus) >= 0 >= dirac_pairing(minus)


def test_quadrature_norm_matches_coefficients(basis, rng):
    psi = random_spinor(basis, rng)
    assert_allclose(integrate(basis.grid, psi.density), psi.norm2(), rtol=1e-12)
    assert_allclose(evaluate_bilinear(psi, psi).real, psi.norm2(), rtol=1e-12)


def test_gram_matrix_weighted(basis, grid, rng):
    w = 1.0 + 0.3 * grid.coordinate(2) ** 2
    G = gram_matrix(basis, w)
    assert_allclose(G, G.conj().T, atol=1e-14)
    psi = random_spinor(basis, rng)
    chi = random_spinor(basis, rng)
    assert_allclose(np.vdot(chi.coeffs, G @ psi.coeffs), evaluate_bilinear(psi, chi, w), rtol=1e-11)
    assert np.linalg.eigvalsh(G).min() > 0


def test_weight_mismatch(basis):
    with pytest.raises(BasisMismatchError):
        gram_matrix(basis, np.ones((3, 3)))


def test_bases_on_different_grids_do_not_mix(basis):
    other = build_basis(build_grid(12), 4)
    with pytest.raises(BasisMismatchError):
        evaluate_bilinear(SpinorState.zero(basis), SpinorState.zero(other))


def test_density_at_matches_grid(basis, grid, rng):
    psi = random_spinor(basis, rng)
    pts = grid.nodes[5, :7]
    assert_allclose(psi.density_at(pts), psi.density[5, :7], rtol=1e-12)


def test_l4_ratio(basis, psi0):
    assert l4_ratio(SpinorState.zero(basis)) == 0.0
    # constant length one: ||psi||_4 = (4pi)^(1/4), H^1/2 norm^2 = 2 * 4pi
    assert_allclose(l4_ratio(psi0), FOUR_PI**0.25 / np.sqrt(2 * FOUR_PI), rtol=1e-12)
