import numpy as np
import pytest
from numpy.testing import assert_allclose

from superliouville.conformal import kazdan_warner
from superliouville.dirac import random_spinor
from superliouville.functional import energy
from superliouville.harmonics import ScalarField, random_field
from superliouville.solver import (
    SolveConfig,
    initial_state,
    minimize,
    newton_refine,
    pde_residual,
    resolve_gauge,
    rho_schedule,
)

from test_functional import rho_energy, rho_state


@pytest.mark.parametrize(
    "kwargs",
    [{"L": 0}, {"dirac_band": 0}, {"tol_constraint": -1.0}, {"init": "bogus"}, {"rho_step": 0.0}, {"max_outer": 0}],
)
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        SolveConfig(**kwargs)


def test_config_as_dict_round_trip():
    cfg = SolveConfig(L=12, seed=4)
    assert SolveConfig(**cfg.as_dict()) == cfg


def test_rho_schedule():
    assert_allclose(rho_schedule(SolveConfig()), np.arange(1.0, 5.01, 0.5))


@pytest.mark.parametrize("rho", [1.0, 2.0, 5.0])
def test_pde_residual_vanishes_on_rho_family(grid, psi0, rho):
    res = pde_residual(rho_state(grid, psi0, rho))
    assert res.sup_u < 1e-12
    assert res.psi_full < 1e-12
    assert res.galerkin_max() < 1e-12


def test_pde_residual_detects_perturbation(grid, psi0, rng):
    st = rho_state(grid, psi0, 2.0)
    st = st.replace(u=st.u + random_field(grid, 4, rng, amplitude=1e-2))
    assert pde_residual(st).sup_u > 1e-5


def test_newton_from_perturbed_special(grid, psi0, rng):
    st = rho_state(grid, psi0, 2.0)
    pert = st.replace(u=st.u + random_field(grid, 6, rng, amplitude=1e-3), psi=st.psi + random_spinor(st.basis, rng, 1e-3))
    out = newton_refine(pert, 1e-10)
    assert out.converged
    assert out.residual <= 1e-10
    # symmetry directions make the linearisation nearly singular
    assert out.min_singular_value < 1e-4
    assert_allclose(pde_residual(out.state).sup_u, 0.0, atol=1e-8)


def test_newton_refuses_far_start(grid, basis, one):
    st = initial_state(SolveConfig(), one, ScalarField.constant(grid, 3.0), basis, "random")
    out = newton_refine(st, 1e-10, threshold=1e-6)
    assert not out.converged and "threshold" in out.message


def test_minimize_rho_two(grid, one):
    res = minimize(SolveConfig(), one, ScalarField.constant(grid, 2.0))
    assert res.converged, res.message
    assert_allclose(res.energy, rho_energy(2.0), atol=1e-8)
    assert res.state.residuals.max_abs() <= 1e-10


@pytest.mark.parametrize("init", ["zero", "random"])
def test_minimize_trivial_branch(grid, one, init):
    res = minimize(SolveConfig(init=init, seed=3), one, ScalarField.constant(grid, 0.5))
    assert res.converged, res.message
    assert abs(res.energy) <= 1e-8
    assert res.state.psi.norm2() < 1e-12


def test_history_records(grid, one):
    seen = []
    res = minimize(SolveConfig(init="random", seed=1), one, ScalarField.constant(grid, 0.5), callback=seen.append)
    assert seen == res.history
    for rec in res.history:
        assert {"iteration", "merit", "max_residual", "energy", "stage"} <= set(rec)
    assert [r["iteration"] for r in res.history] == sorted(r["iteration"] for r in res.history)


def test_parity_requires_even_coefficients(grid, one):
    h1 = ScalarField.zonal(grid, [1.0, 0.3])
    with pytest.raises(ValueError, match="even"):
        minimize(SolveConfig(parity=True), h1, one)


def test_even_solve_kazdan_warner(grid):
    h1 = ScalarField.zonal(grid, [1.0, 0.0, 0.5])
    res = minimize(SolveConfig(parity=True), h1, ScalarField.constant(grid, 1.0))
    assert res.converged, res.message
    assert res.state.u.parity_residual() < 1e-12
    assert np.linalg.norm(kazdan_warner(res.state.u, h1)) < 1e-8


def test_truncation_artefact_is_not_reported_converged(grid):
    # at Dirac band 4 the discrete critical point leaves a spinor tail
    h1 = ScalarField.zonal(grid, [1.0, 0.0, 0.5])
    res = minimize(SolveConfig(parity=True, dirac_band=4), h1, ScalarField.constant(grid, 2.0))
    assert not res.converged
    assert pde_residual(res.state).psi_tail > 1e-6


def test_energy_matches_result(grid, one):
    res = minimize(SolveConfig(init="zero"), one, ScalarField.constant(grid, 0.5))
    assert res.energy == energy(res.state)
    assert res.summary()["converged"] == res.converged


def test_resolve_gauge(grid, one):
    h1 = ScalarField.zonal(grid, [1.0, 0.0, 0.5])
    two = ScalarField.constant(grid, 2.0)
    assert resolve_gauge(SolveConfig(), one, two) == 1.0
    assert resolve_gauge(SolveConfig(), h1, two) == 0.0
    assert resolve_gauge(SolveConfig(gauge_weight=0.0), one, two) == 0.0


@pytest.mark.parametrize("seed", [1, 2, 5])
def test_random_start_lands_on_a_resolved_branch(grid, one, seed):
    # either the trivial branch or the centroid-zero member of the rho = 2 family
    res = minimize(SolveConfig(init="random", seed=seed), one, ScalarField.constant(grid, 2.0))
    assert res.converged, res.message
    assert min(abs(res.energy), abs(res.energy - rho_energy(2.0))) < 1e-8
