import json

import numpy as np
import pytest
from numpy.testing import assert_array_equal

from superliouville.checkpoint import CheckpointError, CheckpointVersionError, load, save
from superliouville.config import ConfigError, RunConfig, load_config, parse_config
from superliouville.diagnostics import run_diagnostics
from superliouville.dirac import random_spinor
from superliouville.functional import SolutionPair
from superliouville.harmonics import ScalarField, random_field

from test_functional import rho_state


@pytest.fixture
def state(grid, basis, rng):
    u = random_field(grid, 10, rng)
    h1 = ScalarField.zonal(grid, [1.0, 0.0, 0.5])
    return SolutionPair(u, random_spinor(basis, rng), h1, ScalarField.constant(grid, 2.0))


def test_checkpoint_round_trip_bit_exact(tmp_path, state):
    path = save(state, tmp_path / "a.ckpt", {"seed": 3})
    ck = load(path)
    assert_array_equal(ck.state.u.coeffs, state.u.coeffs)
    assert_array_equal(ck.state.psi.coeffs, state.psi.coeffs)
    assert_array_equal(ck.state.h1.coeffs, state.h1.coeffs)
    assert ck.provenance["seed"] == 3 and "tool_version" in ck.provenance
    save(ck.state, tmp_path / "b.ckpt", {"seed": 3})
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert not list(tmp_path.glob("*.tmp"))


def test_checkpoint_mismatch_names_both_values(tmp_path, state):
    path = save(state, tmp_path / "a.ckpt")
    with pytest.raises(CheckpointError, match="L=16.*L=24"):
        load(path, expect_L=24)
    with pytest.raises(CheckpointError, match="band=4.*band=6"):
        load(path, expect_band=6)


def test_checkpoint_future_version(tmp_path, state):
    path = save(state, tmp_path / "a.ckpt")
    lines = path.read_text().splitlines()
    lines[0] = "superliouville-checkpoint 2"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CheckpointVersionError, match="version 2"):
        load(path)


@pytest.mark.parametrize("edit", ["truncate", "phase", "garbage", "missing"])
def test_checkpoint_corruption(tmp_path, state, edit):
    path = save(state, tmp_path / "a.ckpt")
    lines = path.read_text().splitlines()
    if edit == "truncate":
        lines = lines[: len(lines) // 2]
    elif edit == "phase":
        lines[3] = "phase_tag some-other-convention"
    elif edit == "garbage":
        lines[7] = "not-a-number"
    path.write_text("\n".join(lines) + "\n")
    target = tmp_path / "nope.ckpt" if edit == "missing" else path
    with pytest.raises(CheckpointError):
        load(target)


def test_config_defaults():
    cfg = parse_config("")
    assert cfg == RunConfig()
    assert cfg.h2.value == 2.0


def test_config_full(tmp_path, grid):
    text = """
# comment
grid.L = 12
dirac.band = 5
solve.tol_constraint = 1e-9
solve.max_iter = 7
solve.parity = true
solve.seed = 42
h1.kind = legendre
h1.coeffs = 1, 0, 0.5
h2.value = 3
diagnostics.radii = 0.25 0.5
"""
    p = tmp_path / "run.cfg"
    p.write_text(text)
    cfg = load_config(p)
    assert (cfg.solve.L, cfg.solve.dirac_band, cfg.solve.max_outer, cfg.solve.seed) == (12, 5, 7, 42)
    assert cfg.solve.parity is True
    assert cfg.h1.coeffs == (1.0, 0.0, 0.5)
    assert cfg.radii == (0.25, 0.5)
    h1 = cfg.h1.build(grid)
    assert np.isclose(h1.evaluate(np.array([[0.0, 0.0, 1.0]]))[0], 1.5)
    assert cfg.hash() == load_config(p).hash()
    assert cfg.hash() != parse_config("").hash()


@pytest.mark.parametrize(
    "text, match",
    [
        ("grid.l = 16", "unknown"),
        ("bogus = 1", "unknown"),
        ("grid.L = sixteen", "grid.L"),
        ("solve.parity = maybe", "boolean"),
        ("[solve]\ntol = 1", "section"),
        ("grid.L = 0", "L"),
        ("h1.kind = spline", "h1.kind"),
        ("h1.kind = legendre", "required"),
        ("h2.kind = ylm\nh2.coeffs = 1 2", "square"),
        ("h1.value = 2\nh1.coeffs = 1", "only used"),
        ("diagnostics.radii = 4", "radii"),
        ("grid.L = 8\ngrid.L = 9", "malformed"),
    ],
)
def test_config_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_config_missing_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "none.cfg")


def test_diagnostics_on_rho_family(grid, psi0):
    rep = run_diagnostics(rho_state(grid, psi0, 2.0))
    assert rep.passed, rep.failures()
    d = rep.as_dict()
    assert d["checks"]["kazdan_warner"] == "pass"
    assert d["checks"]["mt_standard"] == "pass"
    assert d["coupling_window"]["within"]
    for key in ("stokes_residual", "nehari_residual", "pde_residual", "spinor_norms", "holder_checks", "mt_results", "concentration_map"):
        assert key in d
    json.loads(rep.to_json())


def test_diagnostics_flags_off_constraint_state(state):
    rep = run_diagnostics(state)
    assert not rep.passed
    assert "stokes" in rep.failures()
    assert rep.checks["reduced_energy"] == "not-applicable"
    assert rep.checks["coupling_window"] == "not-applicable"


def test_config_gauge_weight():
    assert parse_config("").solve.gauge_weight is None
    assert parse_config("solve.gauge_weight = auto").solve.gauge_weight is None
    assert parse_config("solve.gauge_weight = 0").solve.gauge_weight == 0.0
    with pytest.raises(ConfigError):
        parse_config("solve.gauge_weight = -1")


def test_config_inline_comments():
    cfg = parse_config("h1.kind = legendre   # zonal\nh1.coeffs = 1, 0, 0.5  # 1 + 0.5 P2\n; full-line comment\n")
    assert cfg.h1.coeffs == (1.0, 0.0, 0.5)
