"""Aggregate every identity and inequality check for one state into a report."""

from __future__ import annotations

import datetime as _dt
import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .conformal import kazdan_warner
from .dirac import h_half_norm, l4_ratio, split_pm
from .functional import (
    SolutionPair,
    centroid,
    coupling_integral,
    energy,
    holder_check,
    reduced_energy,
    s_functional,
)
from .geometry import FOUR_PI, ball_mass_map, integrate
from .harmonics import MT_VARIANTS, MTPreconditionError, mt_check
from .solver import pde_residual

__all__ = ["DiagnosticOptions", "DiagnosticsReport", "run_diagnostics", "REPORT_SCHEMA_VERSION"]

REPORT_SCHEMA_VERSION = 1

PASS, FAIL, NA = "pass", "fail", "not-applicable"


@dataclass(frozen=True)
class DiagnosticOptions:
    tol_constraint: float = 1e-8
    tol_pde: float = 1e-6
    tol_kw: float = 1e-5
    tol_window: float = 1e-8
    tol_reduced: float = 1e-8
    holder_alphas: tuple[float, ...] = (2.0, 4.0)
    radii: tuple[float, ...] = (0.5,)
    constant_tol: float = 1e-10


@dataclass
class DiagnosticsReport:
    """Structured record of all checks; ``checks`` maps names to pass/fail/not-applicable."""

    data: dict[str, Any]
    checks: dict[str, str]
    generated_at: str = field(default_factory=lambda: _dt.datetime.now(_dt.timezone.utc).isoformat())

    @property
    def passed(self) -> bool:
        return all(v != FAIL for v in self.checks.values())

    def failures(self) -> list[str]:
        return sorted(k for k, v in self.checks.items() if v == FAIL)

    def as_dict(self) -> dict:
        out = {"schema_version": REPORT_SCHEMA_VERSION, "generated_at": self.generated_at, "passed": self.passed}
        out["checks"] = dict(sorted(self.checks.items()))
        out.update(self.data)
        return out

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True) + "\n"


def _status(ok: bool) -> str:
    return PASS if ok else FAIL


def _is_constant(f, tol) -> bool:
    return float(np.ptp(f.values)) <= tol


def run_diagnostics(state: SolutionPair, options: DiagnosticOptions | None = None, extra: dict | None = None) -> DiagnosticsReport:
    opt = options or DiagnosticOptions()
    grid = state.grid
    checks: dict[str, str] = {}
    data: dict[str, Any] = {}

    res = state.residuals
    data["stokes_residual"] = res.R_mass
    data["nehari_residual"] = res.R_nehari
    data["neg_constraint_max"] = res.neg_max
    data["dirac_band"] = state.basis.band
    data["grid_L"] = grid.L
    checks["stokes"] = _status(abs(res.R_mass) <= opt.tol_constraint)
    checks["nehari"] = _status(abs(res.R_nehari) <= opt.tol_constraint)
    checks["negative_part"] = _status(res.neg_max <= opt.tol_constraint)
    on_A = res.max_abs() <= opt.tol_constraint

    pde = pde_residual(state)
    data["pde_residual"] = pde.as_dict()
    checks["pde_residual"] = _status(pde.sup_u <= opt.tol_pde and pde.psi_full <= opt.tol_pde)

    E = energy(state)
    Er = reduced_energy(state)
    data["energy"] = E
    data["reduced_energy"] = Er
    checks["reduced_energy"] = _status(abs(E - Er) <= opt.tol_reduced * (1 + abs(E))) if on_A else NA

    kw = kazdan_warner(state.u, state.h1)
    kw_applicable = _is_constant(state.h2, opt.constant_tol)
    data["kazdan_warner"] = {"vector": [float(v) for v in kw], "norm": float(np.linalg.norm(kw)), "applicable": kw_applicable}
    checks["kazdan_warner"] = _status(np.linalg.norm(kw) <= opt.tol_kw) if kw_applicable else NA

    psi = state.psi
    plus, minus = split_pm(psi)
    hh = h_half_norm(psi)
    data["spinor_norms"] = {
        "l2": float(np.sqrt(psi.norm2())),
        "l4": float(integrate(grid, psi.density**2) ** 0.25),
        "h_half_hilbert": float(np.sqrt(hh.hilbert_norm2)),
        "h_half_equivalent": float(np.sqrt(hh.equivalent_norm2)),
        "plus_l2": float(np.sqrt(plus.norm2())),
        "minus_l2": float(np.sqrt(minus.norm2())),
        "l4_over_h_half": l4_ratio(psi),
    }
    checks["spinor_norms_finite"] = _status(all(np.isfinite(v) for v in data["spinor_norms"].values()))

    coup = coupling_integral(state)
    window_ok = -opt.tol_window <= coup <= FOUR_PI + opt.tol_window
    data["coupling_window"] = {"value": coup, "lower": 0.0, "upper": FOUR_PI, "within": bool(window_ok)}
    checks["coupling_window"] = _status(window_ok) if abs(res.R_mass) <= opt.tol_constraint else NA

    holder = [holder_check(state, a) for a in opt.holder_alphas]
    data["holder_checks"] = [h.as_dict() for h in holder]
    checks["holder"] = _status(all(h.satisfied for h in holder))

    mt = {}
    for variant in MT_VARIANTS:
        try:
            r = mt_check(state.u, variant)
        except MTPreconditionError as exc:
            mt[variant] = {"applicable": False, "reason": str(exc)}
            checks[f"mt_{variant}"] = NA
        else:
            mt[variant] = {"applicable": True, **r.as_dict()}
            checks[f"mt_{variant}"] = _status(r.satisfied)
    data["mt_results"] = mt

    density = state.mass_density()
    conc = []
    for r in opt.radii:
        m = ball_mass_map(grid, density, r)
        i = np.unravel_index(int(np.argmax(m)), m.shape)
        conc.append(
            {
                "radius": float(r),
                "max_mass": float(m[i]),
                "center": [float(v) for v in grid.nodes[i]],
                "below_threshold": bool(m[i] < 2 * np.pi),
            }
        )
    # informational: the smallness condition is a hypothesis, not an identity
    data["concentration_map"] = conc

    data["s_functional"] = s_functional(state.u)
    data["centroid"] = [float(v) for v in centroid(state.u)]
    if extra:
        data.update(extra)
    return DiagnosticsReport(data, checks)
