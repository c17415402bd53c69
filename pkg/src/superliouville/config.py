"""Flat ``key = value`` run configuration.

Keys use dotted names (``grid.L``, ``solve.tol_constraint``, ...).  The file
is read with :mod:`configparser` under an implicit section, so ``#`` and
``;`` comments work.  Unknown keys are errors.
"""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _sht
from .geometry import SphereGrid
from .harmonics import ScalarField
from .solver import SolveConfig

__all__ = ["ConfigError", "CoefficientSpec", "RunConfig", "parse_config", "load_config", "KNOWN_KEYS"]


class ConfigError(ValueError):
    pass


# key -> (SolveConfig field or None, parser)
_SOLVE_KEYS = {
    "grid.L": ("L", int),
    "dirac.band": ("dirac_band", int),
    "solve.tol_constraint": ("tol_constraint", float),
    "solve.tol_gradient": ("tol_gradient", float),
    "solve.tol_residual": ("tol_residual", float),
    "solve.tol_pde": ("tol_pde", float),
    "solve.max_iter": ("max_outer", int),
    "solve.max_inner": ("max_inner", int),
    "solve.parity": ("parity", "bool"),
    "solve.seed": ("seed", int),
    "solve.init": ("init", str),
    "solve.noise": ("noise", float),
    "solve.penalty": ("penalty", float),
    "solve.penalty_growth": ("penalty_growth", float),
    "solve.newton_threshold": ("newton_threshold", float),
    "solve.gauge_weight": ("gauge_weight", lambda t: None if t.strip().lower() == "auto" else float(t)),
    "continuation.rho_start": ("rho_start", float),
    "continuation.rho_end": ("rho_end", float),
    "continuation.rho_step": ("rho_step", float),
}
_OTHER_KEYS = {"h1.kind", "h1.value", "h1.coeffs", "h2.kind", "h2.value", "h2.coeffs", "diagnostics.radii"}
KNOWN_KEYS = frozenset(_SOLVE_KEYS) | _OTHER_KEYS

H_KINDS = ("constant", "legendre", "ylm")


@dataclass(frozen=True)
class CoefficientSpec:
    """``h`` as a constant, Legendre series in ``x3``, or flat ``Y_lm`` coefficients."""

    kind: str = "constant"
    value: float = 1.0
    coeffs: tuple[float, ...] = ()

    def build(self, grid: SphereGrid) -> ScalarField:
        if self.kind == "constant":
            return ScalarField.constant(grid, self.value)
        if self.kind == "legendre":
            return ScalarField.zonal(grid, self.coeffs)
        c = np.asarray(self.coeffs, dtype=float)
        band = _sht.band_of(c.size)
        return ScalarField.from_coeffs(grid, _sht.resize(c, max(band, grid.L)))

    def as_dict(self) -> dict:
        return {"kind": self.kind, "value": self.value, "coeffs": list(self.coeffs)}


@dataclass(frozen=True)
class RunConfig:
    solve: SolveConfig = field(default_factory=SolveConfig)
    h1: CoefficientSpec = field(default_factory=CoefficientSpec)
    h2: CoefficientSpec = field(default_factory=lambda: CoefficientSpec("constant", 2.0))
    radii: tuple[float, ...] = (0.5,)

    def as_dict(self) -> dict:
        return {"solve": self.solve.as_dict(), "h1": self.h1.as_dict(), "h2": self.h2.as_dict(), "radii": list(self.radii)}

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.as_dict(), sort_keys=True).encode()).hexdigest()[:16]


def _floats(text: str, key: str) -> tuple[float, ...]:
    try:
        return tuple(float(t) for t in text.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"{key}: expected a list of numbers, got {text!r}") from None


def _bool(text: str, key: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}")


def _h_spec(items: dict, name: str, default: CoefficientSpec) -> CoefficientSpec:
    kind = items.get(f"{name}.kind")
    if kind is None:
        kind = "legendre" if f"{name}.coeffs" in items else "constant"
    if kind not in H_KINDS:
        raise ConfigError(f"{name}.kind must be one of {H_KINDS}, got {kind!r}")
    if kind == "constant":
        if f"{name}.coeffs" in items:
            raise ConfigError(f"{name}.coeffs is not used with kind 'constant'")
        text = items.get(f"{name}.value")
        try:
            value = default.value if text is None else float(text)
        except ValueError:
            raise ConfigError(f"{name}.value: expected a number, got {text!r}") from None
        return CoefficientSpec("constant", value)
    if f"{name}.value" in items:
        raise ConfigError(f"{name}.value is only used with kind 'constant'")
    if f"{name}.coeffs" not in items:
        raise ConfigError(f"{name}.coeffs is required for kind {kind!r}")
    coeffs = _floats(items[f"{name}.coeffs"], f"{name}.coeffs")
    if kind == "ylm":
        try:
            _sht.band_of(len(coeffs))
        except ValueError:
            raise ConfigError(f"{name}.coeffs: {len(coeffs)} is not a square number of Y_lm coefficients") from None
    return CoefficientSpec(kind, 1.0, coeffs)


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None, strict=True, inline_comment_prefixes=("#",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    if parser.sections() != ["run"]:
        raise ConfigError("section headers are not used; write dotted keys such as grid.L = 16")
    items = dict(parser.items("run"))
    unknown = sorted(set(items) - KNOWN_KEYS)
    if unknown:
        raise ConfigError(f"unknown configuration keys: {', '.join(unknown)}")
    kwargs = {}
    for key, (attr, conv) in _SOLVE_KEYS.items():
        if key not in items:
            continue
        text_v = items[key]
        if conv == "bool":
            kwargs[attr] = _bool(text_v, key)
            continue
        try:
            kwargs[attr] = conv(text_v)
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {text_v!r}") from None
    try:
        solve = SolveConfig(**kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    defaults = RunConfig()
    h1 = _h_spec(items, "h1", defaults.h1)
    h2 = _h_spec(items, "h2", defaults.h2)
    radii = _floats(items["diagnostics.radii"], "diagnostics.radii") if "diagnostics.radii" in items else defaults.radii
    if any(not (0 < r <= np.pi) for r in radii):
        raise ConfigError("diagnostics.radii must lie in (0, pi]")
    return RunConfig(solve, h1, h2, radii)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read configuration {path}: {exc}") from None
    return parse_config(text)
