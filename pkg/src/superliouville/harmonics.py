"""Scalar fields on the sphere: transforms, Laplacian, Green inverse,
Dirichlet energy and Moser-Trudinger checks."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable

import numpy as np
from scipy.special import logsumexp

from . import _sht
from .geometry import FOUR_PI, GridError, SphereGrid, integrate

__all__ = [
    "ScalarField",
    "analyze",
    "synthesize",
    "laplacian",
    "green_solve",
    "green_kernel",
    "dirichlet_energy",
    "dirichlet_energy_quadrature",
    "mt_check",
    "MTResult",
    "MTPreconditionError",
    "MT_VARIANTS",
]

MT_VARIANTS = ("standard", "centroid_sharp", "even")

# additive constant making the closed-form kernel mean-zero in each variable
GREEN_CONSTANT = (2.0 * np.log(2.0) - 1.0) / FOUR_PI


class ScalarField:
    """Real function on the sphere held as grid values plus harmonic coefficients.

    Fields built from coefficients are band-limited and their grid values are
    the exact synthesis.  Fields built from point values (exponentials,
    pullbacks) keep those values verbatim; their coefficients are the
    quadrature projection onto degrees ``<= band``.
    """

    def __init__(self, grid: SphereGrid, values: np.ndarray, band: int, coeffs: np.ndarray | None = None):
        if band > grid.max_band:
            raise GridError(f"band {band} exceeds grid capability {grid.max_band}")
        values = np.asarray(values, dtype=float).reshape(grid.shape)
        values.setflags(write=False)
        self.grid = grid
        self.band = int(band)
        self.values = values
        self.band_limited = coeffs is not None
        if coeffs is not None:
            coeffs = np.asarray(coeffs, dtype=float)
            coeffs.setflags(write=False)
            self.__dict__["coeffs"] = coeffs

    @classmethod
    def from_coeffs(cls, grid: SphereGrid, coeffs) -> "ScalarField":
        coeffs = np.array(coeffs, dtype=float)
        band = _sht.band_of(coeffs.size)
        return cls(grid, _sht.synthesize(grid, coeffs, band), band, coeffs)

    @classmethod
    def from_values(cls, grid: SphereGrid, values, band: int | None = None) -> "ScalarField":
        return cls(grid, values, grid.L if band is None else band)

    @classmethod
    def constant(cls, grid: SphereGrid, c: float, band: int | None = None) -> "ScalarField":
        band = grid.L if band is None else band
        coeffs = np.zeros(_sht.n_coeffs(band))
        coeffs[0] = c * np.sqrt(FOUR_PI)
        return cls(grid, np.full(grid.shape, float(c)), band, coeffs)

    @classmethod
    def from_function(cls, grid: SphereGrid, func: Callable[[np.ndarray], np.ndarray], band: int | None = None):
        """Sample ``func(nodes)`` (nodes of shape ``(..., 3)``) on the grid."""
        return cls.from_values(grid, func(grid.nodes), band)

    @classmethod
    def zonal(cls, grid: SphereGrid, legendre_coeffs, band: int | None = None) -> "ScalarField":
        """``sum_l a_l P_l(x_3)`` with unnormalised Legendre polynomials."""
        a = np.asarray(legendre_coeffs, dtype=float)
        band = max(grid.L if band is None else band, a.size - 1)
        coeffs = np.zeros(_sht.n_coeffs(band))
        for l, al in enumerate(a):
            coeffs[_sht.index(l, 0)] = al * np.sqrt(FOUR_PI / (2 * l + 1))
        return cls.from_coeffs(grid, coeffs)

    @cached_property
    def coeffs(self) -> np.ndarray:
        c = _sht.analyze(self.grid, self.values, self.band)
        c.setflags(write=False)
        return c

    def integral(self) -> float:
        return float(integrate(self.grid, self.values))

    def mean(self) -> float:
        return self.integral() / FOUR_PI

    def gradient(self) -> np.ndarray:
        """Cartesian surface gradient on the grid, shape ``grid.shape + (3,)``."""
        return _sht.synthesize_gradient(self.grid, self.coeffs, self.band)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Evaluate the band-``band`` expansion at arbitrary unit vectors."""
        return _sht.evaluate_at(points, self.coeffs, self.band)

    def truncated(self, band: int) -> "ScalarField":
        return ScalarField.from_coeffs(self.grid, _sht.resize(np.asarray(self.coeffs), band))

    def parity_residual(self) -> float:
        """Largest odd-degree coefficient relative to the field scale."""
        c = np.asarray(self.coeffs)
        odd = _sht.degrees(self.band) % 2 == 1
        scale = max(1.0, float(np.abs(c).max(initial=0.0)))
        return float(np.abs(c[odd]).max(initial=0.0)) / scale

    def is_positive(self) -> bool:
        return bool(np.all(self.values > 0))

    def __add__(self, other):
        if isinstance(other, ScalarField):
            if self.band_limited and other.band_limited:
                band = max(self.band, other.band)
                return ScalarField.from_coeffs(
                    self.grid, _sht.resize(np.asarray(self.coeffs), band) + _sht.resize(np.asarray(other.coeffs), band)
                )
            return ScalarField(self.grid, self.values + other.values, max(self.band, other.band))
        c = float(other)
        if self.band_limited:
            coeffs = np.array(self.coeffs)
            coeffs[0] += c * np.sqrt(FOUR_PI)
            return ScalarField.from_coeffs(self.grid, coeffs)
        return ScalarField(self.grid, self.values + c, self.band)

    __radd__ = __add__

    def __mul__(self, k: float) -> "ScalarField":
        k = float(k)
        if self.band_limited:
            return ScalarField.from_coeffs(self.grid, k * np.asarray(self.coeffs))
        return ScalarField(self.grid, k * self.values, self.band)

    __rmul__ = __mul__

    def __neg__(self):
        return self * -1.0

    def __repr__(self):
        kind = "band-limited" if self.band_limited else "sampled"
        return f"ScalarField({kind}, band={self.band}, grid={self.grid.shape})"


def analyze(grid: SphereGrid, values, band: int) -> np.ndarray:
    return _sht.analyze(grid, values, band)


def synthesize(grid: SphereGrid, coeffs, band: int | None = None) -> np.ndarray:
    return _sht.synthesize(grid, np.asarray(coeffs, dtype=float), band)


def laplacian(u: ScalarField) -> ScalarField:
    ell = _sht.degrees(u.band)
    return ScalarField.from_coeffs(u.grid, -ell * (ell + 1.0) * np.asarray(u.coeffs))


def green_solve(f: ScalarField, tol: float = 1e-10) -> ScalarField:
    """Mean-zero ``u`` with ``-Laplace u = f``; ``f`` must have zero mean."""
    m = f.mean()
    if abs(m) > tol:
        raise ValueError(f"green_solve needs a mean-zero right-hand side, got mean {m:.3e}")
    ell = _sht.degrees(f.band).astype(float)
    coeffs = np.zeros(_sht.n_coeffs(f.band))
    coeffs[1:] = np.asarray(f.coeffs)[1:] / (ell[1:] * (ell[1:] + 1.0))
    return ScalarField.from_coeffs(f.grid, coeffs)


def green_kernel(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Closed-form Green function of ``-Laplace`` on the unit sphere.

    ``G(x, y) = -(1/2pi) log|x - y| + c0`` with ``c0`` chosen so that
    ``int G(x, y) dv(y) = 0``.
    """
    d = np.linalg.norm(np.asarray(x) - np.asarray(y), axis=-1)
    return -np.log(d) / (2.0 * np.pi) + GREEN_CONSTANT


def dirichlet_energy(u: ScalarField) -> float:
    ell = _sht.degrees(u.band)
    c = np.asarray(u.coeffs)
    return float(np.sum(ell * (ell + 1.0) * c * c))


def dirichlet_energy_quadrature(u: ScalarField) -> float:
    g = u.gradient()
    return float(integrate(u.grid, np.sum(g * g, axis=-1)))


class MTPreconditionError(ValueError):
    """The field is outside the class a Moser-Trudinger variant applies to."""


@dataclass(frozen=True)
class MTResult:
    variant: str
    log_lhs: float
    log_rhs: float
    satisfied: bool

    @property
    def margin(self) -> float:
        """``log(rhs) - log(lhs)``; non-negative when the inequality holds."""
        return self.log_rhs - self.log_lhs

    @property
    def lhs(self) -> float:
        return float(np.exp(self.log_lhs))

    @property
    def rhs(self) -> float:
        return float(np.exp(self.log_rhs))

    def as_dict(self) -> dict:
        return {
            "variant": self.variant,
            "log_lhs": self.log_lhs,
            "log_rhs": self.log_rhs,
            "margin": self.margin,
            "satisfied": self.satisfied,
        }


def log_integral_exp(grid: SphereGrid, exponent: np.ndarray) -> float:
    """``log int e^{exponent} dv`` without overflow."""
    return float(logsumexp(exponent.ravel(), b=grid.weights.ravel()))


def normalized_centroid(f: ScalarField) -> np.ndarray:
    """``int e^{2f} x / int e^{2f}``, the centroid of the probability measure."""
    w = 2.0 * f.values
    w = np.exp(w - w.max())
    mass = integrate(f.grid, w)
    return np.array([integrate(f.grid, w * f.grid.coordinate(j)) for j in range(3)]) / mass


def mt_check(f: ScalarField, variant: str = "standard", *, centroid_tol: float = 1e-6, parity_tol: float = 1e-10) -> MTResult:
    """Evaluate one Moser-Trudinger inequality in log form.

    standard:        int e^{2f} <= 4pi exp( (1/4pi) int|grad f|^2 + 2 mean f )
    centroid_sharp:  mean e^{2f} <= exp( (1/2) mean|grad f|^2 + 2 mean f ), centroid zero
    even:            int e^{2f} <= 4pi exp( (1/8pi) int|grad f|^2 + 2 mean f ), f even
    """
    if variant not in MT_VARIANTS:
        raise ValueError(f"unknown Moser-Trudinger variant {variant!r}")
    grid = f.grid
    D = dirichlet_energy(f)
    fbar = f.mean()
    log_int = log_integral_exp(grid, 2.0 * f.values)
    if variant == "standard":
        log_lhs = log_int
        log_rhs = np.log(FOUR_PI) + D / FOUR_PI + 2.0 * fbar
    elif variant == "centroid_sharp":
        c = normalized_centroid(f)
        if np.linalg.norm(c) > centroid_tol:
            raise MTPreconditionError(f"centroid {c} is not zero (tolerance {centroid_tol})")
        log_lhs = log_int - np.log(FOUR_PI)
        log_rhs = 0.5 * D / FOUR_PI + 2.0 * fbar
    else:
        p = f.parity_residual()
        if p > parity_tol:
            raise MTPreconditionError(f"field is not even: parity residual {p:.3e}")
        log_lhs = log_int
        log_rhs = np.log(FOUR_PI) + D / (2.0 * FOUR_PI) + 2.0 * fbar
    satisfied = bool(log_lhs <= log_rhs + np.log1p(1e-10))
    return MTResult(variant, float(log_lhs), float(log_rhs), satisfied)


def random_field(grid: SphereGrid, band: int, rng: np.random.Generator, *, even: bool = False, amplitude: float | None = None) -> ScalarField:
    """Random band-limited field with coefficients in [-1, 1].

    Coefficients are uniform, damped by ``1/(1+l)`` and scaled by an overall
    amplitude drawn log-uniformly from [1e-3, 1] unless given.
    """
    ell = _sht.degrees(band)
    c = rng.uniform(-1.0, 1.0, size=_sht.n_coeffs(band)) / (1.0 + ell)
    amp = amplitude if amplitude is not None else 10.0 ** rng.uniform(-3.0, 0.0)
    c *= amp
    if even:
        c[ell % 2 == 1] = 0.0
    return ScalarField.from_coeffs(grid, c)
