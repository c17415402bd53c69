"""Quadrature grid on the unit sphere and grid-level integration.

The grid is a Gauss-Legendre rule in cos(colatitude) times an equispaced
longitude rule.  With ``n_theta`` latitude rings and ``n_phi = 2 * n_theta``
meridians, every polynomial of degree ``<= 2 * n_theta - 1`` is integrated
exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

FOUR_PI = 4.0 * np.pi

#: Refuse grids with more nodes than this unless the caller raises the cap.
DEFAULT_MAX_NODES = 4_000_000


class GridError(ValueError):
    """Invalid grid request or misaligned grid data."""


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Gauss-Legendre x uniform-longitude product grid.

    Arrays are laid out ring-major: ``values[i, j]`` lives at colatitude
    ``theta[i]`` and longitude ``phi[j]``.
    """

    L: int
    n_theta: int
    n_phi: int
    cos_theta: np.ndarray = field(repr=False)
    ring_weights: np.ndarray = field(repr=False)

    def __post_init__(self):
        for arr in (self.cos_theta, self.ring_weights):
            arr.setflags(write=False)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n_theta, self.n_phi)

    @property
    def size(self) -> int:
        return self.n_theta * self.n_phi

    @property
    def L_exact(self) -> int:
        """Largest total polynomial degree integrated exactly."""
        return min(2 * self.n_theta - 1, self.n_phi - 1)

    @property
    def max_band(self) -> int:
        """Largest band for which analysis is exact on band-limited input."""
        return self.L_exact // 2

    @property
    def theta(self) -> np.ndarray:
        return np.arccos(self.cos_theta)

    @property
    def sin_theta(self) -> np.ndarray:
        return np.sqrt(1.0 - self.cos_theta**2)

    @property
    def phi(self) -> np.ndarray:
        return 2.0 * np.pi * np.arange(self.n_phi) / self.n_phi

    @property
    def weights(self) -> np.ndarray:
        """Node weights, shape ``(n_theta, n_phi)``; they sum to 4*pi."""
        return np.outer(self.ring_weights, np.full(self.n_phi, 2.0 * np.pi / self.n_phi))

    @property
    def nodes(self) -> np.ndarray:
        """Unit vectors, shape ``(n_theta, n_phi, 3)``."""
        st = self.sin_theta[:, None]
        ph = self.phi[None, :]
        return np.stack(
            [st * np.cos(ph), st * np.sin(ph), np.broadcast_to(self.cos_theta[:, None], (self.n_theta, self.n_phi))],
            axis=-1,
        )

    def coordinate(self, j: int) -> np.ndarray:
        """Values of the coordinate function x_j (j = 0, 1, 2) on the grid."""
        return self.nodes[..., j]

    def same_as(self, other: "SphereGrid") -> bool:
        return self is other or (self.n_theta == other.n_theta and self.n_phi == other.n_phi)


def build_grid(L: int, *, oversample: int = 2, max_nodes: int = DEFAULT_MAX_NODES) -> SphereGrid:
    """Build the working grid for band ``L``.

    ``n_theta = oversample * (L + 1)`` rings, so the default gives
    ``L_exact = 4L + 3``, comfortably above ``2L + 2``.
    """
    if not isinstance(L, (int, np.integer)) or L < 1:
        raise GridError(f"band L must be a positive integer, got {L!r}")
    if oversample < 1:
        raise GridError(f"oversample must be >= 1, got {oversample}")
    n_theta = oversample * (int(L) + 1)
    n_phi = 2 * n_theta
    if n_theta * n_phi > max_nodes:
        raise GridError(f"grid of {n_theta}x{n_phi} nodes exceeds the cap of {max_nodes}")
    x, w = np.polynomial.legendre.leggauss(n_theta)
    # north pole first
    order = np.argsort(-x)
    return SphereGrid(L=int(L), n_theta=n_theta, n_phi=n_phi, cos_theta=x[order].copy(), ring_weights=w[order].copy())


def _check_aligned(grid: SphereGrid, values) -> np.ndarray:
    values = np.asarray(values)
    if values.shape == grid.shape:
        return values
    if values.ndim == 1 and values.size == grid.size:
        return values.reshape(grid.shape)
    raise GridError(f"values of shape {values.shape} do not match grid {grid.shape}")


def integrate(grid: SphereGrid, values) -> float | complex:
    """Quadrature sum of ``values`` over the sphere."""
    values = _check_aligned(grid, values)
    # ring sums first keeps the accumulation order fixed
    ring = values.sum(axis=1)
    return (2.0 * np.pi / grid.n_phi) * np.dot(grid.ring_weights, ring)


def mean(grid: SphereGrid, values) -> float:
    return integrate(grid, values) / FOUR_PI


def geodesic_distance(points: np.ndarray, center: Sequence[float]) -> np.ndarray:
    """Great-circle distance from each of ``points[..., 3]`` to ``center``."""
    c = np.asarray(center, dtype=float)
    return np.arccos(np.clip(points @ c, -1.0, 1.0))


def cap_multipliers(band: int, radius: float) -> np.ndarray:
    """Funk-Hecke multipliers of the indicator of a geodesic cap.

    Entry ``l`` is ``2*pi * int_{cos r}^{1} P_l(s) ds``, so that for a
    band-limited density with real-harmonic coefficients ``f_lm`` the mass of
    the cap centred at ``c`` is ``sum_lm mult[l] f_lm Y_lm(c)``.
    """
    c = np.cos(radius)
    P = np.polynomial.legendre.legvander(np.array([c]), band + 1)[0]
    out = np.empty(band + 1)
    out[0] = 2.0 * np.pi * (1.0 - c)
    for l in range(1, band + 1):
        out[l] = 2.0 * np.pi * (P[l - 1] - P[l + 1]) / (2 * l + 1)
    return out


def ball_mass(
    grid: SphereGrid,
    density,
    center: Sequence[float],
    r: float,
    *,
    method: str = "spectral",
    band: int | None = None,
) -> float:
    """Mass of ``density`` in the open geodesic ball ``B_r(center)``.

    ``method="spectral"`` (default) analyses the density up to ``band``
    (default: the grid maximum) and integrates it against the cap indicator
    in closed form; it is exact for band-limited densities.
    ``method="nodes"`` sums ``weight * density`` over nodes strictly inside
    the ball, which is first-order accurate in the grid spacing.
    """
    density = _check_aligned(grid, density)
    if not np.all(np.isfinite(density)):
        raise GridError("density contains non-finite values")
    if not (0.0 <= r <= np.pi):
        raise GridError(f"radius must lie in [0, pi], got {r}")
    center = np.asarray(center, dtype=float)
    center = center / np.linalg.norm(center)
    if r == 0.0:
        return 0.0
    if method == "nodes":
        inside = geodesic_distance(grid.nodes, center) < r
        return float(np.sum(grid.weights[inside] * density[inside]))
    if method != "spectral":
        raise GridError(f"unknown ball_mass method {method!r}")
    from . import _sht

    band = grid.max_band if band is None else band
    coeffs = _sht.analyze(grid, density, band)
    filtered = _sht.filter_zonal(coeffs, band, cap_multipliers(band, r))
    return float(_sht.evaluate_at(center[None, :], filtered, band)[0])


def ball_mass_map(grid: SphereGrid, density, r: float, *, band: int | None = None) -> np.ndarray:
    """Ball mass ``B_r(x)`` for every grid node ``x`` (spectral method)."""
    from . import _sht

    density = _check_aligned(grid, density)
    if not np.all(np.isfinite(density)):
        raise GridError("density contains non-finite values")
    band = grid.max_band if band is None else band
    coeffs = _sht.analyze(grid, density, band)
    filtered = _sht.filter_zonal(coeffs, band, cap_multipliers(band, r))
    return _sht.synthesize(grid, filtered, band)
