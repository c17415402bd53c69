"""Mobius maps of the sphere, conformal factors, pullbacks and bubbles.

A point ``x`` is represented by a unit vector ``zeta`` in C^2 with
``x = (2 Re zeta1 conj(zeta2), 2 Im zeta1 conj(zeta2), |zeta1|^2 - |zeta2|^2)``,
i.e. ``zeta1/zeta2`` is the stereographic coordinate from the north pole.
A matrix ``M`` in SL(2, C) acts by ``zeta -> M zeta / |M zeta|`` and the
conformal factor of that map is

    v(x) = 1/2 log det(d phi)(x) = -log |M zeta(x)|^2.

Working with ``zeta`` instead of a single stereographic chart removes the
pole singularity; only building ``zeta`` from ``x`` needs a chart choice,
made by the sign of ``x3``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from . import _sht
from .dirac import SpinorState, wigner_d
from .functional import U_MAX, OverflowGuardError
from .geometry import SphereGrid, integrate
from .harmonics import ScalarField

__all__ = [
    "MobiusMap",
    "conformal_factor",
    "map_points",
    "pullback_scalar",
    "pullback_coupling_density",
    "kazdan_warner",
    "bubble_family",
    "spectral_tail",
    "rotate_spinor",
]


def to_spinor(x: np.ndarray) -> np.ndarray:
    """Unit ``zeta`` in C^2 for each unit vector ``x[..., 3]``; shape ``(..., 2)``."""
    x = np.asarray(x, dtype=float)
    x1, x2, x3 = x[..., 0], x[..., 1], x[..., 2]
    w = x1 + 1j * x2
    north = x3 >= 0
    with np.errstate(divide="ignore", invalid="ignore"):
        # chart near the north pole: zeta = (cos t/2, sin t/2 e^{-ip})
        zn1 = np.sqrt((1.0 + x3) / 2.0) + 0j
        zn2 = np.conj(w) / np.sqrt(2.0 * (1.0 + x3))
        # chart near the south pole: zeta = (cos t/2 e^{ip}, sin t/2)
        zs1 = w / np.sqrt(2.0 * (1.0 - x3))
        zs2 = np.sqrt((1.0 - x3) / 2.0) + 0j
    z1 = np.where(north, zn1, zs1)
    z2 = np.where(north, zn2, zs2)
    return np.stack([z1, z2], axis=-1)


def from_spinor(zeta: np.ndarray) -> np.ndarray:
    """Unit vectors for (not necessarily normalised) ``zeta[..., 2]``."""
    z1, z2 = zeta[..., 0], zeta[..., 1]
    n = np.abs(z1) ** 2 + np.abs(z2) ** 2
    p = z1 * np.conj(z2)
    return np.stack([2.0 * p.real, 2.0 * p.imag, np.abs(z1) ** 2 - np.abs(z2) ** 2], axis=-1) / n[..., None]


@dataclass(frozen=True, eq=False)
class MobiusMap:
    """Orientation-preserving conformal map given by a matrix in SL(2, C)."""

    matrix: np.ndarray

    def __post_init__(self):
        M = np.array(self.matrix, dtype=complex).reshape(2, 2)
        det = np.linalg.det(M)
        if abs(det) < 1e-300 or not np.all(np.isfinite(M)):
            raise ValueError("Mobius matrix must be finite and invertible")
        M = M / np.sqrt(det)
        M.setflags(write=False)
        object.__setattr__(self, "matrix", M)

    @classmethod
    def identity(cls) -> "MobiusMap":
        return cls(np.eye(2))

    @classmethod
    def from_reals(cls, values: Sequence[float]) -> "MobiusMap":
        v = np.asarray(values, dtype=float)
        if v.size != 8:
            raise ValueError(f"a Mobius map needs 8 real numbers, got {v.size}")
        return cls((v[0::2] + 1j * v[1::2]).reshape(2, 2))

    def to_reals(self) -> list[float]:
        flat = self.matrix.reshape(-1)
        return [float(x) for pair in zip(flat.real, flat.imag) for x in pair]

    @classmethod
    def rotation_to(cls, Q: Sequence[float]) -> "MobiusMap":
        """A rotation taking the north pole to ``Q``."""
        z = to_spinor(np.asarray(Q, dtype=float) / np.linalg.norm(Q))
        z1, z2 = z[0], z[1]
        return cls(np.array([[z1, -np.conj(z2)], [z2, np.conj(z1)]]))

    @classmethod
    def rotation(cls, axis: Sequence[float], angle: float) -> "MobiusMap":
        """Rotation by ``angle`` about ``axis`` (right-hand rule)."""
        n = np.asarray(axis, dtype=float)
        n = n / np.linalg.norm(n)
        sx = np.array([[0, 1], [1, 0]], dtype=complex)
        sy = np.array([[0, -1j], [1j, 0]])
        sz = np.array([[1, 0], [0, -1]], dtype=complex)
        H = n[0] * sx + n[1] * sy + n[2] * sz
        return cls(np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * H)

    @classmethod
    def dilation(cls, Q: Sequence[float], t: float) -> "MobiusMap":
        """Dilation by ``t`` in the stereographic chart with ``Q`` at the origin.

        For ``t > 1`` the pulled-back area concentrates at ``Q``.
        """
        if not t > 0:
            raise ValueError(f"dilation parameter must be positive, got {t}")
        U = cls.rotation_to(Q).matrix
        D = np.diag([t**-0.5, t**0.5]).astype(complex)
        return cls(U @ D @ U.conj().T)

    @classmethod
    def random(cls, rng: np.random.Generator, max_log_t: float = 1.0) -> "MobiusMap":
        """``U1 diag(s, 1/s) U2`` with Haar-random rotations and ``log(s^2)`` uniform in ``[0, max_log_t]``."""

        def su2():
            q = rng.standard_normal(4)
            q /= np.linalg.norm(q)
            a, b = q[0] + 1j * q[1], q[2] + 1j * q[3]
            return np.array([[a, -np.conj(b)], [b, np.conj(a)]])

        s = np.exp(0.5 * rng.uniform(0.0, max_log_t))
        return cls(su2() @ np.diag([s, 1.0 / s]) @ su2())

    @cached_property
    def kind(self) -> str:
        """``rotation``, ``dilation-like`` (Hermitian up to sign) or ``general``."""
        M = self.matrix
        if np.allclose(M @ M.conj().T, np.eye(2), atol=1e-12):
            return "rotation"
        if np.allclose(M, M.conj().T, atol=1e-12):
            return "dilation-like"
        return "general"

    def compose(self, other: "MobiusMap") -> "MobiusMap":
        """``self o other``."""
        return MobiusMap(self.matrix @ other.matrix)

    def inverse(self) -> "MobiusMap":
        a, b = self.matrix[0]
        c, d = self.matrix[1]
        return MobiusMap(np.array([[d, -b], [-c, a]]))

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return map_points(self, points)


def map_points(M: MobiusMap, points: np.ndarray) -> np.ndarray:
    z = to_spinor(points)
    return from_spinor(np.einsum("ij,...j->...i", M.matrix, z))


def conformal_factor(M: MobiusMap, points: np.ndarray) -> np.ndarray:
    """``v = 1/2 log det(d phi)`` at each of ``points[..., 3]``."""
    z = to_spinor(points)
    w = np.einsum("ij,...j->...i", M.matrix, z)
    return -np.log(np.sum(np.abs(w) ** 2, axis=-1))


def pullback_scalar(u: ScalarField, M: MobiusMap, band: int | None = None) -> ScalarField:
    """``u o phi + v`` sampled on ``u``'s grid.

    ``u`` is evaluated exactly from its harmonic expansion at the mapped
    nodes.  The result keeps those samples and is analysed up to ``band``
    (default ``2 L``); :func:`spectral_tail` reports what the truncation left.
    """
    grid = u.grid
    band = min(2 * grid.L, grid.max_band) if band is None else band
    x = grid.nodes
    y = map_points(M, x)
    values = u.evaluate(y.reshape(-1, 3)).reshape(grid.shape) + conformal_factor(M, x)
    return ScalarField(grid, values, band)


def spectral_tail(f: ScalarField, band: int) -> float:
    """Relative L2 size of the samples not captured by the expansion up to ``band``."""
    c = _sht.resize(np.asarray(f.coeffs), band)
    recon = _sht.synthesize(f.grid, c, band)
    err = integrate(f.grid, (f.values - recon) ** 2)
    total = integrate(f.grid, f.values**2)
    return float(np.sqrt(err / total)) if total > 0 else 0.0


def pullback_coupling_density(u: ScalarField, psi: SpinorState, M: MobiusMap) -> np.ndarray:
    """``e^{u_phi} e^{v} |psi o phi|^2`` on the grid; integrates to ``int e^u |psi|^2``."""
    grid = u.grid
    x = grid.nodes
    y = map_points(M, x)
    v = conformal_factor(M, x)
    u_phi = u.evaluate(y.reshape(-1, 3)).reshape(grid.shape) + v
    return np.exp(u_phi + v) * psi.density_at(y)


def kazdan_warner(u: ScalarField, h: ScalarField) -> np.ndarray:
    """``int <grad h, grad x_i> e^{2u} dv`` for ``i = 1, 2, 3``.

    Since ``grad x_i = e_i - x_i x`` and ``grad h`` is tangent, the pairing
    is the ``i``-th Cartesian component of ``grad h``.
    """
    if float(np.max(u.values)) > U_MAX:
        raise OverflowGuardError(float(np.max(u.values)))
    gh = h.gradient()
    e2u = np.exp(2.0 * u.values)
    return np.array([integrate(u.grid, gh[..., i] * e2u) for i in range(3)])


def bubble_family(grid: SphereGrid, Q: Sequence[float], t: float, normalization: str = "h1_eq_1", band: int | None = None) -> ScalarField:
    """Conformal factor of the dilation ``phi_{Q,t}``, concentrating at ``Q``.

    ``normalization="h1_eq_2"`` adds ``1/2 log(1/2)`` so that
    ``int 2 e^{2u} = 4 pi``.
    """
    if normalization not in ("h1_eq_1", "h1_eq_2"):
        raise ValueError(f"unknown normalization {normalization!r}")
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    M = MobiusMap.dilation(Q, t)
    v = conformal_factor(M, grid.nodes)
    if normalization == "h1_eq_2":
        v = v + 0.5 * np.log(0.5)
    # the peak value is log t (plus the shift), reached at Q
    peak = max(float(v.max()), abs(np.log(t)))
    if peak > U_MAX or not np.all(np.isfinite(v)):
        raise OverflowGuardError(peak)
    return ScalarField(grid, v, grid.max_band if band is None else band)


def euler_zyz(U: np.ndarray) -> tuple[float, float, float]:
    """Angles with ``U = exp(-i a sz/2) exp(-i b sy/2) exp(-i g sz/2)`` (up to sign)."""
    a, b = U[0, 0], U[1, 0]
    beta = 2.0 * np.arctan2(abs(b), abs(a))
    s = -np.angle(a) if abs(a) > 1e-15 else 0.0
    d = np.angle(b) if abs(b) > 1e-15 else 0.0
    return s + d, beta, s - d


def rotate_spinor(psi: SpinorState, M: MobiusMap) -> SpinorState:
    """Coefficients of the rotated spinor, for isometries only.

    The result satisfies ``|psi_R|^2(x) = |psi|^2(phi(x))``; each
    ``(j, sigma)`` block mixes through the Wigner matrix ``D^j``.
    """
    if M.kind != "rotation":
        raise ValueError("coefficient-level spinor pullback is only defined for rotations")
    basis = psi.basis
    al, be, ga = euler_zyz(M.matrix)
    out = np.zeros(basis.size, dtype=complex)
    for j in np.unique(basis.j):
        ms = np.arange(-j, j + 1.0)
        D = np.array([[np.exp(-1j * m * al) * wigner_d(j, m, mp, be) * np.exp(-1j * mp * ga) for mp in ms] for m in ms])
        for s in (1.0, -1.0):
            idx = np.flatnonzero((basis.j == j) & (basis.sigma == s))
            # slots are ordered by ascending m within a block
            out[idx] = D.T @ psi.coeffs[idx]
    return SpinorState(basis, out)
