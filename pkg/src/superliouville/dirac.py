"""Dirac eigenbasis on the round sphere.

Spinors are written in the frame adapted to (theta, phi) as a pair of
components of spin weight -1/2 and +1/2.  With the eth operator of spin
weight s,

    eth  eta = -(sin t)^s     (d_t + i/sin t d_p) ((sin t)^-s eta)
    ethb eta = -(sin t)^-s    (d_t - i/sin t d_p) ((sin t)^s  eta)

the Dirac operator is ``D(a, b) = i (ethb b, eth a)``.  For half-integer
``j = k + 1/2`` and ``|m| <= j`` put

    alpha_jm = sqrt((2j+1)/4pi) d^j_{m,1/2}(t) e^{i m p}        (weight -1/2)
    beta_jm  = eth alpha_jm / (j + 1/2)                          (weight +1/2)

Since ``ethb eth alpha = -(j+1/2)^2 alpha`` the spinors

    phi_{j,m,+-} = (alpha_jm, +-i beta_jm) / sqrt(2)

are L2-orthonormal eigenspinors with eigenvalue ``+-(j+1/2) = +-(k+1)``.
``beta`` is evaluated from the closed form ``kappa * sqrt((2j+1)/4pi)
d^j_{m,-1/2}`` with the sign ``kappa`` fixed once against the eth formula,
so no pole-singular expression is evaluated.

The components are double valued in ``p`` (half-integer ``m``), but every
exposed quantity (pointwise ``<psi, chi>``, ``|psi|^2``, coefficients) is
single valued.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.special import binom, eval_jacobi

from .geometry import FOUR_PI, GridError, SphereGrid, integrate

__all__ = [
    "PHASE_TAG",
    "DiracBasis",
    "SpinorState",
    "build_basis",
    "apply_dirac",
    "split_pm",
    "h_half_norm",
    "HHalfNorm",
    "killing_spinor",
    "evaluate_bilinear",
    "gram_matrix",
    "random_spinor",
    "wigner_d",
    "BasisMismatchError",
]

PHASE_TAG = "wigner-d-half-eth-v1"


class BasisMismatchError(ValueError):
    """Spinors or weights built on incompatible bases or grids."""


def wigner_d(j: float, mp: float, m: float, theta) -> np.ndarray:
    """Wigner small-d ``d^j_{mp, m}(theta)`` through Jacobi polynomials.

    Works for integer and half-integer ``j``; all derived indices are integers.
    """
    theta = np.asarray(theta, dtype=float)
    jj = [j + m, j - m, j + mp, j - mp]
    k = int(round(min(jj)))
    case = int(np.argmin(jj))
    if case == 0:
        a, lam = mp - m, mp - m
    elif case == 1:
        a, lam = m - mp, 0
    elif case == 2:
        a, lam = m - mp, 0
    else:
        a, lam = mp - m, mp - m
    a = int(round(a))
    lam = int(round(lam))
    b = int(round(2 * j - 2 * k - a))
    norm = np.sqrt(binom(2 * j - k, k + a) / binom(k + b, b))
    s, c = np.sin(theta / 2.0), np.cos(theta / 2.0)
    return (-1.0) ** lam * norm * s**a * c**b * eval_jacobi(k, a, b, np.cos(theta))


def wigner_d_dtheta(j: float, mp: float, m: float, theta) -> np.ndarray:
    """``d/dtheta`` of :func:`wigner_d`."""
    theta = np.asarray(theta, dtype=float)
    jj = [j + m, j - m, j + mp, j - mp]
    k = int(round(min(jj)))
    case = int(np.argmin(jj))
    a, lam = (mp - m, mp - m) if case in (0, 3) else (m - mp, 0)
    a = int(round(a))
    lam = int(round(lam))
    b = int(round(2 * j - 2 * k - a))
    norm = (-1.0) ** lam * np.sqrt(binom(2 * j - k, k + a) / binom(k + b, b))
    s, c = np.sin(theta / 2.0), np.cos(theta / 2.0)
    x = np.cos(theta)
    P = eval_jacobi(k, a, b, x)
    dP = 0.5 * (k + a + b + 1) * eval_jacobi(k - 1, a + 1, b + 1, x) if k > 0 else np.zeros_like(x)
    out = -(s**a) * c**b * np.sin(theta) * dP
    if a > 0:
        out = out + 0.5 * a * s ** (a - 1) * c ** (b + 1) * P
    if b > 0:
        out = out - 0.5 * b * s ** (a + 1) * c ** (b - 1) * P
    return norm * out


def _alpha_profile(j, m, theta):
    return np.sqrt((2 * j + 1) / FOUR_PI) * wigner_d(j, m, 0.5, theta)


def eth_alpha_profile(j, m, theta):
    """theta-profile of ``eth alpha_jm`` from the analytic derivative (off the poles)."""
    c = np.sqrt((2 * j + 1) / FOUR_PI)
    f = c * wigner_d(j, m, 0.5, theta)
    df = c * wigner_d_dtheta(j, m, 0.5, theta)
    return -(df + 0.5 * f / np.tan(theta) - m * f / np.sin(theta))


def _beta_sign(j, m) -> float:
    t = 1.0
    ref = eth_alpha_profile(j, m, t) / (j + 0.5)
    closed = np.sqrt((2 * j + 1) / FOUR_PI) * wigner_d(j, m, -0.5, t)
    if not np.isclose(abs(ref), abs(closed), rtol=1e-10, atol=1e-14):
        raise RuntimeError(f"spin-weight closed form disagrees with eth at j={j}, m={m}")
    return 1.0 if ref * closed >= 0 else -1.0


@dataclass(frozen=True, eq=False)
class DiracBasis:
    """Truncated Dirac eigenbasis with ``|lambda| <= band``.

    Slot ``n`` carries labels ``(j[n], m[n], sigma[n])`` and eigenvalue
    ``eigenvalues[n] = sigma * (j + 1/2)``.  ``alpha`` and ``beta`` hold the
    component theta-profiles on the grid rings; the full components are
    ``profile * e^{i m p}`` (the ``sigma * i / sqrt(2)`` factors are applied
    on synthesis).
    """

    grid: SphereGrid
    band: int
    j: np.ndarray
    m: np.ndarray
    sigma: np.ndarray
    eigenvalues: np.ndarray
    kappa: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    phase_tag: str = PHASE_TAG

    @property
    def size(self) -> int:
        return self.eigenvalues.size

    @property
    def negative(self) -> np.ndarray:
        return self.eigenvalues < 0

    @property
    def positive(self) -> np.ndarray:
        return self.eigenvalues > 0

    def multiplicities(self) -> dict[int, int]:
        vals, counts = np.unique(self.eigenvalues.astype(int), return_counts=True)
        return {int(v): int(c) for v, c in zip(vals, counts)}

    def compatible(self, other: "DiracBasis") -> bool:
        return self is other or (
            self.band == other.band and self.grid.same_as(other.grid) and self.phase_tag == other.phase_tag
        )

    @cached_property
    def components(self) -> tuple[np.ndarray, np.ndarray]:
        """Grid values of both components, each ``(size, n_theta, n_phi)`` complex."""
        phase = np.exp(1j * self.m[:, None] * self.grid.phi[None, :])[:, None, :]
        top = (self.alpha[:, :, None] * phase) / np.sqrt(2.0)
        bot = (1j * self.sigma / np.sqrt(2.0))[:, None, None] * self.beta[:, :, None] * phase
        top.setflags(write=False)
        bot.setflags(write=False)
        return top, bot

    def profiles_at(self, theta: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """theta-profiles at arbitrary colatitudes, each ``(size, len(theta))``."""
        theta = np.atleast_1d(np.asarray(theta, dtype=float))
        cache: dict[tuple[float, float], tuple[np.ndarray, np.ndarray]] = {}
        A = np.empty((self.size, theta.size))
        B = np.empty((self.size, theta.size))
        for n, (j, m) in enumerate(zip(self.j, self.m)):
            key = (float(j), float(m))
            if key not in cache:
                c = np.sqrt((2 * j + 1) / FOUR_PI)
                cache[key] = (c * wigner_d(j, m, 0.5, theta), c * wigner_d(j, m, -0.5, theta))
            A[n], B[n] = cache[key]
        B *= self.kappa[:, None]
        return A, B


def build_basis(grid: SphereGrid, band: int) -> DiracBasis:
    """Dirac eigenbasis with eigenvalues ``+-1, ..., +-band`` on ``grid``."""
    if not isinstance(band, (int, np.integer)) or band < 1:
        raise ValueError(f"Dirac band must be a positive integer, got {band!r}")
    # products of two components reach degree 2*band - 1; with a weight of
    # degree L this stays inside the exact range when band <= L + 1
    if band > grid.L + 1 or 2 * band - 1 + grid.L > grid.L_exact:
        raise GridError(f"grid with L={grid.L} cannot resolve Dirac band {band} (need band <= L + 1)")
    js, ms, sig = [], [], []
    for k in range(band):
        j = k + 0.5
        for s in (1, -1):
            for m in np.arange(-j, j + 1.0):
                js.append(j)
                ms.append(m)
                sig.append(s)
    js, ms, sig = np.array(js), np.array(ms), np.array(sig, dtype=float)
    kappa = np.array([_beta_sign(j, m) for j, m in zip(js, ms)])
    basis = DiracBasis(
        grid=grid,
        band=int(band),
        j=js,
        m=ms,
        sigma=sig,
        eigenvalues=sig * (js + 0.5),
        kappa=kappa,
        alpha=np.empty(0),
        beta=np.empty(0),
    )
    A, B = basis.profiles_at(grid.theta)
    object.__setattr__(basis, "alpha", A)
    object.__setattr__(basis, "beta", B)
    for arr in (js, ms, sig, kappa, basis.eigenvalues, A, B):
        arr.setflags(write=False)
    return basis


class SpinorState:
    """Spinor ``psi = sum a_n phi_n`` on a truncated Dirac basis.

    Pointwise components and ``|psi|^2`` are computed lazily from the
    coefficients; the coefficient array is read-only so the cache cannot go
    stale.
    """

    def __init__(self, basis: DiracBasis, coeffs):
        coeffs = np.array(coeffs, dtype=complex).reshape(-1)
        if coeffs.size != basis.size:
            raise BasisMismatchError(f"expected {basis.size} coefficients, got {coeffs.size}")
        coeffs.setflags(write=False)
        self.basis = basis
        self.coeffs = coeffs

    @classmethod
    def zero(cls, basis: DiracBasis) -> "SpinorState":
        return cls(basis, np.zeros(basis.size, dtype=complex))

    @classmethod
    def unit(cls, basis: DiracBasis, n: int) -> "SpinorState":
        a = np.zeros(basis.size, dtype=complex)
        a[n] = 1.0
        return cls(basis, a)

    @property
    def band(self) -> int:
        return self.basis.band

    @cached_property
    def components(self) -> tuple[np.ndarray, np.ndarray]:
        top, bot = self.basis.components
        a = self.coeffs
        return np.tensordot(a, top, axes=1), np.tensordot(a, bot, axes=1)

    @cached_property
    def density(self) -> np.ndarray:
        """``|psi|^2`` on the grid."""
        p, q = self.components
        d = p.real**2 + p.imag**2 + q.real**2 + q.imag**2
        d.setflags(write=False)
        return d

    def norm2(self) -> float:
        """Squared L2 norm from the coefficients."""
        return float(np.vdot(self.coeffs, self.coeffs).real)

    def density_at(self, points: np.ndarray) -> np.ndarray:
        """``|psi|^2`` at arbitrary unit vectors ``points[..., 3]``."""
        pts = np.asarray(points, dtype=float)
        shape = pts.shape[:-1]
        pts = pts.reshape(-1, 3)
        theta = np.arccos(np.clip(pts[:, 2], -1.0, 1.0))
        phi = np.arctan2(pts[:, 1], pts[:, 0])
        A, B = self.basis.profiles_at(theta)
        phase = np.exp(1j * self.basis.m[:, None] * phi[None, :])
        a = self.coeffs[:, None]
        p = np.sum(a * A * phase, axis=0) / np.sqrt(2.0)
        q = np.sum(a * (1j * self.basis.sigma[:, None]) * B * phase, axis=0) / np.sqrt(2.0)
        return (np.abs(p) ** 2 + np.abs(q) ** 2).reshape(shape)

    def with_coeffs(self, coeffs) -> "SpinorState":
        return SpinorState(self.basis, coeffs)

    def __add__(self, other: "SpinorState") -> "SpinorState":
        _check_same(self, other)
        return SpinorState(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpinorState") -> "SpinorState":
        _check_same(self, other)
        return SpinorState(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, k) -> "SpinorState":
        return SpinorState(self.basis, complex(k) * self.coeffs)

    __rmul__ = __mul__

    def __repr__(self):
        return f"SpinorState(band={self.band}, norm2={self.norm2():.6g})"


def _check_same(psi: SpinorState, chi: SpinorState):
    if not psi.basis.compatible(chi.basis):
        raise BasisMismatchError("spinors live on different bases")


def apply_dirac(basis: DiracBasis, psi: SpinorState) -> SpinorState:
    if not basis.compatible(psi.basis):
        raise BasisMismatchError("spinor is not expanded in this basis")
    return SpinorState(basis, basis.eigenvalues * psi.coeffs)


def split_pm(psi: SpinorState) -> tuple[SpinorState, SpinorState]:
    pos = psi.basis.positive
    plus = np.where(pos, psi.coeffs, 0.0)
    minus = np.where(pos, 0.0, psi.coeffs)
    return SpinorState(psi.basis, plus), SpinorState(psi.basis, minus)


@dataclass(frozen=True)
class HHalfNorm:
    hilbert_norm2: float
    equivalent_norm2: float


def h_half_norm(psi: SpinorState) -> HHalfNorm:
    """Both squared H^{1/2} norms: ``sum (1+|l|)|a|^2`` and ``sum |l||a|^2``."""
    lam = np.abs(psi.basis.eigenvalues)
    w = np.abs(psi.coeffs) ** 2
    return HHalfNorm(float(np.sum((1.0 + lam) * w)), float(np.sum(lam * w)))


def dirac_pairing(psi: SpinorState) -> float:
    """``int <D psi, psi>`` computed from the coefficients."""
    return float(np.sum(psi.basis.eigenvalues * np.abs(psi.coeffs) ** 2))


def killing_spinor(basis: DiracBasis, tol: float = 1e-8) -> SpinorState:
    """Eigenvalue-one spinor of constant pointwise length one."""
    candidates = np.flatnonzero(basis.eigenvalues == 1.0)
    # canonical choice first: j = m = 1/2, components ~ (cos t/2, i sin t/2)
    order = sorted(candidates, key=lambda n: -basis.m[n])
    best, best_var = None, np.inf
    for n in order:
        psi = SpinorState.unit(basis, n) * np.sqrt(FOUR_PI)
        var = _relative_variance(psi.density)
        if var < best_var:
            best, best_var = psi, var
        if var <= tol:
            return psi
    # fallback: search the eigenspace for a constant-length combination
    from scipy.optimize import minimize

    def objective(x):
        a = np.zeros(basis.size, dtype=complex)
        a[candidates] = x[: candidates.size] + 1j * x[candidates.size :]
        a *= np.sqrt(FOUR_PI) / max(np.linalg.norm(a), 1e-300)
        return _relative_variance(SpinorState(basis, a).density)

    x0 = np.concatenate([best.coeffs[candidates].real, best.coeffs[candidates].imag])
    res = minimize(objective, x0, method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14})
    if res.fun > tol:
        raise RuntimeError(f"no constant-length eigenspinor found: relative variance {res.fun:.3e}")
    a = np.zeros(basis.size, dtype=complex)
    a[candidates] = res.x[: candidates.size] + 1j * res.x[candidates.size :]
    return SpinorState(basis, a * np.sqrt(FOUR_PI) / np.linalg.norm(a))


def _relative_variance(d: np.ndarray) -> float:
    mu = d.mean()
    return float(np.mean((d - mu) ** 2) / mu**2) if mu > 0 else np.inf


def _weight_values(grid: SphereGrid, weight) -> np.ndarray:
    if weight is None:
        return np.ones(grid.shape)
    vals = getattr(weight, "values", weight)
    vals = np.asarray(vals, dtype=float)
    if np.ndim(vals) == 0:
        return np.full(grid.shape, float(vals))
    if vals.shape != grid.shape:
        raise BasisMismatchError(f"weight of shape {vals.shape} does not match grid {grid.shape}")
    grid_w = getattr(weight, "grid", None)
    if grid_w is not None and not grid_w.same_as(grid):
        raise BasisMismatchError("weight lives on a different grid")
    return vals


def evaluate_bilinear(psi: SpinorState, chi: SpinorState, weight=None) -> complex:
    """``int weight <psi, chi> dv`` with ``<psi, chi> = sum_c psi_c conj(chi_c)``."""
    _check_same(psi, chi)
    grid = psi.basis.grid
    w = _weight_values(grid, weight)
    p1, q1 = psi.components
    p2, q2 = chi.components
    return complex(integrate(grid, w * (p1 * np.conj(p2) + q1 * np.conj(q2))))


def gram_matrix(basis: DiracBasis, weight=None) -> np.ndarray:
    """``G[n, k] = int weight <phi_k, phi_n> dv``.

    The basis coefficients of the projection of ``weight * psi`` are
    ``G @ a``.  ``G`` is Hermitian.
    """
    grid = basis.grid
    w = _weight_values(grid, weight) * grid.weights
    top, bot = basis.components
    T = top.reshape(basis.size, -1)
    Bm = bot.reshape(basis.size, -1)
    wf = w.reshape(-1)
    G = (np.conj(T) * wf) @ T.T + (np.conj(Bm) * wf) @ Bm.T
    return 0.5 * (G + G.conj().T)


def project_weighted(psi: SpinorState, weight) -> SpinorState:
    """Basis projection of ``weight * psi``."""
    return SpinorState(psi.basis, gram_matrix(psi.basis, weight) @ psi.coeffs)


def random_spinor(basis: DiracBasis, rng: np.random.Generator, scale: float = 1.0) -> SpinorState:
    """Complex Gaussian coefficients damped by ``1/|lambda|``."""
    a = rng.standard_normal(basis.size) + 1j * rng.standard_normal(basis.size)
    return SpinorState(basis, scale * a / np.abs(basis.eigenvalues) / np.sqrt(2.0))


def l4_ratio(psi: SpinorState) -> float:
    """``||psi||_{L^4} / ||psi||_{H^{1/2}}`` (Hilbert form)."""
    h = h_half_norm(psi).hilbert_norm2
    if h == 0.0:
        return 0.0
    l4 = integrate(psi.basis.grid, psi.density**2) ** 0.25
    return float(l4 / np.sqrt(h))


def spectrum_table(band: int) -> dict[int, int]:
    """Eigenvalue -> complex multiplicity for the truncated basis (no grid needed)."""
    table = {}
    for k in range(band):
        table[k + 1] = 2 * (k + 1)
        table[-(k + 1)] = 2 * (k + 1)
    return dict(sorted(table.items()))
