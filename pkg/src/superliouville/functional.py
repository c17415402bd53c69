"""Energy functional, its gradient, the natural constraint set and its retraction.

For a state ``(u, psi)`` with coefficient functions ``h1 > 0``, ``h2 >= 0``

    E(u, psi) = int |grad u|^2 + 2u - h1 e^{2u} + 2(<D psi, psi> - h2 e^u |psi|^2) dv + 4 pi

and the constraint set is cut out by the mass identity, the Dirac pairing
identity and orthogonality of ``D psi - h2 e^u psi`` to the negative
eigenspinors (truncated at the basis band).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.optimize import brentq

from . import _sht
from .dirac import SpinorState, dirac_pairing, gram_matrix, BasisMismatchError
from .geometry import FOUR_PI, integrate
from .harmonics import ScalarField, dirichlet_energy

__all__ = [
    "U_MAX",
    "OverflowGuardError",
    "RetractionError",
    "SolutionPair",
    "ConstraintResidual",
    "energy",
    "energy_gradient",
    "constraint_residuals",
    "retract",
    "s_functional",
    "centroid",
    "coupling_integral",
    "reduced_energy",
    "holder_check",
]

#: exponentials are refused above this value of u
U_MAX = 30.0


class OverflowGuardError(ArithmeticError):
    """``u`` exceeded the overflow guard; the state is blowing up."""

    def __init__(self, max_u: float):
        super().__init__(f"max(u) = {max_u:.6g} exceeds the overflow guard {U_MAX}")
        self.max_u = max_u


class RetractionError(RuntimeError):
    def __init__(self, message: str, residual: "ConstraintResidual | None" = None):
        super().__init__(message)
        self.residual = residual


def exp_u(u: ScalarField) -> np.ndarray:
    """``e^u`` on the grid, guarded against overflow."""
    top = float(np.max(u.values))
    if not np.isfinite(top) or top > U_MAX:
        raise OverflowGuardError(top)
    return np.exp(u.values)


class SolutionPair:
    """State ``(u, psi)`` together with the coefficient functions ``h1, h2``."""

    def __init__(self, u: ScalarField, psi: SpinorState, h1: ScalarField, h2: ScalarField):
        grid = psi.basis.grid
        for name, f in (("u", u), ("h1", h1), ("h2", h2)):
            if not f.grid.same_as(grid):
                raise BasisMismatchError(f"{name} lives on a different grid than psi")
        if not np.all(h1.values > 0):
            raise ValueError("h1 must be positive on the grid")
        if not np.all(h2.values >= 0):
            raise ValueError("h2 must be non-negative on the grid")
        self.u, self.psi, self.h1, self.h2 = u, psi, h1, h2

    @property
    def grid(self):
        return self.psi.basis.grid

    @property
    def basis(self):
        return self.psi.basis

    def replace(self, *, u: ScalarField | None = None, psi: SpinorState | None = None) -> "SolutionPair":
        return SolutionPair(self.u if u is None else u, self.psi if psi is None else psi, self.h1, self.h2)

    @cached_property
    def eu(self) -> np.ndarray:
        return exp_u(self.u)

    @cached_property
    def coupling_weight(self) -> np.ndarray:
        """``h2 e^u`` on the grid."""
        return self.h2.values * self.eu

    @cached_property
    def gram(self) -> np.ndarray:
        """Gram matrix of the weight ``h2 e^u``."""
        return gram_matrix(self.basis, self.coupling_weight)

    @cached_property
    def residuals(self) -> "ConstraintResidual":
        return constraint_residuals(self)

    def mass_density(self) -> np.ndarray:
        """``h1 e^{2u} + h2 e^u |psi|^2`` on the grid."""
        return self.h1.values * self.eu**2 + self.coupling_weight * self.psi.density

    def __repr__(self):
        return f"SolutionPair(u={self.u!r}, psi={self.psi!r})"


@dataclass(frozen=True)
class ConstraintResidual:
    R_mass: float
    R_nehari: float
    R_neg: np.ndarray = field(repr=False)
    centroid: np.ndarray

    @property
    def neg_max(self) -> float:
        return float(np.abs(self.R_neg).max(initial=0.0))

    def max_abs(self) -> float:
        return max(abs(self.R_mass), abs(self.R_nehari), self.neg_max)

    def as_dict(self) -> dict:
        return {
            "R_mass": self.R_mass,
            "R_nehari": self.R_nehari,
            "R_neg_max": self.neg_max,
            "centroid": [float(x) for x in self.centroid],
        }


def coupling_integral(state: SolutionPair) -> float:
    """``int h2 e^u |psi|^2 dv``."""
    return float(integrate(state.grid, state.coupling_weight * state.psi.density))


def energy(state: SolutionPair) -> float:
    u = state.u
    grid = state.grid
    e2u = state.eu**2
    scalar = dirichlet_energy(u) + 2.0 * u.integral() - integrate(grid, state.h1.values * e2u)
    spinor = 2.0 * (dirac_pairing(state.psi) - coupling_integral(state))
    return float(scalar + spinor + FOUR_PI)


def reduced_energy(state: SolutionPair) -> float:
    """``int |grad u|^2 + 2u + h2 e^u |psi|^2``, equal to the energy on the constraint set."""
    return float(dirichlet_energy(state.u) + 2.0 * state.u.integral() + coupling_integral(state))


def energy_gradient(state: SolutionPair) -> tuple[ScalarField, SpinorState]:
    """Gradient of the energy in coefficient form.

    ``grad_u[lm]`` is the derivative with respect to the real coefficient
    ``u_lm``; ``grad_psi[n] = 4 (lambda_n a_n - (G a)_n)`` so that the
    derivative along ``a -> a + t d`` is ``Re sum conj(grad_psi) d``.
    """
    u = state.u
    ell = _sht.degrees(u.band)
    source = state.h1.values * state.eu**2 + state.coupling_weight * state.psi.density
    g = 2.0 * ell * (ell + 1.0) * np.asarray(u.coeffs) - 2.0 * _sht.analyze(state.grid, source, u.band)
    g[0] += 2.0 * np.sqrt(FOUR_PI)
    a = state.psi.coeffs
    gpsi = 4.0 * (state.basis.eigenvalues * a - state.gram @ a)
    return ScalarField.from_coeffs(state.grid, g), SpinorState(state.basis, gpsi)


def constraint_residuals(state: SolutionPair) -> ConstraintResidual:
    a = state.psi.coeffs
    mass = integrate(state.grid, state.mass_density()) - FOUR_PI
    Ga = state.gram @ a
    nehari = dirac_pairing(state.psi) - float(np.vdot(a, Ga).real)
    neg = state.basis.negative
    r_neg = state.basis.eigenvalues[neg] * a[neg] - Ga[neg]
    return ConstraintResidual(float(mass), float(nehari), r_neg, centroid(state.u))


def s_functional(u: ScalarField) -> float:
    """Conformally invariant ``mean |grad u|^2 + 2 mean u``."""
    return dirichlet_energy(u) / FOUR_PI + 2.0 * u.mean()


def centroid(u: ScalarField) -> np.ndarray:
    """``mean(e^{2u} x_j)`` for ``j = 1, 2, 3``."""
    e2u = exp_u(u) ** 2
    return np.array([integrate(u.grid, e2u * u.grid.coordinate(j)) for j in range(3)]) / FOUR_PI


def _solve_negative(lam, G, a, c):
    """Negative coefficients with ``lam_j a_j = e^c (G a)_j`` for ``j < 0``, ``a+`` fixed."""
    neg = lam < 0
    pos = ~neg
    out = a.copy()
    if not neg.any():
        return out
    M = np.diag(lam[neg]).astype(complex) - np.exp(c) * G[np.ix_(neg, neg)]
    rhs = np.exp(c) * (G[np.ix_(neg, pos)] @ a[pos])
    out[neg] = np.linalg.solve(M, rhs)
    return out


def _shift_root(F, span: float = 40.0) -> float | None:
    """Root of ``F`` closest to zero found by outward bracketing."""
    f0 = F(0.0)
    if f0 == 0.0:
        return 0.0
    d = 0.125
    while d <= span:
        for side in (d, -d):
            inner = side / 2.0 if d > 0.125 else 0.0
            fi, fo = F(inner), F(side)
            if np.sign(fi) != np.sign(fo):
                lo, hi = sorted((inner, side))
                return brentq(F, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
        d *= 2.0
    return None


def retract(state: SolutionPair, tol: float = 1e-10, max_rounds: int = 5) -> SolutionPair:
    """Move ``state`` onto the constraint set along ``(u + c, s psi)``.

    For a fixed shift ``c`` the negative-part conditions are a linear system
    in ``a-`` given ``a+``; it is solved directly (its matrix
    ``diag(lambda-) - e^c G--`` is negative definite).  The Dirac pairing
    identity is then scale free in ``s`` and fixes ``c`` by a scalar root
    find, after which the mass identity fixes ``s``.  When no admissible
    ``(c, s)`` exists, or ``psi = 0``, the spinor is dropped and ``c`` solves
    the mass identity alone.
    """
    if state.residuals.max_abs() <= tol:
        return state
    current = state
    for _ in range(max_rounds):
        current = _retract_once(current)
        if current.residuals.max_abs() <= tol:
            return current
    raise RetractionError(
        f"retraction stalled at residual {current.residuals.max_abs():.3e} (tol {tol:.1e})", current.residuals
    )


def _retract_once(state: SolutionPair) -> SolutionPair:
    grid = state.grid
    lam = state.basis.eigenvalues
    e2u = state.eu**2
    A = float(integrate(grid, state.h1.values * e2u))
    G0 = state.gram
    a0 = state.psi.coeffs

    def drop_spinor():
        c = 0.5 * np.log(FOUR_PI / A)
        return state.replace(u=state.u + c, psi=SpinorState.zero(state.basis))

    if not np.any(a0[lam > 0]) or not np.any(G0):
        return drop_spinor()

    def parts(c):
        a = _solve_negative(lam, G0, a0, c)
        N = float(np.sum(lam * np.abs(a) ** 2))
        C = float(np.vdot(a, G0 @ a).real)
        return a, N, C

    def F(c):
        _, N, C = parts(c)
        return N - np.exp(c) * C

    c = _shift_root(F)
    if c is None:
        return drop_spinor()
    a, _, C = parts(c)
    s2 = (FOUR_PI - np.exp(2 * c) * A) / (np.exp(c) * C)
    if not np.isfinite(s2) or s2 <= 0.0:
        return drop_spinor()
    return state.replace(u=state.u + c, psi=SpinorState(state.basis, np.sqrt(s2) * a))


@dataclass(frozen=True)
class HolderRecord:
    alpha: float
    beta: float
    lhs: float
    rhs: float
    satisfied: bool

    def as_dict(self) -> dict:
        return {"alpha": self.alpha, "beta": self.beta, "lhs": self.lhs, "rhs": self.rhs, "satisfied": self.satisfied}


def holder_check(state: SolutionPair, alpha: float, slack: float = 1e-10) -> HolderRecord:
    """Two-factor Holder split of ``int (e^u |psi|^2)^beta``.

    With ``beta = 2 alpha / (2 + alpha)``, ``p = (2 + alpha)/2`` and
    ``q = (2 + alpha)/alpha``:
    ``int (e^u|psi|^2)^beta <= (int e^{alpha u})^{1/p} (int |psi|^4)^{1/q}``.
    """
    grid = state.grid
    beta = 2.0 * alpha / (2.0 + alpha)
    p = (2.0 + alpha) / 2.0
    q = (2.0 + alpha) / alpha
    dens = state.psi.density
    lhs = float(integrate(grid, (state.eu * dens) ** beta))
    rhs = float(integrate(grid, state.eu**alpha) ** (1.0 / p) * integrate(grid, dens**2) ** (1.0 / q))
    return HolderRecord(float(alpha), beta, lhs, rhs, bool(lhs <= rhs * (1.0 + slack) + slack))
