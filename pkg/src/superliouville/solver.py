"""Constrained minimisation of the energy, Euler-Lagrange residuals and Newton polish.

The unknowns are the real harmonic coefficients of ``u`` (even degrees only
when parity is enforced) and the real and imaginary parts of the spinor
coefficients.  Complex gradients follow the convention
``dF = Re sum conj(g) da``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize as scipy_minimize

from . import _sht
from .dirac import DiracBasis, SpinorState, build_basis, h_half_norm, killing_spinor
from .functional import (
    OverflowGuardError,
    RetractionError,
    SolutionPair,
    centroid,
    coupling_integral,
    energy,
    retract,
    s_functional,
)
from .geometry import FOUR_PI, build_grid, integrate
from .harmonics import ScalarField, random_field

__all__ = [
    "SolveConfig",
    "PDEResidual",
    "pde_residual",
    "minimize",
    "SolveResult",
    "newton_refine",
    "NewtonResult",
    "continuation",
    "initial_state",
]

log = logging.getLogger(__name__)

INIT_MODES = ("zero", "perturbed-special", "random")


@dataclass(frozen=True)
class SolveConfig:
    L: int = 16
    dirac_band: int = 4
    tol_constraint: float = 1e-10
    tol_gradient: float = 1e-8
    tol_residual: float = 1e-10
    tol_pde: float = 1e-6
    max_outer: int = 30
    max_inner: int = 300
    parity: bool = False
    init: str = "perturbed-special"
    seed: int = 0
    noise: float = 1e-2
    penalty: float = 10.0
    penalty_growth: float = 10.0
    newton_threshold: float = 1e-2
    newton_max_iter: int = 20
    # None: centroid gauge of weight 1 when h1 and h2 are both constant
    gauge_weight: float | None = None
    rho_start: float = 1.0
    rho_end: float = 5.0
    rho_step: float = 0.5

    def __post_init__(self):
        for name in ("tol_constraint", "tol_gradient", "tol_residual", "tol_pde", "penalty", "newton_threshold", "rho_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if self.L < 1 or self.dirac_band < 1:
            raise ValueError("L and the Dirac band must be at least 1")
        if not self.penalty_growth > 1:
            raise ValueError(f"penalty_growth must exceed 1, got {self.penalty_growth}")
        if self.max_outer < 1 or self.max_inner < 1:
            raise ValueError("iteration limits must be positive")
        if self.init not in INIT_MODES:
            raise ValueError(f"init must be one of {INIT_MODES}, got {self.init!r}")
        if (self.gauge_weight is not None and self.gauge_weight < 0) or self.noise < 0:
            raise ValueError("gauge_weight and noise must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)


# --------------------------------------------------------------------------
# residuals


@dataclass(frozen=True)
class PDEResidual:
    """Residuals of both equations.

    ``r_u`` keeps the pointwise residual on the grid; its coefficients are
    the Galerkin residual at the band of ``u``.  ``r_psi`` holds
    ``lambda a - P(h2 e^u psi)``.
    """

    r_u: ScalarField
    r_psi: SpinorState
    psi_tail: float = 0.0

    @property
    def sup_u(self) -> float:
        return float(np.abs(self.r_u.values).max())

    @property
    def galerkin_u(self) -> float:
        return float(np.abs(np.asarray(self.r_u.coeffs)).max())

    @property
    def psi_max(self) -> float:
        return float(np.abs(self.r_psi.coeffs).max(initial=0.0))

    @property
    def psi_norm(self) -> float:
        return float(np.sqrt(self.r_psi.norm2()))

    @property
    def psi_full(self) -> float:
        """L2 norm of ``D psi - h2 e^u psi`` including the part outside the basis."""
        return float(np.hypot(self.psi_norm, self.psi_tail))

    def galerkin_max(self) -> float:
        return max(self.galerkin_u, self.psi_max)

    def as_dict(self) -> dict:
        return {
            "sup_u": self.sup_u,
            "galerkin_u": self.galerkin_u,
            "psi_max": self.psi_max,
            "psi_l2": self.psi_norm,
            "psi_tail": self.psi_tail,
            "psi_full": self.psi_full,
        }


def pde_residual(state: SolutionPair) -> PDEResidual:
    u = state.u
    grid = state.grid
    ell = _sht.degrees(u.band)
    lap = _sht.synthesize(grid, -ell * (ell + 1.0) * np.asarray(u.coeffs), u.band)
    vals = -lap - state.h1.values * state.eu**2 + 1.0 - state.coupling_weight * state.psi.density
    r_u = ScalarField(grid, vals, u.band)
    a = state.psi.coeffs
    Ga = state.gram @ a
    r_psi = SpinorState(state.basis, state.basis.eigenvalues * a - Ga)
    # part of h2 e^u psi that the truncated basis cannot represent, taken
    # from the pointwise difference (a difference of squared norms cancels)
    w = state.coupling_weight
    p, q = state.psi.components
    pp, qp = SpinorState(state.basis, Ga).components
    tail = float(np.sqrt(integrate(grid, np.abs(w * p - pp) ** 2 + np.abs(w * q - qp) ** 2)))
    return PDEResidual(r_u, r_psi, tail)


# --------------------------------------------------------------------------
# packing between states and real vectors


class _Packer:
    """Real vector <-> (u coefficients, spinor coefficients)."""

    def __init__(self, template: SolutionPair, band: int, parity: bool):
        self.t = template
        self.grid = template.grid
        self.basis = template.basis
        self.band = band
        ell = _sht.degrees(band)
        self.free = (ell % 2 == 0) if parity else np.ones(ell.size, dtype=bool)
        self.nu = int(self.free.sum())
        self.nb = self.basis.size
        self.n = self.nu + 2 * self.nb
        # transposed synthesis operator restricted to the free coefficients
        self.Y = self._basis_on_grid()

    def _basis_on_grid(self):
        eye = np.eye(_sht.n_coeffs(self.band))[self.free]
        return np.stack([_sht.synthesize(self.grid, row, self.band).reshape(-1) for row in eye], axis=1)

    def pack(self, state: SolutionPair) -> np.ndarray:
        c = _sht.resize(np.asarray(state.u.coeffs), self.band)[self.free]
        a = state.psi.coeffs
        return np.concatenate([c, a.real, a.imag])

    def unpack(self, x: np.ndarray) -> SolutionPair:
        c = np.zeros(_sht.n_coeffs(self.band))
        c[self.free] = x[: self.nu]
        a = x[self.nu : self.nu + self.nb] + 1j * x[self.nu + self.nb :]
        return self.t.replace(u=ScalarField.from_coeffs(self.grid, c), psi=SpinorState(self.basis, a))

    def analyze(self, values: np.ndarray) -> np.ndarray:
        """Quadrature projection of grid values onto the free harmonics."""
        return self.Y.T @ (values.reshape(-1) * self.grid.weights.reshape(-1))

    def join(self, gu: np.ndarray, gpsi: np.ndarray) -> np.ndarray:
        return np.concatenate([gu, gpsi.real, gpsi.imag])


# --------------------------------------------------------------------------
# augmented Lagrangian


def _merit_and_grad(P: _Packer, x, mu, r, gauge):
    st = P.unpack(x)
    grid = P.grid
    lam = P.basis.eigenvalues
    a = st.psi.coeffs
    eu = st.eu
    e2u = eu**2
    w = st.coupling_weight
    dens = st.psi.density
    G = st.gram
    Ga = G @ a
    ell = _sht.degrees(P.band)[P.free]
    c = x[: P.nu]

    # energy and its gradient
    D = float(np.sum(ell * (ell + 1.0) * c * c))
    int_u = float(np.sqrt(FOUR_PI) * c[0])
    A = float(np.sum(grid.weights * st.h1.values * e2u))
    C = float(np.vdot(a, Ga).real)
    N = float(np.sum(lam * np.abs(a) ** 2))
    E = D + 2 * int_u - A + 2 * (N - C) + FOUR_PI
    gu = 2 * ell * (ell + 1.0) * c - 2 * P.analyze(st.h1.values * e2u + w * dens)
    gu[0] += 2 * np.sqrt(FOUR_PI)
    gpsi = 4 * (lam * a - Ga)

    # constraints: mass, Nehari, negative part
    neg = lam < 0
    R_mass = A + C - FOUR_PI
    R_neh = N - C
    R_neg = lam[neg] * a[neg] - Ga[neg]
    k_mass = r * R_mass - mu[0]
    k_neh = r * R_neh - mu[1]
    k_neg = r * R_neg - (mu[2 : 2 + neg.sum()] + 1j * mu[2 + neg.sum() :])

    merit = E - mu[0] * R_mass - mu[1] * R_neh - float(np.sum(mu[2 : 2 + neg.sum()] * R_neg.real + mu[2 + neg.sum() :] * R_neg.imag))
    merit += 0.5 * r * (R_mass**2 + R_neh**2 + float(np.sum(np.abs(R_neg) ** 2)))

    gu = gu + k_mass * P.analyze(2 * st.h1.values * e2u + w * dens) - k_neh * P.analyze(w * dens)
    gpsi = gpsi + k_mass * 2 * Ga + k_neh * 2 * (lam * a - Ga)
    if neg.any():
        kext = np.zeros(P.nb, dtype=complex)
        kext[neg] = k_neg
        chi = SpinorState(P.basis, kext)
        p1, q1 = st.psi.components
        p2, q2 = chi.components
        pair = (p1 * np.conj(p2) + q1 * np.conj(q2)).real
        gu = gu - P.analyze(w * pair)
        gpsi = gpsi + lam * kext - G @ kext

    if gauge > 0:
        cen = np.array([np.sum(grid.weights * e2u * grid.coordinate(j)) for j in range(3)]) / FOUR_PI
        merit += 0.5 * gauge * float(cen @ cen)
        for j in range(3):
            gu = gu + gauge * cen[j] * P.analyze(2 * e2u * grid.coordinate(j)) / FOUR_PI

    cons = np.concatenate([[R_mass, R_neh], R_neg.real, R_neg.imag])
    return merit, P.join(gu, gpsi), cons, E


@dataclass
class SolveResult:
    state: SolutionPair
    energy: float
    iterations: int
    converged: bool
    history: list[dict] = field(default_factory=list)
    newton: "NewtonResult | None" = None
    message: str = ""

    def summary(self) -> dict:
        st = self.state
        return {
            "energy": self.energy,
            "iterations": self.iterations,
            "converged": self.converged,
            "message": self.message,
            "psi_l2": float(np.sqrt(st.psi.norm2())),
            "psi_h_half": float(np.sqrt(h_half_norm(st.psi).hilbert_norm2)),
            "s_functional": s_functional(st.u),
            "centroid": [float(v) for v in centroid(st.u)],
        }


def resolve_gauge(config: SolveConfig, h1: ScalarField, h2: ScalarField) -> float:
    """Weight of the centroid penalty used inside the augmented Lagrangian.

    With both coefficients constant the equations are conformally invariant
    and solutions come in noncompact families; the penalty selects the
    centroid-zero member, which is the one the grid resolves.  Otherwise it
    would bias the critical point, so the automatic choice is zero.
    Convergence is always judged on the unpenalised equations.
    """
    if config.gauge_weight is not None:
        return float(config.gauge_weight)
    constant = np.ptp(h1.values) <= 1e-12 and np.ptp(h2.values) <= 1e-12
    return 1.0 if constant else 0.0


def _is_even(f: ScalarField, tol: float = 1e-10) -> bool:
    return f.parity_residual() <= tol


def _project_even(state: SolutionPair) -> SolutionPair:
    c = np.array(state.u.coeffs)
    c[_sht.degrees(state.u.band) % 2 == 1] = 0.0
    return state.replace(u=ScalarField.from_coeffs(state.grid, c))


def _finish_check(state: SolutionPair, cfg: SolveConfig, parity: bool) -> tuple[bool, float, float, str]:
    """Converged means: Galerkin residual, constraints and the pointwise
    residuals (including the spinor tail outside the basis) all within tolerance."""
    res = pde_residual(state)
    g = res.galerkin_max() if not parity else max(_even_part(res.r_u), res.psi_max)
    cons = state.residuals.max_abs()
    if g > cfg.tol_gradient or cons > cfg.tol_constraint:
        return False, g, cons, f"residual {g:.3e}, constraints {cons:.3e}"
    if res.sup_u > cfg.tol_pde or res.psi_full > cfg.tol_pde:
        return False, g, cons, (
            f"discrete critical point does not resolve the equations: sup r_u = {res.sup_u:.3e}, "
            f"spinor residual with tail = {res.psi_full:.3e}"
        )
    return True, g, cons, "converged"


def _even_part(r_u: ScalarField) -> float:
    c = np.asarray(r_u.coeffs)
    return float(np.abs(c[_sht.degrees(r_u.band) % 2 == 0]).max())


def minimize(
    config: SolveConfig,
    h1: ScalarField,
    h2: ScalarField,
    init: SolutionPair | str | None = None,
    *,
    basis: DiracBasis | None = None,
    callback: Callable[[dict], None] | None = None,
) -> SolveResult:
    """Augmented-Lagrangian minimisation of the energy over the constraint set.

    Each outer iteration minimises the merit function with L-BFGS-B,
    updates the multipliers, and retracts the result onto the constraint
    set.  Once the Euler-Lagrange residual falls below
    ``config.newton_threshold`` a Newton polish finishes the solve.
    """
    grid = h1.grid
    if basis is None:
        basis = build_basis(grid, config.dirac_band)
    if config.parity and not (_is_even(h1) and _is_even(h2)):
        raise ValueError("parity-restricted solve needs even h1 and h2")
    if isinstance(init, SolutionPair):
        state = SolutionPair(init.u, init.psi, h1, h2)
    else:
        state = initial_state(config, h1, h2, basis, mode=init or config.init)
    if config.parity:
        state = _project_even(state)
    history: list[dict] = []

    def record(entry):
        history.append(entry)
        if callback is not None:
            callback(entry)
        log.debug("outer %(iteration)d merit=%(merit).6e residual=%(max_residual).3e energy=%(energy).10f", entry)

    try:
        state = retract(state, config.tol_constraint)
    except RetractionError as exc:
        return SolveResult(state, float("nan"), 0, False, history, message=f"initial retraction failed: {exc}")

    P = _Packer(state, config.L, config.parity)
    gauge = resolve_gauge(config, h1, h2)
    ncons = 2 + 2 * int(basis.negative.sum())
    mu = np.zeros(ncons)
    r = config.penalty
    prev_cons = np.inf
    newton = None

    for it in range(1, config.max_outer + 1):
        res = pde_residual(state)
        gmax = res.galerkin_max()
        if gmax <= config.newton_threshold:
            newton = newton_refine(state, config.tol_residual, max_iter=config.newton_max_iter, parity=config.parity)
            if newton.converged:
                done, g, cons, msg = _finish_check(newton.state, config, config.parity)
                state = newton.state
                E = energy(state)
                record({"iteration": it, "merit": E, "max_residual": max(g, cons), "energy": E, "stage": "newton"})
                # a polished critical point is final either way; report whether it resolves the PDE
                return SolveResult(state, E, it, done, history, newton, msg)

        x0 = P.pack(state)
        merits: list[float] = []

        def fun(x):
            try:
                m, g, _, _ = _merit_and_grad(P, x, mu, r, gauge)
            except OverflowGuardError:
                # trial points past the guard are rejected, the line search backtracks
                return np.inf, np.zeros_like(x)
            return m, g

        try:
            out = scipy_minimize(
                fun,
                x0,
                jac=True,
                method="L-BFGS-B",
                callback=lambda xk: merits.append(fun(xk)[0]),
                options={"maxiter": config.max_inner, "gtol": 1e-12, "ftol": 1e-15, "maxcor": 20},
            )
            m_end, _, cons, _ = _merit_and_grad(P, out.x, mu, r, gauge)
        except OverflowGuardError as exc:
            return SolveResult(state, energy(state), it, False, history, newton, f"overflow during inner solve: {exc}")
        mu = mu - r * cons
        cmax = float(np.abs(cons).max())
        if cmax > 0.25 * prev_cons:
            r *= config.penalty_growth
        prev_cons = cmax

        cand = P.unpack(out.x)
        try:
            cand = retract(cand, config.tol_constraint)
        except RetractionError:
            pass
        else:
            state = cand
        res = pde_residual(state)
        E = energy(state)
        record(
            {
                "iteration": it,
                "merit": float(m_end),
                "max_residual": max(res.galerkin_max(), state.residuals.max_abs()),
                "energy": E,
                "inner_iterations": int(out.nit),
                "merit_monotone": bool(np.all(np.diff(merits) <= 1e-12 * (1 + np.abs(merits[:-1])))) if len(merits) > 1 else True,
                "stage": "augmented-lagrangian",
            }
        )

    done, g, cons, msg = _finish_check(state, config, config.parity)
    return SolveResult(state, energy(state), config.max_outer, done, history, newton, msg if done else f"iteration limit reached; {msg}")


def initial_state(config: SolveConfig, h1: ScalarField, h2: ScalarField, basis: DiracBasis, mode: str | None = None) -> SolutionPair:
    """Starting state: ``zero``, ``perturbed-special`` or ``random`` (seeded)."""
    mode = mode or config.init
    grid = h1.grid
    rng = np.random.default_rng(config.seed)
    if mode == "zero":
        return SolutionPair(ScalarField.constant(grid, 0.0, config.L), SpinorState.zero(basis), h1, h2)
    if mode == "perturbed-special":
        rho = max(h2.mean(), 1.0)
        u = ScalarField.constant(grid, -np.log(rho), config.L)
        u = u + random_field(grid, config.L, rng, even=True, amplitude=config.noise)
        psi = killing_spinor(basis) * (np.sqrt(rho**2 - 1.0) / rho)
        return SolutionPair(u, psi, h1, h2)
    if mode == "random":
        from .dirac import random_spinor

        u = random_field(grid, config.L, rng, amplitude=0.1, even=config.parity)
        psi = random_spinor(basis, rng, scale=0.1)
        return SolutionPair(u, psi, h1, h2)
    raise ValueError(f"unknown init mode {mode!r}")


# --------------------------------------------------------------------------
# Newton polish


@dataclass
class NewtonResult:
    state: SolutionPair
    converged: bool
    iterations: int
    residual: float
    min_singular_value: float
    message: str = ""


def _galerkin(P: _Packer, st: SolutionPair) -> np.ndarray:
    ell = _sht.degrees(P.band)[P.free]
    c = _sht.resize(np.asarray(st.u.coeffs), P.band)[P.free]
    ru = ell * (ell + 1.0) * c - P.analyze(st.h1.values * st.eu**2 + st.coupling_weight * st.psi.density)
    ru[0] += np.sqrt(FOUR_PI)
    a = st.psi.coeffs
    rp = st.basis.eigenvalues * a - st.gram @ a
    return P.join(ru, rp)


def _jacobian(P: _Packer, st: SolutionPair) -> np.ndarray:
    grid = P.grid
    lam = P.basis.eigenvalues
    wq = grid.weights.reshape(-1)
    w = st.coupling_weight.reshape(-1)
    e2u = (st.eu**2).reshape(-1)
    dens = st.psi.density.reshape(-1)
    Y = P.Y
    ell = _sht.degrees(P.band)[P.free]
    nb = P.nb

    q = 2 * st.h1.values.reshape(-1) * e2u + w * dens
    Juu = np.diag(ell * (ell + 1.0)) - Y.T @ ((q * wq)[:, None] * Y)

    top, bot = P.basis.components
    T = top.reshape(nb, -1)
    B = bot.reshape(nb, -1)
    p, s = (c.reshape(-1) for c in st.psi.components)
    # <phi_n, psi> pointwise, shape (nb, nodes)
    pair = T * np.conj(p) + B * np.conj(s)
    M = Y.T @ ((w * wq)[:, None] * pair.T)  # (nu, nb): int w Y <phi_n, psi>
    Jua = np.hstack([-2 * M.real, 2 * M.imag])
    # rows of r_psi: d/dc of -(G a)_n = -int w Y <psi, phi_n> = -conj(M)
    Mc = np.conj(M).T
    Jau = np.vstack([-Mc.real, -Mc.imag])
    K = np.diag(lam).astype(complex) - st.gram
    Jaa = np.block([[K.real, -K.imag], [K.imag, K.real]])
    return np.block([[Juu, Jua], [Jau, Jaa]])


def newton_refine(
    state: SolutionPair,
    tol: float = 1e-10,
    *,
    max_iter: int = 20,
    threshold: float = 1.0,
    parity: bool = False,
    band: int | None = None,
) -> NewtonResult:
    """Damped Gauss-Newton on the Galerkin residual of both equations.

    The linearisation is singular along symmetry directions (spinor phase,
    rotations, conformal motions when ``h1`` is constant), so steps are
    minimum-norm least-squares solutions.  The smallest singular value of
    the last Jacobian is reported.
    """
    band = state.grid.L if band is None else band
    P = _Packer(state, band, parity)
    x = P.pack(state)
    try:
        F = _galerkin(P, P.unpack(x))
    except OverflowGuardError as exc:
        return NewtonResult(state, False, 0, float("inf"), float("nan"), str(exc))
    fmax = float(np.abs(F).max())
    if fmax <= tol:
        return NewtonResult(state, True, 0, fmax, float("nan"), "already converged")
    if fmax > threshold:
        return NewtonResult(state, False, 0, fmax, float("nan"), f"residual {fmax:.3e} above the Newton threshold {threshold:.1e}")
    smin = float("nan")
    for it in range(1, max_iter + 1):
        st = P.unpack(x)
        J = _jacobian(P, st)
        sv = np.linalg.svd(J, compute_uv=False)
        smin = float(sv[-1])
        step, *_ = np.linalg.lstsq(J, -F, rcond=1e-12)
        t = 1.0
        norm0 = np.linalg.norm(F)
        while t >= 1.0 / 64:
            try:
                Fn = _galerkin(P, P.unpack(x + t * step))
            except OverflowGuardError:
                Fn = None
            if Fn is not None and np.linalg.norm(Fn) < norm0:
                break
            t /= 2
        else:
            return NewtonResult(state, False, it, fmax, smin, "damped step failed to reduce the residual")
        x = x + t * step
        F = Fn
        fmax = float(np.abs(F).max())
        if fmax <= tol:
            return NewtonResult(P.unpack(x), True, it, fmax, smin, "converged")
    return NewtonResult(state, False, max_iter, fmax, smin, "iteration limit reached")


# --------------------------------------------------------------------------
# continuation in rho


def rho_schedule(config: SolveConfig) -> np.ndarray:
    n = int(round((config.rho_end - config.rho_start) / config.rho_step))
    return config.rho_start + config.rho_step * np.arange(n + 1)


def continuation(config: SolveConfig, h1: ScalarField | None = None, rhos=None) -> list[dict]:
    """Solve along ``h2 = rho`` for the configured schedule with warm starts.

    Returns one record per ``rho`` with the energy, the spinor norms and the
    coupling integral; the accepted states are attached under ``"state"``.
    """
    grid = build_grid(config.L) if h1 is None else h1.grid
    h1 = ScalarField.constant(grid, 1.0, config.L) if h1 is None else h1
    basis = build_basis(grid, config.dirac_band)
    rhos = rho_schedule(config) if rhos is None else np.asarray(rhos, dtype=float)
    out = []
    prev: SolutionPair | None = None
    for rho in rhos:
        h2 = ScalarField.constant(grid, float(rho), config.L)
        init = None if prev is None else SolutionPair(prev.u, prev.psi, h1, h2)
        if init is not None and prev.psi.norm2() == 0.0 and rho > 1.0:
            init = None
        result = minimize(config, h1, h2, init, basis=basis)
        st = result.state
        hh = h_half_norm(st.psi)
        out.append(
            {
                "rho": float(rho),
                "converged": result.converged,
                "energy": result.energy,
                "psi_l2": float(np.sqrt(st.psi.norm2())),
                "psi_h_half": float(np.sqrt(hh.hilbert_norm2)),
                "coupling": coupling_integral(st),
                "state": st,
            }
        )
        prev = st
    return out
