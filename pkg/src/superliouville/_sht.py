"""Real spherical-harmonic transforms on a :class:`SphereGrid`.

Convention: real orthonormal harmonics with the Condon-Shortley phase,

    Y_l0      = Pbar_l0(cos t)
    Y_lm      = sqrt(2) Pbar_lm(cos t) cos(m p)      (m > 0)
    Y_l,-m    = sqrt(2) Pbar_lm(cos t) sin(m p)      (m > 0)

with ``Pbar_lm`` the orthonormalised associated Legendre function
(including the (-1)^m phase).  Coefficients are stored flat at
``index(l, m) = l*l + l + m``.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from .geometry import GridError, SphereGrid

SQRT2 = np.sqrt(2.0)


def n_coeffs(band: int) -> int:
    return (band + 1) ** 2


def index(l: int, m: int) -> int:
    return l * l + l + m


def band_of(n: int) -> int:
    band = int(round(np.sqrt(n))) - 1
    if (band + 1) ** 2 != n:
        raise ValueError(f"{n} is not a valid coefficient count")
    return band


def degrees(band: int) -> np.ndarray:
    """Degree ``l`` for every flat coefficient slot."""
    return np.repeat(np.arange(band + 1), 2 * np.arange(band + 1) + 1)


def orders(band: int) -> np.ndarray:
    return np.concatenate([np.arange(-l, l + 1) for l in range(band + 1)])


def legendre_table(band: int, x: np.ndarray) -> np.ndarray:
    """Orthonormal associated Legendre functions, shape ``(band+1, band+1, len(x))``.

    ``P[m, l]`` holds ``Pbar_lm(x)`` for ``l >= m`` and zero otherwise.
    """
    x = np.asarray(x, dtype=float)
    s = np.sqrt(np.clip(1.0 - x * x, 0.0, None))
    P = np.zeros((band + 1, band + 1, x.size))
    pmm = np.full(x.size, 1.0 / np.sqrt(4.0 * np.pi))
    for m in range(band + 1):
        if m > 0:
            pmm = -np.sqrt((2 * m + 1) / (2.0 * m)) * s * pmm
        P[m, m] = pmm
        if m + 1 <= band:
            P[m, m + 1] = np.sqrt(2 * m + 3.0) * x * pmm
        for l in range(m + 2, band + 1):
            a = np.sqrt((4.0 * l * l - 1.0) / (l * l - m * m))
            b = np.sqrt(((l - 1.0) ** 2 - m * m) / (4.0 * (l - 1.0) ** 2 - 1.0))
            P[m, l] = a * (x * P[m, l - 1] - b * P[m, l - 2])
    return P


def legendre_dtheta(P: np.ndarray, x: np.ndarray) -> np.ndarray:
    """d/dtheta of the table from :func:`legendre_table` (off the poles)."""
    band = P.shape[0] - 1
    s = np.sqrt(1.0 - x * x)
    dP = np.zeros_like(P)
    for m in range(band + 1):
        for l in range(max(m, 1), band + 1):
            c = np.sqrt((2 * l + 1.0) * (l * l - m * m) / (2 * l - 1.0)) if l > m else 0.0
            prev = P[m, l - 1] if l - 1 >= m else 0.0
            dP[m, l] = (l * x * P[m, l] - c * prev) / s
    return dP


@lru_cache(maxsize=32)
def _ring_tables(n_theta: int, band: int, x_bytes: bytes):
    x = np.frombuffer(x_bytes, dtype=float)
    P = legendre_table(band, x)
    dP = legendre_dtheta(P, x)
    P.setflags(write=False)
    dP.setflags(write=False)
    return P, dP


def _tables(grid: SphereGrid, band: int):
    if band > grid.max_band:
        raise GridError(f"band {band} exceeds grid capability {grid.max_band}")
    return _ring_tables(grid.n_theta, band, grid.cos_theta.tobytes())


def _pack_complex(coeffs: np.ndarray, band: int) -> np.ndarray:
    """Flat real coefficients -> complex array C[m, l] = c_lm - i c_l,-m (m>0)."""
    C = np.zeros((band + 1, band + 1), dtype=complex)
    for l in range(band + 1):
        base = l * l + l
        C[0, l] = coeffs[base]
        if l:
            m = np.arange(1, l + 1)
            C[m, l] = SQRT2 * (coeffs[base + m] - 1j * coeffs[base - m])
    return C


def synthesize(grid: SphereGrid, coeffs: np.ndarray, band: int | None = None) -> np.ndarray:
    """Grid values of ``sum c_lm Y_lm``; shape ``grid.shape``."""
    coeffs = np.asarray(coeffs, dtype=float)
    band = band_of(coeffs.size) if band is None else band
    P, _ = _tables(grid, band)
    C = _pack_complex(coeffs, band)
    F = np.einsum("ml,mlt->tm", C, P)
    return _ring_irfft(grid, F)


def _ring_irfft(grid: SphereGrid, F: np.ndarray) -> np.ndarray:
    n = grid.n_phi
    X = np.zeros((grid.n_theta, n // 2 + 1), dtype=complex)
    X[:, 0] = n * F[:, 0].real
    X[:, 1 : F.shape[1]] = (n / 2.0) * F[:, 1:]
    return np.fft.irfft(X, n=n, axis=1)


def analyze(grid: SphereGrid, values, band: int) -> np.ndarray:
    """Real-harmonic coefficients of grid ``values`` up to ``band``."""
    values = np.asarray(values, dtype=float).reshape(grid.shape)
    P, _ = _tables(grid, band)
    F = np.fft.rfft(values, axis=1)[:, : band + 1]
    F = F * (grid.ring_weights * (2.0 * np.pi / grid.n_phi))[:, None]
    # A[m, l] = sum_t F[t, m] Pbar_lm(x_t)
    A = np.einsum("tm,mlt->ml", F, P)
    out = np.empty(n_coeffs(band))
    for l in range(band + 1):
        base = l * l + l
        out[base] = A[0, l].real
        if l:
            m = np.arange(1, l + 1)
            out[base + m] = SQRT2 * A[m, l].real
            out[base - m] = -SQRT2 * A[m, l].imag
    return out


def synthesize_gradient(grid: SphereGrid, coeffs: np.ndarray, band: int | None = None) -> np.ndarray:
    """Cartesian surface gradient of ``sum c_lm Y_lm``, shape ``grid.shape + (3,)``."""
    coeffs = np.asarray(coeffs, dtype=float)
    band = band_of(coeffs.size) if band is None else band
    P, dP = _tables(grid, band)
    C = _pack_complex(coeffs, band)
    g_theta = _ring_irfft(grid, np.einsum("ml,mlt->tm", C, dP))
    m = np.arange(band + 1)
    F_phi = np.einsum("ml,mlt->tm", C * (1j * m)[:, None], P) / grid.sin_theta[:, None]
    g_phi = _ring_irfft(grid, F_phi)
    return _to_cartesian(grid, g_theta, g_phi)


def _to_cartesian(grid: SphereGrid, g_theta: np.ndarray, g_phi: np.ndarray) -> np.ndarray:
    ct = grid.cos_theta[:, None]
    st = grid.sin_theta[:, None]
    cp = np.cos(grid.phi)[None, :]
    sp = np.sin(grid.phi)[None, :]
    gx = g_theta * ct * cp - g_phi * sp
    gy = g_theta * ct * sp + g_phi * cp
    gz = -g_theta * st
    return np.stack([gx, gy, gz], axis=-1)


def basis_matrix(points: np.ndarray, band: int) -> np.ndarray:
    """``Y[k, idx]`` = real harmonic ``idx`` evaluated at ``points[k]``."""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    r = np.linalg.norm(points, axis=1)
    z = np.clip(points[:, 2] / r, -1.0, 1.0)
    ph = np.arctan2(points[:, 1], points[:, 0])
    P = legendre_table(band, z)
    Y = np.empty((points.shape[0], n_coeffs(band)))
    for l in range(band + 1):
        base = l * l + l
        Y[:, base] = P[0, l]
        for m in range(1, l + 1):
            Y[:, base + m] = SQRT2 * P[m, l] * np.cos(m * ph)
            Y[:, base - m] = SQRT2 * P[m, l] * np.sin(m * ph)
    return Y


def evaluate_at(points: np.ndarray, coeffs: np.ndarray, band: int | None = None, chunk: int = 4096) -> np.ndarray:
    """Evaluate ``sum c_lm Y_lm`` at arbitrary unit vectors."""
    coeffs = np.asarray(coeffs, dtype=float)
    band = band_of(coeffs.size) if band is None else band
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    out = np.empty(points.shape[0])
    for start in range(0, points.shape[0], chunk):
        sl = slice(start, start + chunk)
        out[sl] = basis_matrix(points[sl], band) @ coeffs[: n_coeffs(band)]
    return out


def filter_zonal(coeffs: np.ndarray, band: int, multipliers: np.ndarray) -> np.ndarray:
    """Multiply each degree-``l`` block by ``multipliers[l]``."""
    return coeffs[: n_coeffs(band)] * multipliers[degrees(band)]


def resize(coeffs: np.ndarray, band: int) -> np.ndarray:
    """Truncate or zero-pad a flat coefficient vector to ``band``."""
    out = np.zeros(n_coeffs(band))
    k = min(out.size, coeffs.size)
    out[:k] = coeffs[:k]
    return out
