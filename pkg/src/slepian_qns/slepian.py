"""Discrete prolate spheroidal sequences (DPSS) and spectral windows.

The order-``k`` Slepian sequence of length ``N`` and half-bandwidth ``W``
(cycles per sample) maximizes, among sequences orthogonal to all lower
orders, the fraction ``lambda_k`` of its spectral energy inside the band
``|omega| <= 2*pi*W/dt``.  Sequences are computed from the tridiagonal
matrix that commutes with the band-limiting Toeplitz kernel (Slepian 1978;
Percival & Walden 1993, ch. 8), which is numerically robust at large ``N``,
and the concentrations are recovered as Rayleigh quotients with the
Toeplitz kernel itself.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import eigh_tridiagonal, matmul_toeplitz

from .dtft import centered_dtft, centered_dtft_grid


@dataclass(frozen=True)
class SlepianParams:
    """Length and half-bandwidth defining a Slepian family.

    Parameters
    ----------
    n_samples : int
        Sequence length N (>= 2).
    half_bandwidth : float
        Concentration half-bandwidth W in cycles per sample, 0 < W < 0.5.
        The time-bandwidth product 2*N*W must be at least 1.
    """

    n_samples: int
    half_bandwidth: float

    def __post_init__(self):
        N, W = self.n_samples, self.half_bandwidth
        if N < 2:
            raise ValueError("n_samples must be at least 2")
        if not (0.0 < W < 0.5):
            raise ValueError("half_bandwidth must lie in (0, 0.5)")
        if 2 * N * W < 1.0:
            raise ValueError("time-bandwidth product 2*N*W must be >= 1")


@dataclass(frozen=True)
class Taper:
    """One Slepian sequence with its spectral concentration."""

    order: int
    sequence: np.ndarray = field(repr=False)
    concentration: float
    params: SlepianParams


def shannon_number(params):
    """Number of well-concentrated sequences, ``K = floor(2*N*W)``.

    A tiny epsilon guards against binary representation of W pushing an
    exactly integer product just below the integer.
    """
    x = 2.0 * params.n_samples * params.half_bandwidth
    return int(np.floor(x + 1e-9))


def _sinc_kernel_column(N, W):
    """First column of the band-limiting Toeplitz kernel."""
    m = np.arange(1, N)
    return np.insert(np.sin(2 * np.pi * W * m) / (np.pi * m), 0, 2.0 * W)


def compute_dpss(params, max_order=None):
    """Compute Slepian sequences of orders ``0..max_order``.

    Parameters
    ----------
    params : SlepianParams
    max_order : int, optional
        Highest order to return.  Defaults to ``shannon_number(params) - 1``.

    Returns
    -------
    list of Taper
        Orthonormal sequences ordered by decreasing concentration, with
        the sign convention ``sum_n v_n > 0`` for even orders and
        ``sum_n (n - (N-1)/2) v_n > 0`` for odd orders.
    """
    N, W = params.n_samples, params.half_bandwidth
    if max_order is None:
        max_order = shannon_number(params) - 1
    if not (0 <= max_order < N):
        raise ValueError("max_order must lie in [0, n_samples)")

    # Tridiagonal matrix commuting with the Toeplitz kernel; its top
    # eigenvectors are the Slepian sequences in order.
    n = np.arange(N)
    diag = ((N - 1 - 2 * n) / 2.0) ** 2 * np.cos(2 * np.pi * W)
    off = n[1:] * (N - n[1:]) / 2.0
    _, vecs = eigh_tridiagonal(
        diag, off, select="i", select_range=(N - 1 - max_order, N - 1)
    )
    vecs = vecs[:, ::-1]  # order 0 first

    # Enforce the exact (-1)^k reversal symmetry the continuous problem has.
    orders = np.arange(max_order + 1)
    signs = np.where(orders % 2 == 0, 1.0, -1.0)
    vecs = 0.5 * (vecs + signs[np.newaxis, :] * vecs[::-1, :])
    vecs /= np.linalg.norm(vecs, axis=0, keepdims=True)

    # Sign convention.
    centered = n - (N - 1) / 2.0
    for k in orders:
        ref = vecs[:, k].sum() if k % 2 == 0 else centered @ vecs[:, k]
        if ref < 0:
            vecs[:, k] = -vecs[:, k]

    # Concentrations as Rayleigh quotients with the Toeplitz kernel.
    col = _sinc_kernel_column(N, W)
    lam = np.einsum("nk,nk->k", vecs, matmul_toeplitz((col, col), vecs))

    # For 2NW >> 1 the leading concentrations are within eps of 1 and the
    # Rayleigh quotients tie at 1.0 in float64; nudge by ulps so the values
    # stay strictly inside (0, 1) and strictly decreasing.
    tiny = np.finfo(float).tiny
    lam = np.clip(lam, tiny, None)
    upper = np.nextafter(1.0, 0.0)
    for k in orders:
        lam[k] = min(lam[k], upper)
        upper = np.nextafter(lam[k], 0.0)

    return [
        Taper(order=int(k), sequence=vecs[:, k].copy(),
              concentration=float(lam[k]), params=params)
        for k in orders
    ]


def dpswf_eval(taper, dt, omega):
    """Evaluate the (real) spectral window of a taper.

    ``U_k(omega) = eps_k * sum_n v_n exp(1j*omega*(n-(N-1)/2)*dt)`` with
    ``eps_k = 1`` for even and ``1/1j`` for odd orders, so that the result
    is real for both parities.

    Parameters
    ----------
    taper : Taper
    dt : float
        Sample duration in seconds.
    omega : float or ndarray
        Angular frequencies (rad/s).

    Returns
    -------
    float or ndarray
    """
    d = centered_dtft(taper.sequence, dt, omega)
    return d.real if taper.order % 2 == 0 else -d.imag


def dpswf_uniform_grid(taper, dt, n_grid):
    """Spectral window on the FFT grid ``omega_j = 2*pi*j/(n_grid*dt)``.

    Returns
    -------
    omega : ndarray, shape (n_grid,)
    values : ndarray, shape (n_grid,)
    """
    omega, d = centered_dtft_grid(taper.sequence, dt, n_grid)
    vals = d.real if taper.order % 2 == 0 else -d.imag
    return omega, vals


def rho_K(params, dt, omega, n_tapers=None):
    """Average squared spectral window over the first ``n_tapers`` orders.

    ``rho_K(omega) = (1/K) sum_{k<K} U_k(omega)^2`` approximates the ideal
    flat band ``1/(2W)`` on ``|omega| < 2*pi*W/dt`` as N grows.

    Parameters
    ----------
    params : SlepianParams
    dt : float
        Sample duration in seconds.
    omega : float or ndarray
        Angular frequencies (rad/s).
    n_tapers : int, optional
        Number of orders to average; defaults to the Shannon number.
    """
    K = shannon_number(params) if n_tapers is None else int(n_tapers)
    if K < 1:
        raise ValueError("n_tapers must be positive")
    tapers = compute_dpss(params, max_order=K - 1)
    acc = np.zeros(np.shape(omega), dtype=float)
    for taper in tapers:
        acc = acc + np.square(dpswf_eval(taper, dt, omega))
    return acc / K
