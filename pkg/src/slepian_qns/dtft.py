"""Phase-centered discrete-time Fourier transforms of finite sequences.

For a length-``N`` sequence ``x`` sampled every ``dt`` seconds the centered
transform is

    D(omega) = sum_n x[n] * exp(1j * omega * (n - (N-1)/2) * dt)

Referencing the phase to the sequence midpoint keeps the transform of a
symmetric sequence purely real and that of an antisymmetric one purely
imaginary, which the spectral-window and filter-function code relies on.
"""

import numpy as np

# Maximum number of (omega, n) products held in memory at once by the
# direct evaluator before chunking over the frequency axis.
_CHUNK_BUDGET = 4_000_000


def centered_dtft(x, dt, omega):
    """Evaluate the centered DTFT of ``x`` at arbitrary frequencies.

    Parameters
    ----------
    x : ndarray, shape (N,)
        Sequence samples.
    dt : float
        Sample duration in seconds.
    omega : float or ndarray
        Angular frequencies (rad/s) at which to evaluate.

    Returns
    -------
    ndarray of complex, same shape as ``omega``.
    """
    x = np.asarray(x, dtype=float)
    w = np.atleast_1d(np.asarray(omega, dtype=float))
    n = np.arange(x.size) - (x.size - 1) / 2.0
    out = np.empty(w.shape, dtype=complex)
    step = max(1, _CHUNK_BUDGET // max(1, x.size))
    for lo in range(0, w.size, step):
        hi = min(lo + step, w.size)
        phase = np.outer(w[lo:hi] * dt, n)
        out[lo:hi] = np.exp(1j * phase) @ x
    if np.isscalar(omega) or np.ndim(omega) == 0:
        return out[0]
    return out.reshape(np.shape(omega))


def centered_dtft_grid(x, dt, n_grid):
    """Centered DTFT on the uniform grid ``omega_j = 2*pi*j/(n_grid*dt)``.

    Covers one full period ``[0, 2*pi/dt)`` of the transform; uses a single
    FFT, so it is the preferred path for dense frequency grids.

    Parameters
    ----------
    x : ndarray, shape (N,)
        Sequence samples.
    dt : float
        Sample duration in seconds.
    n_grid : int
        Number of grid points; must be at least ``len(x)``.

    Returns
    -------
    omega : ndarray, shape (n_grid,)
    values : ndarray of complex, shape (n_grid,)
    """
    x = np.asarray(x, dtype=float)
    if n_grid < x.size:
        raise ValueError("n_grid must be at least the sequence length")
    j = np.arange(n_grid)
    omega = 2.0 * np.pi * j / (n_grid * dt)
    # sum_n x[n] exp(+i omega_j n dt) is the conjugate FFT; re-center phase.
    center = (x.size - 1) / 2.0
    values = np.exp(-1j * omega * center * dt) * np.conj(np.fft.fft(x, n_grid))
    return omega, values
