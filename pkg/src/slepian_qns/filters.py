"""Filter functions of piecewise-constant waveforms and their integrals.

For a drive ``Omega(t)`` the (first-order, amplitude-quadrature) filter
function is ``F(omega) = |(1/2) integral_0^T e^{i omega t} Omega(t) dt|^2``.
Holding the drive constant over ``dt`` intervals factorizes this exactly
into a segment envelope ``sin^2(omega dt/2)/omega^2`` times the squared
DTFT of the sample sequence, which is what all evaluations here use; no
continuum approximation is involved.

All one-sided band areas follow the convention ``A = (1/pi) integral_a^b
F(omega) d omega``, so a waveform's total one-sided area exactly equals
half its time-domain power ``integral Omega^2 dt`` (Parseval).
"""

from dataclasses import dataclass
from fractions import Fraction
from math import gcd

import numpy as np
from scipy.fft import next_fast_len
from scipy.integrate import simpson
from scipy.special import diric

from .dtft import centered_dtft, centered_dtft_grid

# one-sided broadband integrals are truncated at this multiple of the
# sampling Nyquist frequency pi/dt unless the caller overrides it
BROADBAND_CUT_FACTOR = 8.0


def spectral_weight(omega, dt):
    """Segment envelope ``sin^2(omega dt/2)/omega^2``; ``dt^2/4`` at zero."""
    x = np.asarray(omega, dtype=float) * dt / (2.0 * np.pi)
    return (dt * dt / 4.0) * np.sinc(x) ** 2


def filter_eval(waveform, omega):
    """Evaluate the filter function at angular frequencies ``omega``."""
    mag2 = np.abs(centered_dtft(waveform.samples, waveform.dt, omega)) ** 2
    return spectral_weight(omega, waveform.dt) * mag2


def filter_uniform_grid(waveform, n_grid):
    """Filter values on the FFT grid covering ``[0, 2*pi/dt)``.

    Returns
    -------
    omega : ndarray
    values : ndarray
    """
    omega, d = centered_dtft_grid(waveform.samples, waveform.dt, n_grid)
    return omega, spectral_weight(omega, waveform.dt) * np.abs(d) ** 2


def total_area(waveform):
    """Integral of F over the whole real line, by frequency-domain sums.

    The segment envelopes of all Nyquist aliases add up to exactly
    ``dt^2/4``, so the full-line integral reduces to one period of the
    squared DTFT, which the periodic trapezoid rule (>= 2N nodes) integrates
    exactly -- the result matches ``(pi/2) integral Omega^2 dt`` to rounding.
    """
    n = waveform.n_samples
    m = next_fast_len(2 * n)
    mag2 = np.abs(np.fft.fft(waveform.samples, m)) ** 2
    dt = waveform.dt
    return float((dt * dt / 4.0) * (2.0 * np.pi / (m * dt)) * mag2.sum())


def _lobe_nodes(waveform, lo, hi):
    """Initial Simpson node count: >= 32 per main-lobe width 2*pi/T."""
    lobes = (hi - lo) * waveform.duration / (2.0 * np.pi)
    n = max(65, 32 * int(np.ceil(lobes)) + 1)
    return n if n % 2 == 1 else n + 1


def band_integral(waveform, lo, hi, weight=None, rel_tol=1e-8,
                  max_doublings=12):
    """``integral_lo^hi F(omega) * weight(omega) d omega`` by composite
    Simpson with grid doubling until ``rel_tol`` is met."""
    if hi <= lo:
        return 0.0
    f = (lambda om: filter_eval(waveform, om)) if weight is None else (
        lambda om: filter_eval(waveform, om) * weight(om))
    n = _lobe_nodes(waveform, lo, hi)
    x = np.linspace(lo, hi, n)
    prev = simpson(f(x), x=x)
    for _ in range(max_doublings):
        n = 2 * n - 1
        x = np.linspace(lo, hi, n)
        cur = simpson(f(x), x=x)
        rel = abs(cur - prev) / max(abs(cur), abs(prev), 1e-300)
        prev = cur
        if rel < rel_tol:
            break
    return float(prev)


def band_area(waveform, lo, hi, rel_tol=1e-8):
    """One-sided band area ``(1/pi) integral_lo^hi F d omega``."""
    return band_integral(waveform, lo, hi, rel_tol=rel_tol) / np.pi


@dataclass(frozen=True)
class PassbandSpec:
    """A waveform's analysis band and its one-sided filter area."""

    lo: float
    hi: float
    center: float
    area: float


def passband(waveform, center, half_width, rel_tol=1e-8):
    """Passband around ``center`` clipped at zero, with its area."""
    lo = max(0.0, center - half_width)
    hi = center + half_width
    return PassbandSpec(lo=lo, hi=hi, center=center,
                        area=band_area(waveform, lo, hi, rel_tol=rel_tol))


def dpss_passband(waveform, omega_s, half_bandwidth, rel_tol=1e-8):
    """Passband of a Slepian envelope modulated to ``omega_s``: the shifted
    concentration band of half-width ``2*pi*W/dt``."""
    b0 = 2.0 * np.pi * half_bandwidth / waveform.dt
    return passband(waveform, omega_s, b0, rel_tol=rel_tol)


def cpmg_passband(waveform, n_switches, rel_tol=1e-8):
    """Passband of a CPMG-timed flat-top sequence: centered on the switching
    harmonic ``n*pi/T`` with half-width ``2*pi/T``."""
    T = waveform.duration
    return passband(waveform, n_switches * np.pi / T, 2.0 * np.pi / T,
                    rel_tol=rel_tol)


def segment_areas(waveform, d_omega, n_segments, rel_tol=1e-8,
                  max_doublings=10):
    """One-sided filter areas over contiguous segments ``[(q-1), q] d_omega``.

    Returns
    -------
    ndarray, shape (n_segments,)
        ``A_q = (1/pi) integral_{(q-1) d_omega}^{q d_omega} F d omega``.
    """
    lobes = d_omega * waveform.duration / (2.0 * np.pi)
    n = max(33, 32 * int(np.ceil(lobes)) + 1)
    if n % 2 == 0:
        n += 1

    def rows(n_nodes):
        offsets = np.linspace(0.0, d_omega, n_nodes)
        grid = d_omega * np.arange(n_segments)[:, None] + offsets[None, :]
        vals = filter_eval(waveform, grid.ravel()).reshape(grid.shape)
        return simpson(vals, x=offsets, axis=1)

    prev = rows(n)
    for _ in range(max_doublings):
        n = 2 * n - 1
        cur = rows(n)
        rel = np.max(np.abs(cur - prev) / np.maximum(np.abs(cur).max(), 1e-300))
        prev = cur
        if rel < rel_tol:
            break
    return prev / np.pi


def filter_fft_grid(waveform, omega_cut=None, points_per_period=32):
    """Filter values on a uniform grid from 0 to (a grid-snapped)
    ``omega_cut``, computed with a single FFT.

    The squared DTFT is periodic with period ``2*pi/dt``, so values beyond
    the first period are tiled and only the segment envelope changes.

    Returns
    -------
    omega : ndarray, shape (n+1,) with n even (ready for Simpson weights)
    values : ndarray
    """
    dt = waveform.dt
    period = 2.0 * np.pi / dt
    if omega_cut is None:
        omega_cut = BROADBAND_CUT_FACTOR * np.pi / dt
    m = next_fast_len(points_per_period * waveform.n_samples)
    h = period / m
    n_cut = int(round(omega_cut / h))
    if n_cut % 2 == 1:
        n_cut += 1
    j = np.arange(n_cut + 1)
    omega = j * h
    mag2 = np.abs(np.fft.fft(waveform.samples, m)) ** 2
    return omega, spectral_weight(omega, dt) * mag2[j % m]


def broadband_integral(waveform, weight, omega_cut=None, rel_tol=1e-8,
                       max_doublings=6):
    """``integral_0^omega_cut F(omega) * weight(omega) d omega`` on a fast
    uniform grid.

    One FFT per refinement supplies all grid values; the grid is doubled
    until Simpson converges to ``rel_tol``.  ``omega_cut`` defaults to eight
    times the sampling Nyquist frequency and snaps to the nearest grid node.

    Returns
    -------
    value : float
    rel_err : float
        Relative change in the last doubling.
    """
    ppp = 32
    prev, rel = None, np.inf
    for _ in range(max_doublings + 1):
        omega, F = filter_fft_grid(waveform, omega_cut, ppp)
        cur = simpson(F * weight(omega), dx=omega[1] - omega[0])
        if prev is not None:
            rel = abs(cur - prev) / max(abs(cur), abs(prev), 1e-300)
            if rel < rel_tol:
                return float(cur), rel
        prev = cur
        ppp *= 2
    return float(prev), rel


def comb_filter(base_waveform, n_repeats, omega):
    """Filter of ``n_repeats`` back-to-back copies of a base sequence.

    Equals the base filter times the squared Dirichlet kernel
    ``sin^2(omega R T_B / 2) / sin^2(omega T_B / 2)``, which peaks at
    ``R^2`` on the harmonics ``2*pi*h/T_B`` with tooth width ~``1/R``.
    """
    T_B = base_waveform.duration
    kernel = (n_repeats * diric(np.asarray(omega, dtype=float) * T_B,
                                n_repeats)) ** 2
    return kernel * filter_eval(base_waveform, omega)


def effective_nyquist(segment_durations, n_seq, T_B, grid_resolution=1e-12):
    """Highest angular frequency a comb family can sample reliably.

    Takes the smaller of the harmonic-coverage limit ``2*n_seq*pi/T_B``
    (``n_seq`` distinct base durations, longest ``T_B``) and the timing-grid
    limit ``pi/dt_gcf``, where ``dt_gcf`` is the greatest common divisor of
    all flat-top segment durations, found by exact rational arithmetic.

    Raises
    ------
    ValueError
        If the durations share no common grid coarser than
        ``grid_resolution`` seconds.
    """
    if n_seq < 1 or T_B <= 0:
        raise ValueError("need n_seq >= 1 and T_B > 0")
    fracs = []
    for d in segment_durations:
        if d <= 0:
            raise ValueError("segment durations must be positive")
        fracs.append(Fraction(float(d)).limit_denominator(10**12))
    g = fracs[0]
    for f in fracs[1:]:
        g = Fraction(gcd(g.numerator * f.denominator,
                         f.numerator * g.denominator),
                     g.denominator * f.denominator)
    dt_gcf = float(g)
    if dt_gcf < grid_resolution:
        raise ValueError(
            "segment durations share no common time grid above %g s"
            % grid_resolution
        )
    return min(2.0 * n_seq * np.pi / T_B, np.pi / dt_gcf)
