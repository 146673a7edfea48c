"""Noise power spectral density models and Gaussian trajectory synthesis.

PSD values carry units of seconds (equivalently 1/Hz, two-sided in angular
frequency); all frequencies are angular (rad/s).  Trajectories are drawn in
the frequency domain: independent complex-Gaussian amplitudes with variance
proportional to the PSD at each FFT bin, inverse-transformed and truncated
to the requested length, with the FFT block at least four times the
trajectory so the wrap-around correlation bias is negligible.
"""

import warnings
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import next_fast_len

from .quadrature import adaptive_simpson

# Trajectories are generated in fixed-size batches, each batch from its own
# child generator, so results are reproducible independent of how many
# trajectories are requested at once or across how many workers.
BATCH = 256

# Fraction of spectral weight beyond the sampling band that triggers the
# aliasing warning.
_ALIAS_TOL = 1e-3


@dataclass(frozen=True)
class Lorentzian:
    """``S(omega) = amplitude / (1 + ((|omega| - center)/width)^2)``."""

    amplitude: float
    width: float
    center: float = 0.0

    def __post_init__(self):
        if self.amplitude < 0:
            raise ValueError("amplitude must be non-negative")
        if self.width <= 0:
            raise ValueError("width must be positive")
        if self.center < 0:
            raise ValueError("center must be non-negative")

    def evaluate(self, omega):
        x = (np.abs(omega) - self.center) / self.width
        return self.amplitude / (1.0 + x * x)


@dataclass(frozen=True)
class GaussianMixture:
    """Sum of Gaussian bumps ``a_i exp(-(|omega|-c_i)^2 / (2 s_i^2))``."""

    amplitudes: tuple
    centers: tuple
    widths: tuple

    def __post_init__(self):
        a, c, s = map(np.atleast_1d, (self.amplitudes, self.centers, self.widths))
        if not (len(a) == len(c) == len(s)) or len(a) == 0:
            raise ValueError("amplitudes, centers, widths must have equal length")
        if np.any(a < 0) or np.any(np.asarray(s) <= 0) or np.any(np.asarray(c) < 0):
            raise ValueError("need amplitudes >= 0, widths > 0, centers >= 0")

    def evaluate(self, omega):
        w = np.abs(np.asarray(omega, dtype=float))
        out = np.zeros_like(w)
        for a, c, s in zip(self.amplitudes, self.centers, self.widths):
            out += a * np.exp(-((w - c) ** 2) / (2.0 * s * s))
        return out


@dataclass(frozen=True)
class WhitePlusLine:
    """White floor plus a Lorentzian line, hard-cut beyond ``cutoff``."""

    floor: float
    line_amplitude: float
    line_width: float
    line_center: float
    cutoff: float

    def __post_init__(self):
        if self.floor < 0 or self.line_amplitude < 0:
            raise ValueError("floor and line_amplitude must be non-negative")
        if self.line_width <= 0 or self.cutoff <= 0:
            raise ValueError("line_width and cutoff must be positive")
        if self.line_center < 0:
            raise ValueError("line_center must be non-negative")

    def evaluate(self, omega):
        w = np.abs(np.asarray(omega, dtype=float))
        x = (w - self.line_center) / self.line_width
        val = self.floor + self.line_amplitude / (1.0 + x * x)
        return np.where(w <= self.cutoff, val, 0.0)


def psd_eval(model, omega):
    """Evaluate a PSD model at angular frequencies ``omega`` (rad/s)."""
    return model.evaluate(omega)


def _psd_weight(model, lo, hi, n0, rel_tol):
    """Integrate the PSD over ``[lo, hi]``, splitting at a hard cutoff so
    composite Simpson never straddles the discontinuity."""
    edges = [lo, hi]
    cut = getattr(model, "cutoff", None)
    if cut is not None and lo < cut < hi:
        edges = [lo, float(cut), hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if a == cut:
            # start the upper segment infinitesimally past the cutoff so the
            # one-sided limit at the jump never enters the Simpson sums (a
            # single nonzero endpoint otherwise halves the composite value
            # on every doubling and defeats the convergence test)
            a = np.nextafter(a, b)
        val, _ = adaptive_simpson(lambda w: psd_eval(model, w), a, b,
                                  n0=n0, rel_tol=rel_tol)
        total += val
    return total


def psd_variance(model, dt):
    """Process variance within the sampling band,
    ``(1/pi) * integral_0^{pi/dt} S(omega) d omega``."""
    return _psd_weight(model, 0.0, np.pi / dt, n0=4097, rel_tol=1e-9) / np.pi


@dataclass(frozen=True)
class NoiseTrajectory:
    """Equally spaced samples of one noise realization."""

    samples: np.ndarray
    dt: float


def _aliasing_ratio(model, dt):
    # only feeds a warn-above-threshold comparison, so a loose tolerance
    # keeps narrow spectral lines from forcing millions of quadrature nodes
    band = _psd_weight(model, 0.0, np.pi / dt, n0=2049, rel_tol=1e-3)
    tail = _psd_weight(model, np.pi / dt, 4.0 * np.pi / dt,
                       n0=2049, rel_tol=1e-3)
    return tail / max(band, np.finfo(float).tiny)


_aliasing_ratio_cached = lru_cache(maxsize=64)(_aliasing_ratio)


def _check_aliasing(model, dt):
    # the built-in models are frozen dataclasses, so the (model, dt) pair
    # is hashable and the quadrature runs once per configuration; the
    # warning itself is re-issued on every offending call
    try:
        ratio = _aliasing_ratio_cached(model, dt)
    except TypeError:
        ratio = _aliasing_ratio(model, dt)
    if ratio > _ALIAS_TOL:
        warnings.warn(
            "PSD has %.2g of its weight beyond the sampling band; "
            "synthesized noise will alias" % ratio,
            UserWarning,
            stacklevel=3,
        )


def _synthesize_rows(model, dt, length, n_rows, rng):
    """Draw ``n_rows`` trajectories of ``length`` samples with one generator."""
    block = next_fast_len(max(4 * length, 256), real=True)
    nbins = block // 2 + 1
    omega = 2.0 * np.pi * np.arange(nbins) / (block * dt)
    scale = np.sqrt(block * psd_eval(model, omega) / dt)
    # draw only the bins the PSD populates: a hard-cut model leaves most of
    # the oversampled band at exactly zero scale, and the wasted normal
    # variates would dominate the synthesis cost
    active = np.flatnonzero(scale)
    z = rng.standard_normal((n_rows, active.size, 2))
    # reinterpret the draw pairs as complex bins and scale in place; the
    # spectra are large enough that avoiding temporaries is a real win
    cols = z.view(np.complex128)[:, :, 0]
    cols *= scale[active] / np.sqrt(2.0)
    # DC (and Nyquist, when present) bins are real and carry the full weight
    for bin_idx in (0, nbins - 1) if block % 2 == 0 else (0,):
        pos = np.searchsorted(active, bin_idx)
        if pos < active.size and active[pos] == bin_idx:
            cols[:, pos] = np.sqrt(2.0) * cols[:, pos].real
    if active.size == nbins:
        spec = cols
    else:
        spec = np.zeros((n_rows, nbins), dtype=np.complex128)
        spec[:, active] = cols
    return np.fft.irfft(spec, block, axis=-1)[:, :length]


def synthesize_batch(model, dt, length, n_traj, seed, stream=0,
                     check_aliasing=True):
    """Draw ``n_traj`` independent noise trajectories.

    Parameters
    ----------
    model : PSD model
    dt : float
        Sample spacing in seconds.
    length : int
        Samples per trajectory.
    n_traj : int
        Number of trajectories.
    seed : int
        Non-negative base seed.
    stream : int
        Sub-stream index, for drawing independent groups under one seed.
    check_aliasing : bool
        Warn if the PSD extends beyond the sampling band.

    Returns
    -------
    ndarray, shape (n_traj, length)
        Row ``i`` depends only on ``(seed, stream, i)``, so any prefix of a
        larger request reproduces a smaller one.
    """
    if seed < 0:
        raise ValueError("seed must be non-negative")
    if check_aliasing:
        _check_aliasing(model, dt)
    out = np.empty((n_traj, length), dtype=float)
    for b in range(0, n_traj, BATCH):
        rows = min(BATCH, n_traj - b)
        rng = np.random.default_rng(
            np.random.SeedSequence([int(seed), int(stream), b // BATCH])
        )
        out[b:b + rows] = _synthesize_rows(model, dt, length, rows, rng)
    return out


def synthesize(model, dt, duration, seed):
    """Draw a single noise trajectory of the given duration.

    Parameters
    ----------
    model : PSD model
    dt : float
        Sample spacing in seconds.
    duration : float
        Trajectory duration in seconds; the sample count is ``round(duration/dt)``.
    seed : int
        Non-negative seed.

    Returns
    -------
    NoiseTrajectory
    """
    length = int(round(duration / dt))
    if length < 1:
        raise ValueError("duration must cover at least one sample")
    samples = synthesize_batch(model, dt, length, 1, seed)[0]
    return NoiseTrajectory(samples=samples, dt=dt)
