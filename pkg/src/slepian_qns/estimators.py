"""Spectral estimators built on band-limited filter functions.

Four layers, in the order an experiment uses them:

* single-setting records (`eigenestimate`, `ssqm_estimate`): measured
  signal divided by the filter's passband area, an estimate of the
  spectrum averaged over the band;
* bias diagnostics (`broadband_bias`, `local_bias`) with precomputed
  quadrature grids (`make_bias_context`), quantifying out-of-band leakage
  and in-band curvature error;
* the adaptive combination of several window orders per shift
  (`adaptive_multitaper`), which down-weights orders whose expected bias
  is comparable to the signal;
* cross-setting utilities: frequency-comb reconstruction on a harmonic
  grid, information-weighted interpolation onto a common segment grid,
  and a leakage-aware significance test.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np

from .filters import PassbandSpec, broadband_integral, filter_eval, \
    filter_fft_grid
from .noise import psd_eval
from .waveforms import Waveform, repeat_base

__all__ = [
    "EstimateRecord",
    "ShiftData",
    "AqmResult",
    "BiasContext",
    "CombReconstruction",
    "eigenestimate",
    "ssqm_estimate",
    "variance_bound",
    "aqm_variance_bound",
    "make_bias_context",
    "broadband_bias",
    "local_bias",
    "adaptive_multitaper",
    "aqm_effective_filter",
    "comb_transfer_matrix",
    "comb_expected_signals",
    "comb_reconstruct",
    "fisher_information",
    "fisher_variance_correction",
    "information_matrix",
    "interpolated_estimate",
    "significance_test",
]


# ---------------------------------------------------------------------------
# Single-setting records


@dataclass(frozen=True)
class EstimateRecord:
    """One spectrum point estimate with its bookkeeping.

    ``value`` estimates the spectrum averaged over the filter passband,
    ``signal / area``; ``variance`` is the measurement variance propagated
    through the same normalization.
    """

    omega_s: float
    order: int | None
    tag: str
    value: float
    variance: float
    area: float
    signal: float
    n_shots: int


def _record(result, pb, order, tag):
    return EstimateRecord(
        omega_s=result.omega_s, order=order, tag=tag,
        value=result.signal / pb.area,
        variance=result.variance / pb.area**2,
        area=pb.area, signal=result.signal, n_shots=result.n_shots)


def eigenestimate(result, passband, order=0):
    """Spectrum estimate from a single Slepian-windowed measurement.

    Parameters
    ----------
    result : ExperimentResult
        Measured attenuation signal and variance.
    passband : PassbandSpec
        Analysis band of the waveform that produced ``result``; its
        ``area`` normalizes the signal into spectral units.
    order : int
        Window order, recorded for later weighting.
    """
    return _record(result, passband, order, "eigen")


def ssqm_estimate(result, passband):
    """Spectrum estimate from a single quadrature-optimized window."""
    return _record(result, passband, None, "ssqm")


def variance_bound(area, n_shots):
    """Worst-case estimate variance ``1 / (4 M A^2)``.

    A single projective readout has variance at most 1/4, so the spectrum
    estimate ``signal / A`` from ``M`` shots has variance at most this
    bound regardless of the underlying probability.
    """
    return 1.0 / (4.0 * n_shots * np.asarray(area, float) ** 2)


def aqm_variance_bound(weights, areas, n_shots):
    """Variance bound for a weighted combination of window orders."""
    w = np.asarray(weights, float)
    return float(np.sum(w**2 * variance_bound(areas,
                                              np.asarray(n_shots, float))))


# ---------------------------------------------------------------------------
# Bias diagnostics


@dataclass(frozen=True, eq=False)
class BiasContext:
    """Cached quadrature grids for the bias integrals of one waveform.

    ``fw_full`` and ``fw_band`` hold Simpson-weighted filter values on the
    broadband grid [0, cut] and on a fine in-band grid, so each bias
    evaluation reduces to a dot product with spectrum samples.
    """

    area: float
    center: float
    omega_full: np.ndarray = field(repr=False)
    fw_full: np.ndarray = field(repr=False)
    omega_band: np.ndarray = field(repr=False)
    fw_band: np.ndarray = field(repr=False)
    first_moment: float


def _simpson_weights(n_points, spacing):
    if n_points < 3 or n_points % 2 == 0:
        raise ValueError("Simpson weights need an odd number of points")
    w = np.ones(n_points)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * (spacing / 3.0)


def make_bias_context(waveform, passband, omega_cut=None,
                      points_per_period=64, n_band_nodes=257):
    """Precompute the quadrature grids used by the bias estimates.

    Parameters
    ----------
    waveform : Waveform
    passband : PassbandSpec
    omega_cut : float, optional
        Upper limit of the broadband grid; defaults to eight times the
        sampling Nyquist frequency.
    points_per_period : int
        Broadband grid density per filter lobe.
    n_band_nodes : int
        Node count of the in-band grid (odd).
    """
    omega_full, f_full = filter_fft_grid(waveform, omega_cut,
                                         points_per_period)
    w_full = _simpson_weights(omega_full.size, omega_full[1] - omega_full[0])
    band = np.linspace(passband.lo, passband.hi, n_band_nodes)
    fw_band = _simpson_weights(n_band_nodes, band[1] - band[0]) * \
        filter_eval(waveform, band)
    return BiasContext(
        area=passband.area, center=passband.center,
        omega_full=omega_full, fw_full=w_full * f_full,
        omega_band=band, fw_band=fw_band,
        first_moment=float(fw_band @ (band - passband.center)))


def broadband_bias(spectrum, context):
    """Expected estimate excess from spectral weight outside the passband.

    ``(1 / (pi A)) [ integral_0^cut F S - integral_band F S ]`` for the
    spectrum function ``spectrum`` (callable on an array of rad/s).
    Nonnegative whenever the spectrum is.
    """
    s_full = np.asarray(spectrum(context.omega_full), float)
    s_band = np.asarray(spectrum(context.omega_band), float)
    return float((context.fw_full @ s_full - context.fw_band @ s_band)
                 / (np.pi * context.area))


def local_bias(slope, context):
    """Expected estimate excess from in-band spectral slope.

    For a spectrum locally ``S(w_s) + slope * (omega - w_s)`` the band
    average exceeds the center value by exactly
    ``slope * M1 / (pi A)`` with ``M1`` the filter's first moment about
    the band center; near-symmetric windows make this tiny.
    """
    return float(slope * context.first_moment / (np.pi * context.area))


# ---------------------------------------------------------------------------
# Adaptive multitaper combination


@dataclass(frozen=True)
class ShiftData:
    """All single-order measurements taken at one modulation frequency.

    ``records``, ``waveforms`` and ``passbands`` are index-aligned by
    window order.
    """

    omega_s: float
    records: tuple
    waveforms: tuple
    passbands: tuple


@dataclass(frozen=True, eq=False)
class AqmResult:
    """Adaptively weighted multitaper estimates over a shift grid.

    ``weights[p, k]`` are the final normalized order weights at shift
    ``p`` (each row sums to 1), ``slopes`` the spectral-derivative
    estimates used for the local-bias term on the last iteration (zero at
    the grid edges, where no centered difference exists).
    """

    shifts: np.ndarray
    estimates: np.ndarray
    variances: np.ndarray
    weights: np.ndarray
    slopes: np.ndarray
    n_iterations: int
    converged: bool


def adaptive_multitaper(shift_data, tolerance=1e-6, max_iter=50,
                        initial="mean", omega_cut=None, contexts=None):
    """Iteratively re-weight window orders by their expected bias.

    At each shift the order weights are ``d_k = S / (S + B_k)`` with ``S``
    the current (nonnegative-clipped) spectrum estimate interpolated over
    the shift grid and ``B_k`` the order's broadband-leakage plus
    local-slope bias; orders whose bias rivals the signal are suppressed.
    Iteration stops when the largest relative change of any estimate falls
    below ``tolerance``.

    Parameters
    ----------
    shift_data : sequence of ShiftData
        One entry per modulation frequency, in strictly increasing order
        of ``omega_s``, each with the same number of window orders.
    tolerance : float
        Relative convergence threshold on the estimates.
    max_iter : int
        Maximum number of re-weighting passes.
    initial : {"mean", "k0"}
        Start from the equal-weight average or from the order-0 record.
    omega_cut : float, optional
        Broadband grid limit passed to `make_bias_context`.
    contexts : sequence of sequences of BiasContext, optional
        Precomputed bias contexts aligned with ``shift_data`` (saves the
        grid setup when running many data sets on one geometry).

    Returns
    -------
    AqmResult
    """
    data = list(shift_data)
    if not data:
        raise ValueError("shift_data must not be empty")
    shifts = np.array([sd.omega_s for sd in data], float)
    if shifts.size > 1 and not np.all(np.diff(shifts) > 0):
        raise ValueError("shifts must be strictly increasing")
    n_orders = len(data[0].records)
    if any(len(sd.records) != n_orders for sd in data):
        raise ValueError("all shifts must carry the same number of orders")
    values = np.array([[r.value for r in sd.records] for sd in data])
    rec_vars = np.array([[r.variance for r in sd.records] for sd in data])
    n_shifts = shifts.size

    if contexts is None:
        contexts = [[make_bias_context(w, pb, omega_cut=omega_cut)
                     for w, pb in zip(sd.waveforms, sd.passbands)]
                    for sd in data]

    if initial == "mean":
        est = values.mean(axis=1)
    elif initial == "k0":
        est = values[:, 0].copy()
    else:
        raise ValueError("initial must be 'mean' or 'k0'")

    weights = np.full((n_shifts, n_orders), 1.0 / n_orders)
    slopes = np.zeros(n_shifts)
    converged = False
    n_iter = 0
    for n_iter in range(1, max_iter + 1):
        s_pos = np.clip(est, 0.0, None)
        slopes = np.zeros(n_shifts)
        if n_shifts >= 3:
            slopes[1:-1] = (s_pos[2:] - s_pos[:-2]) / (shifts[2:]
                                                       - shifts[:-2])

        def spectrum(om):
            return np.interp(om, shifts, s_pos)

        for p in range(n_shifts):
            d = np.zeros(n_orders)
            if s_pos[p] > 0.0:
                for k in range(n_orders):
                    ctx = contexts[p][k]
                    bias = broadband_bias(spectrum, ctx) + \
                        local_bias(slopes[p], ctx)
                    denom = s_pos[p] + bias
                    if denom > 0.0:
                        d[k] = s_pos[p] / denom
                np.clip(d, 0.0, 1.0, out=d)
            total = d.sum()
            weights[p] = d / total if total > 0.0 else 1.0 / n_orders
        new_est = np.einsum("pk,pk->p", weights, values)
        close = np.abs(new_est - est) <= tolerance * np.maximum(
            np.abs(new_est), np.abs(est))
        est = new_est
        if np.all(close):
            converged = True
            break

    variances = np.einsum("pk,pk->p", weights**2, rec_vars)
    return AqmResult(shifts=shifts, estimates=est, variances=variances,
                     weights=weights, slopes=slopes, n_iterations=n_iter,
                     converged=converged)


def aqm_effective_filter(waveforms, passbands, weights, omega):
    """Composite normalized filter ``sum_k d_k F_k(omega) / (pi A_k)``.

    Integrates to ``sum_k d_k`` over the passband, so normalized weights
    give a unit-area band profile.
    """
    omega = np.asarray(omega, float)
    out = np.zeros_like(omega)
    for w, pb, d in zip(waveforms, passbands, weights):
        if d != 0.0:
            out += d * filter_eval(w, omega) / (np.pi * pb.area)
    return out


# ---------------------------------------------------------------------------
# Frequency-comb reconstruction


def _comb_ratios(bases, T_B):
    ratios = []
    for base in bases:
        r = T_B / base.duration
        n = int(round(r))
        if n < 1 or abs(r - n) > 1e-9 * max(1.0, r):
            raise ValueError(
                "each base duration must divide the comb period T_B")
        ratios.append(n)
    return ratios


def comb_transfer_matrix(bases, n_repeats, T_B, h_max):
    """Delta-comb response matrix on the harmonic grid of ``T_B``.

    Repeating base ``j`` (duration ``T_B / r_j``) ``R_j`` times
    concentrates its filter into teeth of weight ``2 R_j / T_Bj`` at
    multiples of ``2 pi r_j / T_B``; entry ``[j, q]`` is the response of
    sequence ``j`` to spectral weight at harmonic ``q + 1`` of the
    fundamental ``2 pi / T_B`` (zero when the tooth comb skips it).

    Returns
    -------
    ndarray, shape (n_bases, h_max)
    """
    ratios = _comb_ratios(bases, T_B)
    out = np.zeros((len(bases), h_max))
    for j, (base, reps, r) in enumerate(zip(bases, n_repeats, ratios)):
        harmonics = np.arange(r, h_max + 1, r)
        if harmonics.size:
            out[j, harmonics - 1] = (2.0 * reps / base.duration) * \
                filter_eval(base, 2.0 * np.pi * harmonics / T_B)
    return out


def comb_expected_signals(model, bases, n_repeats, T_B, h_max, mode="delta",
                          omega_cut=None):
    """Expected attenuation signals of a family of repeated sequences.

    ``mode="delta"`` applies the idealized tooth model
    (`comb_transfer_matrix` times spectrum samples); ``mode="exact"``
    integrates the true repeated-waveform filter against the spectrum,
    finite tooth width, skirts and out-of-grid teeth included.  Pass
    ``omega_cut`` covering the spectrum's support in exact mode.
    """
    if mode == "delta":
        grid = 2.0 * np.pi * np.arange(1, h_max + 1) / T_B
        return comb_transfer_matrix(bases, n_repeats, T_B, h_max) @ \
            psd_eval(model, grid)
    if mode == "exact":
        out = []
        for base, reps in zip(bases, n_repeats):
            value, _ = broadband_integral(repeat_base(base, reps),
                                          lambda om: psd_eval(model, om),
                                          omega_cut=omega_cut)
            out.append(value / np.pi)
        return np.array(out)
    raise ValueError("mode must be 'delta' or 'exact'")


@dataclass(frozen=True, eq=False)
class CombReconstruction:
    """Spectrum samples recovered on a comb's harmonic grid."""

    omega: np.ndarray
    values: np.ndarray
    condition_number: float


def comb_reconstruct(signals, bases, n_repeats, T_B, h_max, cond_warn=1e8):
    """Invert the delta-comb model for spectrum samples at the harmonics.

    Solves the (triangular, when bases are ordered by repetition ratio)
    linear system by least squares and reports its condition number as a
    reliability diagnostic.  A condition number above ``cond_warn`` emits
    a warning; a rank-deficient system raises ``LinAlgError``.
    """
    transfer = comb_transfer_matrix(bases, n_repeats, T_B, h_max)
    sol, _, rank, sv = np.linalg.lstsq(transfer, np.asarray(signals, float),
                                       rcond=None)
    if rank < h_max:
        raise np.linalg.LinAlgError(
            f"comb transfer matrix is singular (rank {rank} < {h_max}); "
            "the base sequences do not determine all harmonics")
    cond = float(sv[0] / sv[-1]) if sv.size and sv[-1] > 0 else np.inf
    if cond > cond_warn:
        warnings.warn(
            f"comb reconstruction is ill-conditioned (cond {cond:.3g}); "
            "recovered samples may amplify measurement noise",
            RuntimeWarning, stacklevel=2)
    return CombReconstruction(
        omega=2.0 * np.pi * np.arange(1, h_max + 1) / T_B,
        values=sol, condition_number=cond)


# ---------------------------------------------------------------------------
# Information weighting across settings


def fisher_information(segment_areas_, p_hat, n_shots,
                       with_variance_correction=False):
    """Leading-order Fisher information of survival data about segment
    spectral weights, ``M A_q^2 / (P (1 - P))`` per segment.

    With ``with_variance_correction=True`` the Gaussian-approximation
    term from the estimator's variance dependence on the spectrum
    (`fisher_variance_correction`) is added; it is smaller than the
    leading term by ``(2P-1)^2 / (2 M P (1-P))``.
    """
    a = np.asarray(segment_areas_, float)
    info = n_shots * a**2 / (p_hat * (1.0 - p_hat))
    if with_variance_correction:
        info = info + fisher_variance_correction(segment_areas_, p_hat)
    return info


def fisher_variance_correction(segment_areas_, p_hat):
    """Information carried by the estimator's variance dependence on the
    spectrum, ``(1/2) (A_q (2P - 1) / (P (1 - P)))^2``.

    In the Gaussian approximation of an ``M``-shot average this adds to
    `fisher_information` but is smaller by ``(2P-1)^2 / (2 M P (1-P))``,
    negligible at realistic shot counts.
    """
    a = np.asarray(segment_areas_, float)
    return 0.5 * (a * (2.0 * p_hat - 1.0) / (p_hat * (1.0 - p_hat))) ** 2


def information_matrix(transfer, variances):
    """Per-setting information about each segment, ``T_pq^2 / var_p``.

    Parameters
    ----------
    transfer : ndarray, shape (P, Q)
        Normalized response of setting ``p`` to segment ``q`` (segment
        area over total passband area).
    variances : ndarray, shape (P,)
        Estimate variances of the settings.
    """
    t = np.asarray(transfer, float)
    v = np.asarray(variances, float)
    if np.any(v <= 0):
        raise ValueError("variances must be positive")
    return t**2 / v[:, None]


def interpolated_estimate(values, info, variances):
    """Combine setting estimates into segment estimates by information
    share.

    Weights ``W_pq = I_pq / sum_p I_pq`` mix the setting values; segments
    no setting is sensitive to are flagged unestimable and returned NaN.

    Returns
    -------
    estimates : ndarray, shape (Q,)
    variances : ndarray, shape (Q,)
    estimable : ndarray of bool, shape (Q,)
    """
    info = np.asarray(info, float)
    values = np.asarray(values, float)
    variances = np.asarray(variances, float)
    column = info.sum(axis=0)
    ok = column > 0
    weights = np.zeros_like(info)
    weights[:, ok] = info[:, ok] / column[ok]
    est = values @ weights
    var = variances @ weights**2
    est[~ok] = np.nan
    var[~ok] = np.nan
    return est, var, ok


def significance_test(values, bounds):
    """Detection z-scores of estimates against a flat-spectrum null.

    The null value is the grid mean of the estimates; deviations are
    scaled by the per-estimate worst-case standard deviations ``bounds``.
    Needs at least three estimates for the mean to be meaningful.
    """
    v = np.asarray(values, float)
    if v.size < 3:
        raise ValueError("significance test needs at least 3 estimates")
    return (v - v.mean()) / np.asarray(bounds, float)
