"""Tests for filter-function evaluation and frequency-domain integrals.

The independent oracle for the filter function is brute-force time-domain
quadrature of |(1/2) integral e^{i omega t} Omega(t) dt|^2 with each
constant segment resolved by a fine Simpson rule.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.integrate import simpson

from slepian_qns import SlepianParams, compute_dpss
from slepian_qns.filters import (
    band_area,
    band_integral,
    broadband_integral,
    comb_filter,
    cpmg_passband,
    dpss_passband,
    effective_nyquist,
    filter_eval,
    filter_uniform_grid,
    passband,
    segment_areas,
    total_area,
)
from slepian_qns.noise import GaussianMixture, psd_eval
from slepian_qns.waveforms import (
    Waveform,
    cpmg_rse,
    dpss_waveform,
    modulate,
    normalize_power,
    repeat_base,
)


def oracle_filter(w, omega):
    """Time-domain quadrature oracle, per-segment Simpson (65 nodes each)."""
    edges = np.arange(w.n_samples + 1) * w.dt
    out = np.empty(np.shape(omega))
    for i, om in np.ndenumerate(np.atleast_1d(omega)):
        acc = 0.0 + 0.0j
        for n in range(w.n_samples):
            t = np.linspace(edges[n], edges[n + 1], 65)
            acc += w.samples[n] * simpson(np.exp(1j * om * t), x=t)
        out[i] = np.abs(0.5 * acc) ** 2
    return out.reshape(np.shape(omega))


@pytest.fixture(scope="module")
def random_waveform():
    rng = np.random.default_rng(17)
    return Waveform(rng.normal(size=64) * 200.0, dt=2e-6, label="random")


def test_filter_matches_time_domain_oracle(random_waveform):
    w = random_waveform
    omega = np.concatenate([
        np.linspace(0.0, np.pi / w.dt, 23),
        [1.3 * np.pi / w.dt, 1.7 * np.pi / w.dt],
    ])
    got = filter_eval(w, omega)
    want = oracle_filter(w, omega)
    assert_allclose(got, want, rtol=2e-7, atol=1e-8 * want.max())


def test_filter_dc_value_is_quarter_squared_rotation(random_waveform):
    w = random_waveform
    theta = np.sum(w.samples) * w.dt
    assert_allclose(filter_eval(w, 0.0), theta**2 / 4.0, rtol=1e-12)


def test_filter_alias_ratio_is_exact(random_waveform):
    w = random_waveform
    wn = np.pi / w.dt
    omega = np.linspace(0.05 * wn, 0.95 * wn, 41)
    ratio = filter_eval(w, 2 * wn - omega) / filter_eval(w, omega)
    assert_allclose(ratio, omega**2 / (2 * wn - omega) ** 2, rtol=1e-9)


def test_total_area_matches_time_domain_power(random_waveform):
    # Parseval: integral of F over the whole line = (pi/2) * integral Omega^2 dt,
    # with the left side computed by frequency-domain quadrature
    w = random_waveform
    assert_allclose(total_area(w), 0.5 * np.pi * w.power, rtol=1e-12)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(min_value=3, max_value=300), seed=st.integers(0, 2**32 - 1))
def test_property_total_area_parseval(n, seed):
    rng = np.random.default_rng(seed)
    w = Waveform(rng.normal(size=n) * 100.0, dt=4e-6)
    assert_allclose(total_area(w), 0.5 * np.pi * w.power, rtol=1e-10)


def test_filter_uniform_grid_matches_pointwise(random_waveform):
    omega, F = filter_uniform_grid(random_waveform, 256)
    assert_allclose(F, filter_eval(random_waveform, omega),
                    rtol=1e-10, atol=1e-12 * F.max())


# ---------------------------------------------------------------------------
# Band integrals


def test_band_area_of_shifted_taper_tracks_concentration():
    # a cosine-shifted order-k envelope holds about lambda_k/2 of its filter
    # area inside the shifted band
    params = SlepianParams(500, 1.0 / 500.0)
    dt = 4e-6
    tapers = compute_dpss(params, max_order=1)
    ws = 2 * np.pi * 5e3
    for taper in tapers:
        w = normalize_power(
            modulate(dpss_waveform(taper, 1.0, dt), "cos", ws), 900.0
        )
        pb = dpss_passband(w, ws, params.half_bandwidth)
        expected = taper.concentration / 2.0 * total_area(w) / np.pi
        assert abs(pb.area / expected - 1.0) < 0.02


def test_passband_clips_at_zero():
    w = Waveform(np.ones(100) * 10.0, dt=1e-5)
    pb = passband(w, center=1000.0, half_width=5000.0)
    assert pb.lo == 0.0
    assert pb.hi == 6000.0
    assert pb.area > 0


def test_cpmg_passband_location():
    T, N = 2e-3, 500
    for n in (2, 10):
        w = cpmg_rse(n, 670.0, T, N if N % (2 * n) == 0 else 2 * n * (N // (2 * n)))
        pb = cpmg_passband(w, n)
        assert pb.center == pytest.approx(n * np.pi / T, rel=1e-12)
        assert pb.hi - pb.lo == pytest.approx(4 * np.pi / T, rel=1e-12)
        # most of a high-order sequence's low-frequency area sits in its band
        if n == 10:
            inband = pb.area
            below = band_area(w, 0.0, pb.lo)
            assert inband > 5 * below


def test_segment_areas_sum_to_band_area(random_waveform):
    w = random_waveform
    d_omega = 2 * np.pi * 2e3
    A = segment_areas(w, d_omega, 12)
    assert A.shape == (12,)
    assert np.all(A >= 0)
    total_band = band_area(w, 0.0, 12 * d_omega)
    assert_allclose(A.sum(), total_band, rtol=1e-6)


def test_broadband_integral_matches_direct_simpson():
    # dual quadrature route: FFT-grid Simpson vs direct DTFT Simpson
    rng = np.random.default_rng(5)
    w = Waveform(rng.normal(size=100) * 100.0, dt=4e-6)
    model = GaussianMixture(amplitudes=(3e-4,), centers=(2 * np.pi * 30e3,),
                            widths=(2 * np.pi * 40e3,))
    weight = lambda om: psd_eval(model, om)
    cut = 8 * np.pi / w.dt
    fast, _ = broadband_integral(w, weight, omega_cut=cut)
    slow = band_integral(w, 0.0, cut, weight=weight, rel_tol=1e-9)
    assert_allclose(fast, slow, rtol=1e-6)


def test_broadband_integral_with_unit_weight_approaches_total_area():
    rng = np.random.default_rng(6)
    w = Waveform(rng.normal(size=80) * 50.0, dt=4e-6)
    val, _ = broadband_integral(w, lambda om: np.ones_like(om),
                                omega_cut=512 * np.pi / w.dt)
    # the one-sided integral approaches half the full-line area (pi/4 * power)
    assert abs(val / (np.pi / 4 * w.power) - 1.0) < 2e-3


# ---------------------------------------------------------------------------
# Comb filters and effective Nyquist


def test_comb_filter_equals_repeated_waveform_filter():
    base = cpmg_rse(2, 400.0, 1e-3, 40)
    R = 7
    rep = repeat_base(base, R)
    # avoid the exact harmonic singularities of the analytic kernel
    omega = np.linspace(137.0, 5e5, 400)
    assert_allclose(comb_filter(base, R, omega), filter_eval(rep, omega),
                    rtol=1e-8, atol=1e-6)


def test_comb_filter_harmonic_teeth():
    base = cpmg_rse(2, 400.0, 1e-3, 40)
    R = 15
    T_B = base.duration
    harmonics = 2 * np.pi * np.arange(1, 9) / T_B
    assert_allclose(comb_filter(base, R, harmonics),
                    R**2 * filter_eval(base, harmonics), rtol=1e-10)


def test_effective_nyquist_harmonic_branch():
    T_B = 942e-6
    durations = []
    for j in range(1, 13):
        Tj = T_B / j
        durations += [Tj / 4, Tj / 2, Tj / 4]
    wn = effective_nyquist(durations, n_seq=12, T_B=T_B)
    assert wn / (2 * np.pi) == pytest.approx(12.0 / T_B, rel=1e-12)
    assert wn / (2 * np.pi) == pytest.approx(12738.85, abs=1.0)


def test_effective_nyquist_grid_branch():
    wn = effective_nyquist([1e-3, 1.5e-3], n_seq=50, T_B=1e-3)
    assert wn == pytest.approx(np.pi / 0.5e-3, rel=1e-12)


def test_effective_nyquist_incommensurate_raises():
    with pytest.raises(ValueError):
        effective_nyquist([1e-3, 1e-3 / np.pi], n_seq=2, T_B=1e-3)
