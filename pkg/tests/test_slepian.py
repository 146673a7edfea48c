"""Tests for discrete prolate spheroidal sequences and spectral windows.

The independent oracle is a dense eigendecomposition of the band-limiting
Toeplitz kernel sin(2*pi*W*(n-m))/(pi*(n-m)); the production code must
reproduce its eigenvalues everywhere and its eigenvectors wherever the
eigenvalue gaps are large enough for the comparison to be well posed.
"""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose
from scipy.linalg import eigh, toeplitz

from slepian_qns import (
    SlepianParams,
    compute_dpss,
    dpswf_eval,
    dpswf_uniform_grid,
    rho_K,
    shannon_number,
)


def dense_oracle(N, W, max_order):
    """Top eigenpairs of the dense Toeplitz concentration kernel."""
    m = np.arange(1, N)
    col = np.insert(np.sin(2 * np.pi * W * m) / (np.pi * m), 0, 2 * W)
    vals, vecs = eigh(toeplitz(col))
    order = np.argsort(vals)[::-1][: max_order + 1]
    return vals[order], vecs[:, order]


# ---------------------------------------------------------------------------
# Shannon number


@pytest.mark.parametrize(
    "N, W, expected",
    [
        (200, 0.008, 3),
        (400, 0.008, 6),
        (800, 0.008, 12),
        (1600, 0.008, 25),
        (500, 1.0 / 500.0, 2),
    ],
)
def test_shannon_number(N, W, expected):
    assert shannon_number(SlepianParams(N, W)) == expected


def test_params_validation():
    with pytest.raises(ValueError):
        SlepianParams(100, 0.6)  # W out of range
    with pytest.raises(ValueError):
        SlepianParams(100, -0.1)
    with pytest.raises(ValueError):
        SlepianParams(100, 0.001)  # 2NW < 1
    with pytest.raises(ValueError):
        SlepianParams(1, 0.25)


# ---------------------------------------------------------------------------
# Eigenvalues / eigenvectors against the dense oracle


def test_eigenvalues_match_dense_oracle():
    N, W = 64, 0.1
    vals, _ = dense_oracle(N, W, 12)
    tapers = compute_dpss(SlepianParams(N, W), max_order=12)
    lam = np.array([t.concentration for t in tapers])
    assert_allclose(lam, vals, atol=1e-8, rtol=0)


@pytest.mark.parametrize("N, W", [(64, 0.02), (128, 0.015)])
def test_eigenvectors_match_dense_oracle(N, W):
    # Parameters chosen so the top eigenvalue gaps are >> 1e-7 and the
    # eigenvector comparison is numerically well posed.
    max_order = 5
    vals, vecs = dense_oracle(N, W, max_order)
    gaps = -np.diff(vals)
    assert gaps.min() > 1e-7
    tapers = compute_dpss(SlepianParams(N, W), max_order=max_order)
    for k, taper in enumerate(tapers):
        v = taper.sequence
        ref = vecs[:, k]
        if np.dot(v, ref) < 0:
            ref = -ref
        assert np.max(np.abs(v - ref)) < 1e-8


def test_orthonormality():
    tapers = compute_dpss(SlepianParams(500, 0.008), max_order=13)
    V = np.stack([t.sequence for t in tapers], axis=1)
    gram = V.T @ V
    assert np.max(np.abs(gram - np.eye(V.shape[1]))) < 1e-10


@pytest.mark.parametrize("N, W", [(200, 0.008), (500, 0.002), (257, 0.01)])
def test_parity_and_sign_conventions(N, W):
    tapers = compute_dpss(SlepianParams(N, W), max_order=min(7, N - 1))
    n = np.arange(N) - (N - 1) / 2.0
    for taper in tapers:
        k = taper.order
        v = taper.sequence
        # v_n = (-1)^k v_{N-1-n}
        assert np.max(np.abs(v - (-1) ** k * v[::-1])) < 1e-10
        if k % 2 == 0:
            assert v.sum() > 0
        else:
            assert np.dot(n, v) > 0


def test_eigenvalues_strictly_ordered_in_unit_interval():
    # 2NW = 25.6: the top dozen concentrations all round to 1.0 in float64,
    # so strict ordering exercises the saturation handling.
    tapers = compute_dpss(SlepianParams(1600, 0.008), max_order=30)
    lam = np.array([t.concentration for t in tapers])
    assert np.all(lam > 0.0) and np.all(lam < 1.0)
    assert np.all(np.diff(lam) < 0.0)


@settings(max_examples=10, deadline=None)
@given(
    N=st.integers(min_value=32, max_value=256),
    two_NW=st.floats(min_value=1.5, max_value=12.0),
)
def test_property_orthonormal_and_parity(N, two_NW):
    W = two_NW / (2 * N)
    if not (0 < W < 0.5):
        return
    params = SlepianParams(N, W)
    K = shannon_number(params)
    tapers = compute_dpss(params, max_order=min(K + 1, N - 1))
    V = np.stack([t.sequence for t in tapers], axis=1)
    assert np.max(np.abs(V.T @ V - np.eye(V.shape[1]))) < 1e-9
    for t in tapers:
        assert np.max(np.abs(t.sequence - (-1) ** t.order * t.sequence[::-1])) < 1e-9
    lam = np.array([t.concentration for t in tapers])
    assert np.all((lam > 0) & (lam < 1)) and np.all(np.diff(lam) < 0)


# ---------------------------------------------------------------------------
# Spectral windows


def test_dpswf_matches_direct_sum():
    params = SlepianParams(64, 0.05)
    dt = 2e-6
    tapers = compute_dpss(params, max_order=4)
    omega = np.linspace(-3e5, 3e5, 211)
    n = np.arange(64) - (64 - 1) / 2.0
    for taper in tapers:
        direct = np.cos(np.outer(omega * dt, n)) @ taper.sequence
        if taper.order % 2 == 1:
            direct = -np.sin(np.outer(omega * dt, n)) @ taper.sequence
        assert_allclose(dpswf_eval(taper, dt, omega), direct, atol=1e-12)


def test_dpswf_uniform_grid_matches_direct_eval():
    params = SlepianParams(100, 0.02)
    dt = 4e-6
    for taper in compute_dpss(params, max_order=3):
        omega, vals = dpswf_uniform_grid(taper, dt, 512)
        assert_allclose(vals, dpswf_eval(taper, dt, omega), atol=1e-10)


def test_dpswf_parity_in_frequency():
    params = SlepianParams(80, 0.03)
    dt = 1e-5
    omega = np.linspace(0, np.pi / dt, 97)
    for taper in compute_dpss(params, max_order=3):
        sym = 1.0 if taper.order % 2 == 0 else -1.0
        assert_allclose(
            dpswf_eval(taper, dt, -omega),
            sym * dpswf_eval(taper, dt, omega),
            atol=1e-12,
        )


def test_dpswf_orthogonality_over_principal_domain():
    # integral over one full period of U_k U_l equals (2 pi / dt) delta_kl;
    # U_k U_l is a trigonometric polynomial of degree <= N-1 in omega*dt, so
    # the periodic trapezoid rule with >= 2N nodes is exact.
    params = SlepianParams(60, 0.04)
    dt = 3e-6
    tapers = compute_dpss(params, max_order=4)
    M = 4 * 60
    U = np.stack([dpswf_uniform_grid(t, dt, M)[1] for t in tapers])
    gram = (U @ U.T) * (2 * np.pi / dt / M)
    assert_allclose(gram, (2 * np.pi / dt) * np.eye(len(tapers)), atol=1e-8)


def test_concentration_equals_band_energy_fraction():
    # Independent quadrature oracle: lambda_k must equal the fraction of the
    # window's energy inside the analysis band B0 = (-2 pi W / dt, 2 pi W/dt).
    N, W = 100, 0.02
    dt = 1e-3
    params = SlepianParams(N, W)
    tapers = compute_dpss(params, max_order=3)
    b0 = 2 * np.pi * W / dt
    # in-band integral by fine Simpson quadrature
    from scipy.integrate import simpson

    grid = np.linspace(-b0, b0, 8193)
    M = 4 * N
    for taper in tapers:
        inband = simpson(dpswf_eval(taper, dt, grid) ** 2, x=grid)
        total = np.sum(dpswf_uniform_grid(taper, dt, M)[1] ** 2) * (
            2 * np.pi / dt / M
        )
        assert abs(inband / total - taper.concentration) < 1e-6


# ---------------------------------------------------------------------------
# Average spectral window rho_K


def test_rho_K_normalization_and_evenness():
    params = SlepianParams(200, 0.008)
    dt = 4e-6
    M = 4 * 200
    omega = 2 * np.pi * np.arange(M) / (M * dt)
    rho = rho_K(params, dt, omega)
    # integral over the principal domain equals 2 pi / dt (exact trapezoid)
    total = np.sum(rho) * (2 * np.pi / dt / M)
    assert_allclose(total, 2 * np.pi / dt, rtol=1e-10)
    probe = np.linspace(0, np.pi / dt, 311)
    assert_allclose(rho_K(params, dt, -probe), rho_K(params, dt, probe), atol=1e-12)


def test_rho_K_approximates_flat_band():
    # With 2NW = 12.8 the average window is close to (1/2W) inside the band
    # and small outside it.
    params = SlepianParams(800, 0.008)
    dt = 1e-6
    b0 = 2 * np.pi * params.half_bandwidth / dt
    inside = np.linspace(-0.8 * b0, 0.8 * b0, 101)
    outside = np.linspace(2 * b0, 10 * b0, 101)
    flat = 1.0 / (2 * params.half_bandwidth)
    r_in = rho_K(params, dt, inside)
    r_out = rho_K(params, dt, outside)
    assert np.all(np.abs(r_in / flat - 1.0) < 0.25)
    assert np.all(r_out / flat < 0.02)
