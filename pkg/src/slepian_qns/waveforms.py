"""Control waveform synthesis: Slepian envelopes, modulation, flat-top
sequences, and single-sequence quadrature-matched (SSQM) combinations.

A waveform is a piecewise-constant drive amplitude ``Omega_n`` (rad/s) held
over ``[n*dt, (n+1)*dt)``.  Cosine/sine modulation shifts a baseband
envelope's spectral weight to ``+-omega_s``; single-sideband modulation
uses the discrete analytic signal to keep only the upper half-band.
"""

from dataclasses import dataclass, field, replace

import numpy as np
from scipy.fft import next_fast_len
from scipy.optimize import minimize
from scipy.signal import hilbert

from .slepian import compute_dpss, dpswf_eval, shannon_number


@dataclass(frozen=True)
class Waveform:
    """Piecewise-constant control amplitude."""

    samples: np.ndarray = field(repr=False)
    dt: float
    label: str = ""
    omega_s: float = 0.0  # modulation shift used to build it, if any

    @property
    def n_samples(self):
        return self.samples.size

    @property
    def duration(self):
        return self.samples.size * self.dt

    @property
    def power(self):
        """Integrated squared amplitude, ``integral Omega^2 dt`` (rad^2/s)."""
        return float(np.sum(self.samples**2) * self.dt)


def dpss_waveform(taper, amplitude, dt, label=None):
    """Scale a unit-norm Slepian sequence into a drive envelope."""
    if label is None:
        label = "dpss-k%d" % taper.order
    return Waveform(samples=amplitude * taper.sequence, dt=dt, label=label)


def normalize_power(waveform, target):
    """Rescale so that ``integral Omega^2 dt`` equals ``target``."""
    p = waveform.power
    if p <= 0.0:
        raise ValueError("cannot normalize a zero waveform")
    if target < 0.0:
        raise ValueError("target power must be non-negative")
    return replace(waveform, samples=waveform.samples * np.sqrt(target / p))


def modulate(waveform, mode, omega_s):
    """Modulate a baseband envelope up to the shift frequency ``omega_s``.

    Parameters
    ----------
    waveform : Waveform
    mode : {"cos", "sin", "ssb"}
        Cosine or sine quadrature, or single-sideband (upper band) via the
        discrete analytic signal.
    omega_s : float
        Shift in rad/s; must satisfy ``0 <= omega_s < 2*pi/dt``.

    Returns
    -------
    Waveform
    """
    if not (0.0 <= omega_s < 2 * np.pi / waveform.dt):
        raise ValueError("omega_s must lie in [0, 2*pi/dt)")
    n = np.arange(waveform.n_samples)
    phase = n * omega_s * waveform.dt
    if mode == "cos":
        samples = waveform.samples * np.cos(phase)
    elif mode == "sin":
        samples = waveform.samples * np.sin(phase)
    elif mode == "ssb":
        # quadrature component from the analytic signal; zero-padding keeps
        # the periodic Hilbert transform from wrapping into the sequence
        padded = next_fast_len(4 * waveform.n_samples)
        quad = np.imag(hilbert(waveform.samples, N=padded))[: waveform.n_samples]
        samples = waveform.samples * np.cos(phase) - quad * np.sin(phase)
    else:
        raise ValueError("mode must be one of 'cos', 'sin', 'ssb'")
    label = "%s-%s" % (waveform.label, mode) if waveform.label else mode
    return Waveform(samples=samples, dt=waveform.dt, label=label,
                    omega_s=omega_s)


def cs_pair(taper, dt, omega_s, power):
    """Cosine/sine-modulated pair from one Slepian envelope.

    The pair is normalized jointly: the *summed* integrated power of the two
    waveforms equals ``power``, so their per-sample energies add up to the
    common baseband envelope.

    Returns
    -------
    (Waveform, Waveform)
        The cosine and sine quadrature waveforms.
    """
    base = dpss_waveform(taper, 1.0, dt)
    wc = modulate(base, "cos", omega_s)
    ws = modulate(base, "sin", omega_s)
    total = wc.power + ws.power
    scale = np.sqrt(power / total)
    return (
        replace(wc, samples=wc.samples * scale),
        replace(ws, samples=ws.samples * scale),
    )


def cpmg_rse(n_switches, amplitude, T, n_samples, label=None):
    """Flat-top sequence with CPMG-timed sign switches.

    The drive is ``+-amplitude`` with sign flips at ``t_i = (2i-1)T/(2n)``
    for ``i = 1..n``; ``n_switches = 0`` gives a constant drive.

    Parameters
    ----------
    n_switches : int
        Number of sign switches ``n``.
    amplitude : float
        Drive magnitude (rad/s).
    T : float
        Total duration in seconds.
    n_samples : int
        Samples in the grid; for ``n >= 1`` must be divisible by ``2n`` so
        the switch times land on sample boundaries.
    """
    if n_switches < 0:
        raise ValueError("n_switches must be non-negative")
    dt = T / n_samples
    if label is None:
        label = "cpmg-n%d" % n_switches
    if n_switches == 0:
        return Waveform(np.full(n_samples, float(amplitude)), dt, label=label)
    if n_samples % (2 * n_switches) != 0:
        raise ValueError("n_samples must be divisible by 2*n_switches")
    block = n_samples // (2 * n_switches)
    flips = np.zeros(n_samples, dtype=int)
    flips[(2 * np.arange(1, n_switches + 1) - 1) * block] = 1
    signs = np.where(np.cumsum(flips) % 2 == 0, 1.0, -1.0)
    return Waveform(amplitude * signs, dt, label=label)


def repeat_base(waveform, n_repeats):
    """Concatenate ``n_repeats`` copies of a base sequence."""
    if n_repeats < 1:
        raise ValueError("n_repeats must be positive")
    return replace(
        waveform,
        samples=np.tile(waveform.samples, n_repeats),
        label="%sx%d" % (waveform.label + " " if waveform.label else "",
                         n_repeats),
    )


def combine_tapers(tapers, coefficients, amplitude, dt, label="ssqm"):
    """Linear combination of Slepian sequences as a drive envelope."""
    coefficients = np.asarray(coefficients, dtype=float)
    if len(tapers) != coefficients.size:
        raise ValueError("need one coefficient per taper")
    seq = sum(c * t.sequence for c, t in zip(coefficients, tapers))
    return Waveform(amplitude * seq, dt, label=label)


@dataclass(frozen=True)
class SsqmResult:
    """Outcome of the quadrature-matching coefficient search."""

    coefficients: np.ndarray
    cost: float
    uniform_cost: float
    fallback: bool  # True when no start improved on the uniform combination


def _ssqm_objective(tapers, dt, half_bandwidth, grid_points, oob_weight):
    """Build the flatness cost and its gradient on the analysis band."""
    b0 = 2 * np.pi * half_bandwidth / dt
    grid = np.linspace(-b0, b0, grid_points)
    U = np.stack([dpswf_eval(t, dt, grid) for t in tapers])
    target = 1.0 / (2.0 * half_bandwidth)
    # trapezoid weights
    wt = np.full(grid_points, grid[1] - grid[0])
    wt[0] *= 0.5
    wt[-1] *= 0.5
    if oob_weight > 0.0:
        out_grid = np.linspace(b0, 4 * b0, grid_points)
        U_out = np.stack([dpswf_eval(t, dt, out_grid) for t in tapers])
        wt_out = np.full(grid_points, out_grid[1] - out_grid[0])
        wt_out[0] *= 0.5
        wt_out[-1] *= 0.5
    even = np.array([t.order % 2 == 0 for t in tapers])

    def quadratures(c, windows):
        E = c[even] @ windows[even]
        O = c[~even] @ windows[~even] if np.any(~even) else 0.0
        P = np.where(even[:, None], E, O)  # d(E^2+O^2)/dc_k pairs with U_k
        return E * E + O * O, P

    def cost_grad(c):
        G, P = quadratures(c, U)
        resid = G - target
        cost = np.sum(wt * resid * resid)
        grad = 4.0 * (U * P) @ (wt * resid)
        if oob_weight > 0.0:
            G2, P2 = quadratures(c, U_out)
            cost += oob_weight * np.sum(wt_out * G2 * G2)
            grad += oob_weight * 4.0 * (U_out * P2) @ (wt_out * G2)
        return cost, grad

    return cost_grad


def ssqm_coefficients(params, dt, n_tapers, seed, n_starts=8,
                      grid_points=512, oob_weight=0.0):
    """Find unit-norm taper coefficients whose combined squared spectrum is
    maximally flat over the analysis band.

    The combined sequence ``sum_k c_k v^(k)`` has squared spectral window
    ``E^2 + O^2`` where E and O collect the even- and odd-order windows;
    the cost is the squared deviation of that window from the ideal flat
    level ``1/(2W)`` integrated over the band, minimized on the unit sphere
    by multi-start BFGS (the uniform combination plus ``n_starts`` random
    starts).

    Returns
    -------
    SsqmResult
        Never worse than the uniform combination; ``fallback`` is set when
        the search failed to improve on it.
    """
    if n_tapers > shannon_number(params) + 2:
        raise ValueError(
            "n_tapers exceeds the number of concentrated windows "
            "(Shannon number + 2); the combination cannot stay in band")
    tapers = compute_dpss(params, max_order=n_tapers - 1)
    cost_grad = _ssqm_objective(tapers, dt, params.half_bandwidth,
                                grid_points, oob_weight)

    def on_sphere(c):
        norm = np.linalg.norm(c)
        u = c / norm
        cost, grad = cost_grad(u)
        # project the gradient onto the sphere's tangent space
        return cost, (grad - (u @ grad) * u) / norm

    uniform = np.full(n_tapers, 1.0 / np.sqrt(n_tapers))
    uniform_cost, _ = cost_grad(uniform)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed)]))
    starts = [uniform] + [
        rng.standard_normal(n_tapers) for _ in range(n_starts)
    ]
    best_c, best_cost = uniform, uniform_cost
    for c0 in starts:
        c0 = c0 / np.linalg.norm(c0)
        res = minimize(on_sphere, c0, jac=True, method="BFGS",
                       options={"maxiter": 500})
        u = res.x / np.linalg.norm(res.x)
        cost, _ = cost_grad(u)
        if cost < best_cost:
            best_c, best_cost = u, cost
    fallback = best_c is uniform
    if best_c[np.argmax(np.abs(best_c))] < 0:
        best_c = -best_c
    return SsqmResult(coefficients=best_c, cost=float(best_cost),
                      uniform_cost=float(uniform_cost), fallback=fallback)


def ssqm_waveform(params, dt, n_tapers, power, seed, **kwargs):
    """Quadrature-matched single-sequence waveform at the given power."""
    res = ssqm_coefficients(params, dt, n_tapers, seed, **kwargs)
    tapers = compute_dpss(params, max_order=n_tapers - 1)
    w = combine_tapers(tapers, res.coefficients, 1.0, dt)
    return normalize_power(w, power)
