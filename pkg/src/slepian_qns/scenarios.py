"""Configuration-driven measurement scenarios with reproducible outputs.

Each scenario builds a family of control waveforms against a configured
noise model, predicts the expected estimates by quadrature (the oracle),
optionally runs Monte Carlo qubit measurements, and writes a bundle of
CSV curves plus a JSON manifest sufficient to regenerate the run.

Unit convention: configuration fields and output columns carry ordinary
frequencies in Hz (``*_hz``) and PSD magnitudes in seconds (``*_s``);
angular frequencies in rad/s exist only inside the package.  CSV files
hold numeric columns with a single header row; records and manifests are
JSON.  The bundled ``data/scenario_schema.json`` documents every
configuration key.
"""

import importlib.metadata
import json
import sys
import traceback
import warnings
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np
import scipy

from .bayes import (GaussianBelief, bayes_update, build_prior,
                    credible_intervals, regularize_covariance)
from .estimators import (EstimateRecord, ShiftData, adaptive_multitaper,
                         aqm_effective_filter, aqm_variance_bound,
                         comb_expected_signals, comb_reconstruct,
                         comb_transfer_matrix, eigenestimate,
                         fisher_information, make_bias_context,
                         significance_test, ssqm_estimate, variance_bound)
from .filters import (cpmg_passband, dpss_passband, effective_nyquist,
                      filter_eval, passband, segment_areas)
from .noise import GaussianMixture, Lorentzian, WhitePlusLine, psd_eval
from .sim import (ExperimentConfig, expected_measured_signal, expected_signal,
                  run_experiment)
from .slepian import SlepianParams, compute_dpss
from .waveforms import (combine_tapers, cpmg_rse, dpss_waveform, modulate,
                        normalize_power, repeat_base, ssqm_coefficients)

__all__ = [
    "ConfigError",
    "load_schema",
    "validate_config",
    "noise_from_config",
    "build_waveform",
    "run_scenario",
    "regenerate",
    "DEFAULTS",
]

TWO_PI = 2.0 * np.pi


class ConfigError(ValueError):
    """Invalid scenario configuration; ``path`` locates the offender."""

    def __init__(self, message, path=""):
        super().__init__("%s: %s" % (path or "<config>", message))
        self.path = path


def load_schema():
    """Return the bundled configuration schema as a dict."""
    text = resources.files("slepian_qns").joinpath(
        "data/scenario_schema.json").read_text()
    return json.loads(text)


def validate_config(config):
    """Validate a scenario configuration against the bundled schema.

    Checks the JSON-schema contract (unknown keys rejected, versioned) plus
    the cross-field constraints the schema cannot express, and raises
    `ConfigError` carrying the JSON path of the best-matching violation.

    Returns
    -------
    dict
        The validated configuration, unchanged.
    """
    if not isinstance(config, dict):
        raise ConfigError("configuration must be a JSON object")
    validator = jsonschema.Draft202012Validator(load_schema())
    best = jsonschema.exceptions.best_match(validator.iter_errors(config))
    if best is not None:
        path = "/".join(str(p) for p in best.absolute_path)
        raise ConfigError(best.message, path=path)
    noise = config["noise"]
    if noise["type"] == "gaussian_mixture":
        lengths = {len(noise["amplitudes_s"]), len(noise["centers_hz"]),
                   len(noise["widths_hz"])}
        if len(lengths) != 1:
            raise ConfigError(
                "amplitudes_s, centers_hz and widths_hz must have the same "
                "length", path="noise")
    return config


def noise_from_config(spec):
    """Build a PSD model from its JSON description (Hz in, rad/s inside).

    ``type: none`` maps to an identically-zero spectrum so no-noise control
    runs go through the same machinery.
    """
    kind = spec["type"]
    if kind == "lorentzian":
        return Lorentzian(amplitude=spec["amplitude_s"],
                          width=TWO_PI * spec["width_hz"],
                          center=TWO_PI * spec.get("center_hz", 0.0))
    if kind == "gaussian_mixture":
        return GaussianMixture(
            amplitudes=tuple(float(a) for a in spec["amplitudes_s"]),
            centers=tuple(TWO_PI * c for c in spec["centers_hz"]),
            widths=tuple(TWO_PI * w for w in spec["widths_hz"]))
    if kind == "white_plus_line":
        return WhitePlusLine(floor=spec["floor_s"],
                             line_amplitude=spec["line_amplitude_s"],
                             line_width=TWO_PI * spec["line_width_hz"],
                             line_center=TWO_PI * spec["line_center_hz"],
                             cutoff=TWO_PI * spec["cutoff_hz"])
    if kind == "none":
        return WhitePlusLine(floor=0.0, line_amplitude=0.0, line_width=1.0,
                             line_center=0.0, cutoff=1.0)
    raise ConfigError("unknown noise type %r" % kind, path="noise/type")


DEFAULTS = {
    "lorentzian-vs-rse": dict(
        n_samples=500, dt_s=4e-6, power_rad2_per_s=900.0, n_shots=2000,
        n_max=40),
    "comb-vs-dpss": dict(
        t_base_a_s=942e-6, t_base_b_s=245e-6, h_max=12, n_repeats=20,
        base_samples=240, dpss_a_samples=260, dpss_a_dt_s=39.3e-6,
        dpss_b_samples=1000, dpss_b_dt_s=10.2e-6, n_shifts_b=46,
        power_rad2_per_s=900.0, n_shots=2000, psd_support_hz=60000.0),
    "detect-line": dict(
        n_samples=500, dt_s=8e-6, w_cycles=0.014, power_rad2_per_s=900.0,
        n_shots=2600, n_orders=13, shift_step_hz=1750.0, n_shifts=9,
        ssqm_seed=0),
    "bayes-refine": dict(
        segment_width_hz=150.0, n_segments=94, refine_n_samples=500,
        refine_dt_s=20e-6, refine_shift_start_hz=5300.0,
        refine_shift_step_hz=150.0, refine_n_shifts=34, refine_n_shots=2600,
        power_rad2_per_s=900.0, credible_level=0.95),
    "custom": dict(
        n_samples=100, dt_s=8e-6, n_orders=1, modulation="cos",
        shifts_hz=[0.0], power_rad2_per_s=900.0, n_shots=1000, axes="z",
        run_aqm=False),
}


# ---------------------------------------------------------------------------
# Output bundle plumbing


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


class _Bundle:
    """Accumulates one scenario's output files in a directory."""

    def __init__(self, out_dir):
        self.dir = Path(out_dir)
        self.dir.mkdir(parents=True, exist_ok=True)
        self.outputs = []

    def csv(self, name, header, columns):
        cols = [np.asarray(c, float) for c in columns]
        np.savetxt(self.dir / name, np.column_stack(cols), delimiter=",",
                   header=",".join(header), comments="", fmt="%.17g")
        self.outputs.append(name)

    def json(self, name, payload):
        text = json.dumps(_jsonable(payload), indent=2, sort_keys=True)
        (self.dir / name).write_text(text + "\n")
        self.outputs.append(name)


def _spawn_seed(master, *path):
    seq = np.random.SeedSequence([int(master)] + [int(p) for p in path])
    return int(seq.generate_state(1)[0])


def _map_parallel(fn, jobs, threads):
    jobs = list(jobs)
    if threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        return list(pool.map(fn, jobs))


def _psd_f_max(model, fallback_hz):
    if isinstance(model, WhitePlusLine):
        return max(fallback_hz, 1.15 * model.cutoff / TWO_PI)
    if isinstance(model, Lorentzian):
        return max(fallback_hz, (model.center + 6.0 * model.width) / TWO_PI)
    if isinstance(model, GaussianMixture):
        edge = max(c + 5.0 * w for c, w in zip(model.centers, model.widths))
        return max(fallback_hz, edge / TWO_PI)
    return fallback_hz


def _write_true_psd(bundle, model, f_max_hz, n_points=2001):
    grid = np.linspace(0.0, f_max_hz, n_points)
    bundle.csv("true_psd.csv", ["frequency_hz", "psd_s"],
               [grid, psd_eval(model, TWO_PI * grid)])
    return grid


def _filter_table(bundle, name, f_grid_hz, labels, curves):
    bundle.csv(name, ["frequency_hz"] + list(labels),
               [f_grid_hz] + list(curves))


def _warn_shifts(shifts, dt):
    ny = np.pi / dt
    top = float(np.max(shifts)) if len(shifts) else 0.0
    if top > ny:
        warnings.warn(
            "modulation shift %.6g rad/s exceeds the waveform grid Nyquist "
            "pi/dt = %.6g rad/s; the shifted band wraps within the sampling "
            "period" % (top, ny), UserWarning, stacklevel=3)


# ---------------------------------------------------------------------------
# Waveform construction shared with the command line


def build_waveform(spec):
    """Construct a waveform and its analysis band from a JSON description.

    ``spec["family"]`` selects the construction:

    - ``"dpss"``: ``n_samples``, ``dt_s``, ``w_cycles`` (default ``1/N``),
      ``order`` (default 0), ``modulation`` (default ``"cos"``),
      ``shift_hz`` (default 0) and ``power_rad2_per_s`` (default 900).
    - ``"cpmg"``: ``n_switches``, ``duration_s``, ``n_samples``,
      ``repeats`` (default 1) and either ``amplitude_rad_per_s`` or
      ``power_rad2_per_s`` (total, over all repeats).
    - ``"constant"``: ``duration_s``, ``n_samples`` and either amplitude
      or total power.

    Returns
    -------
    waveform : Waveform
    band : PassbandSpec
    """
    if not isinstance(spec, dict) or "family" not in spec:
        raise ConfigError("waveform spec needs a 'family' key", path="waveform")
    family = spec["family"]
    try:
        if family == "dpss":
            n = int(spec["n_samples"])
            dt = float(spec["dt_s"])
            w = float(spec.get("w_cycles", 1.0 / n))
            order = int(spec.get("order", 0))
            shift = TWO_PI * float(spec.get("shift_hz", 0.0))
            power = float(spec.get("power_rad2_per_s", 900.0))
            mode = spec.get("modulation", "cos")
            taper = compute_dpss(SlepianParams(n, w), max_order=order)[order]
            wf = normalize_power(
                modulate(dpss_waveform(taper, 1.0, dt), mode, shift), power)
            return wf, dpss_passband(wf, shift, w)
        if family in ("cpmg", "constant"):
            n_sw = int(spec["n_switches"]) if family == "cpmg" else 0
            T = float(spec["duration_s"])
            n = int(spec["n_samples"])
            reps = int(spec.get("repeats", 1))
            if "amplitude_rad_per_s" in spec:
                amp = float(spec["amplitude_rad_per_s"])
            else:
                power = float(spec.get("power_rad2_per_s", 900.0))
                amp = np.sqrt(power / (reps * T))
            wf = cpmg_rse(n_sw, amp, T, n)
            # repetition narrows the comb teeth but leaves them at the
            # harmonics of the base cycle, so the band comes from the base
            band = cpmg_passband(wf, n_sw)
            if reps > 1:
                wf = repeat_base(wf, reps)
            return wf, band
    except (KeyError, ValueError, IndexError) as exc:
        raise ConfigError(str(exc), path="waveform") from exc
    raise ConfigError("unknown waveform family %r" % family, path="waveform")


def _modulated_bank(base, shifts, power, w_cycles):
    """Cosine-modulate one envelope to each shift at fixed total power."""
    wfs, pbs = [], []
    for om in shifts:
        wf = normalize_power(modulate(base, "cos", om), power)
        wfs.append(wf)
        pbs.append(dpss_passband(wf, om, w_cycles))
    return wfs, pbs


def _expected_record(model, wf, pb, shots, order):
    """Oracle analogue of a measured estimate: value ``v/A`` with the
    sampling variance of an ``shots``-shot readout at the exact mean."""
    v = expected_signal(model, wf)
    p = 1.0 - expected_measured_signal(v)
    var = max(p * (1.0 - p), 0.0) / shots
    return EstimateRecord(omega_s=wf.omega_s, order=order, tag="expected",
                          value=v / pb.area, variance=var / pb.area**2,
                          area=pb.area, signal=v, n_shots=shots)


def _run_bank(model, wfs, shots, seed, arm, threads, axes="z"):
    def job(i):
        cfg = ExperimentConfig(wfs[i], model, shots,
                               _spawn_seed(seed, arm, i), axes=axes)
        return run_experiment(cfg)

    return _map_parallel(job, range(len(wfs)), threads)


def _run_grid(model, wfs, shots, seed, arm, threads, axes="z"):
    index = [(p, k) for p in range(len(wfs)) for k in range(len(wfs[p]))]

    def job(pk):
        p, k = pk
        cfg = ExperimentConfig(wfs[p][k], model, shots,
                               _spawn_seed(seed, arm, p, k), axes=axes)
        return run_experiment(cfg)

    flat = _map_parallel(job, index, threads)
    out = [[None] * len(row) for row in wfs]
    for (p, k), res in zip(index, flat):
        out[p][k] = res
    return out


def _order_grid(tapers, dt, shifts, power, w_cycles):
    """Waveforms and bands for every (shift, order) pair."""
    wfs, pbs = [], []
    for om in shifts:
        row = [normalize_power(modulate(dpss_waveform(t, 1.0, dt), "cos", om),
                               power) for t in tapers]
        wfs.append(row)
        pbs.append([dpss_passband(wf, om, w_cycles) for wf in row])
    return wfs, pbs


def _grid_contexts(wfs, pbs, threads):
    index = [(p, k) for p in range(len(wfs)) for k in range(len(wfs[p]))]
    flat = _map_parallel(
        lambda pk: make_bias_context(wfs[pk[0]][pk[1]], pbs[pk[0]][pk[1]]),
        index, threads)
    out = [[None] * len(row) for row in wfs]
    for (p, k), ctx in zip(index, flat):
        out[p][k] = ctx
    return out


# ---------------------------------------------------------------------------
# Scenario runners


def _run_lorentzian_vs_rse(model, opts, bundle, seed, threads, oracle_only):
    n, dt = int(opts["n_samples"]), float(opts["dt_s"])
    w = float(opts.get("w_cycles", 1.0 / n))
    power, shots = float(opts["power_rad2_per_s"]), int(opts["n_shots"])
    n_max = int(opts["n_max"])
    T = n * dt

    taper0 = compute_dpss(SlepianParams(n, w), max_order=0)[0]
    base = dpss_waveform(taper0, 1.0, dt)
    dpss_shifts = np.arange(n_max + 1) * np.pi / T
    _warn_shifts(dpss_shifts, dt)
    dpss_wfs, dpss_pbs = _modulated_bank(base, dpss_shifts, power, w)

    rse_orders = [0] + list(range(2, n_max + 1))
    amp = np.sqrt(power / T)
    rse_wfs, rse_pbs = [], []
    for m in rse_orders:
        nm = n if m == 0 else 2 * m * int(np.ceil(n / (2.0 * m)))
        wf = cpmg_rse(m, amp, T, nm)
        rse_wfs.append(wf)
        rse_pbs.append(cpmg_passband(wf, m))

    arms = {
        "dpss": (dpss_wfs, dpss_pbs, dpss_shifts / TWO_PI,
                 [0] * len(dpss_wfs), 0),
        "rse": (rse_wfs, rse_pbs,
                np.array(rse_orders) * 0.5 / T, rse_orders, 1),
    }
    summary = {"duration_s": T, "n_points": {}}
    for name, (wfs, pbs, centers_hz, orders, arm_idx) in arms.items():
        exp = [_expected_record(model, wf, pb, shots, o)
               for wf, pb, o in zip(wfs, pbs, orders)]
        bundle.csv("expected-%s.csv" % name,
                   ["center_hz", "order", "band_area",
                    "expected_signal", "expected_estimate_s",
                    "expected_sd_s"],
                   [centers_hz, orders, [r.area for r in exp],
                    [r.signal for r in exp], [r.value for r in exp],
                    [np.sqrt(r.variance) for r in exp]])
        if not oracle_only:
            results = _run_bank(model, wfs, shots, seed, arm_idx, threads)
            recs = [eigenestimate(r, pb, order=o)
                    for r, pb, o in zip(results, pbs, orders)]
            bundle.csv("estimates-%s.csv" % name,
                       ["center_hz", "order", "estimate_s", "sd_s",
                        "signal", "n_shots"],
                       [centers_hz, orders, [r.value for r in recs],
                        [np.sqrt(r.variance) for r in recs],
                        [r.signal for r in recs],
                        [r.n_shots for r in recs]])
        summary["n_points"][name] = len(wfs)

    f_grid = np.linspace(0.0, 1.25 * dpss_shifts[-1] / TWO_PI, 1601)
    for name, (wfs, _, centers_hz, orders, _a) in arms.items():
        labels = ["f%d" % i for i in range(len(wfs))]
        curves = [filter_eval(wf, TWO_PI * f_grid) for wf in wfs]
        _filter_table(bundle, "filters-%s.csv" % name, f_grid, labels, curves)
        bundle.csv("filter-centers-%s.csv" % name,
                   ["column", "center_hz", "order"],
                   [np.arange(len(wfs)), centers_hz, orders])

    _write_true_psd(bundle, model, _psd_f_max(model, f_grid[-1]))
    peak = int(np.argmax(psd_eval(model, dpss_shifts)))
    summary["psd_peak_shift_hz"] = dpss_shifts[peak] / TWO_PI
    return summary


def _comb_family(T_B, h_max, base_samples, amp):
    bases = []
    for j in range(1, h_max + 1):
        nm = 4 * max(1, int(round(base_samples / (4.0 * j))))
        bases.append(cpmg_rse(2, amp, T_B / j, nm))
    return bases


def _comb_arm(model, bundle, tag, T_B, h_max, reps, base_samples, amp,
              omega_cut, shots, seed, arm_idx, threads, oracle_only):
    bases = _comb_family(T_B, h_max, base_samples, amp)
    n_repeats = [reps] * h_max
    harmonics_hz = np.arange(1, h_max + 1) / T_B
    taus = [T_B / (2.0 * j) for j in range(1, h_max + 1)]
    omega_eff = effective_nyquist(taus, h_max, T_B)

    exact = comb_expected_signals(model, bases, n_repeats, T_B, h_max,
                                  mode="exact", omega_cut=omega_cut)
    delta = comb_expected_signals(model, bases, n_repeats, T_B, h_max,
                                  mode="delta")
    recon = comb_reconstruct(exact, bases, n_repeats, T_B, h_max)
    truth = psd_eval(model, recon.omega)
    bundle.csv("expected-%s.csv" % tag,
               ["j", "duration_s", "n_repeats", "signal_exact",
                "signal_delta"],
               [np.arange(1, h_max + 1), [b.duration for b in bases],
                n_repeats, exact, delta])

    cols = {"harmonic_hz": harmonics_hz, "true_s": truth,
            "from_expected_s": recon.values}
    if not oracle_only:
        def job(j):
            cfg = ExperimentConfig(repeat_base(bases[j], reps), model, shots,
                                   _spawn_seed(seed, arm_idx, j))
            return run_experiment(cfg)

        results = _map_parallel(job, range(h_max), threads)
        signals = np.array([r.signal for r in results])
        variances = np.array([r.variance for r in results])
        mc = comb_reconstruct(signals, bases, n_repeats, T_B, h_max)
        pinv = np.linalg.pinv(
            comb_transfer_matrix(bases, n_repeats, T_B, h_max))
        mc_sd = np.sqrt(np.clip((pinv**2) @ variances, 0.0, None))
        bundle.csv("estimates-%s.csv" % tag,
                   ["j", "signal", "sd", "n_shots"],
                   [np.arange(1, h_max + 1), signals, np.sqrt(variances),
                    [shots] * h_max])
        cols["mc_s"] = mc.values
        cols["mc_sd_s"] = mc_sd
    bundle.csv("reconstruction-%s.csv" % tag, list(cols), list(cols.values()))

    f_grid = np.linspace(0.0, 1.1 * omega_eff / TWO_PI, 2001)
    curves = [filter_eval(repeat_base(b, reps), TWO_PI * f_grid)
              for b in bases]
    _filter_table(bundle, "filters-%s.csv" % tag, f_grid,
                  ["j%d" % j for j in range(1, h_max + 1)], curves)
    return {
        "effective_nyquist_hz": omega_eff / TWO_PI,
        "condition_number": recon.condition_number,
        "max_rel_tooth_error": float(np.max(np.abs(recon.values - truth)
                                            / np.max(truth))),
    }


def _dpss_probe_arm(model, bundle, tag, n, dt, shifts, power, shots, seed,
                    arm_idx, threads, oracle_only):
    w = 1.0 / n
    taper0 = compute_dpss(SlepianParams(n, w), max_order=0)[0]
    base = dpss_waveform(taper0, 1.0, dt)
    _warn_shifts(shifts, dt)
    wfs, pbs = _modulated_bank(base, shifts, power, w)
    exp = [_expected_record(model, wf, pb, shots, 0)
           for wf, pb in zip(wfs, pbs)]
    bundle.csv("expected-%s.csv" % tag,
               ["shift_hz", "band_area", "expected_signal",
                "expected_estimate_s", "expected_sd_s"],
               [shifts / TWO_PI, [r.area for r in exp],
                [r.signal for r in exp], [r.value for r in exp],
                [np.sqrt(r.variance) for r in exp]])
    if not oracle_only:
        results = _run_bank(model, wfs, shots, seed, arm_idx, threads)
        recs = [eigenestimate(r, pb) for r, pb in zip(results, pbs)]
        bundle.csv("estimates-%s.csv" % tag,
                   ["shift_hz", "estimate_s", "sd_s", "n_shots"],
                   [shifts / TWO_PI, [r.value for r in recs],
                    [np.sqrt(r.variance) for r in recs],
                    [r.n_shots for r in recs]])
    return [r.value for r in exp]


def _run_comb_vs_dpss(model, opts, bundle, seed, threads, oracle_only):
    T_Ba, T_Bb = float(opts["t_base_a_s"]), float(opts["t_base_b_s"])
    h_max, reps = int(opts["h_max"]), int(opts["n_repeats"])
    base_samples = int(opts["base_samples"])
    power, shots = float(opts["power_rad2_per_s"]), int(opts["n_shots"])
    omega_cut = TWO_PI * float(opts["psd_support_hz"])

    summary = {}
    for tag, T_B, arm_idx in (("comb-a", T_Ba, 0), ("comb-b", T_Bb, 1)):
        amp = opts.get("amplitude_rad_per_s")
        amp = float(amp) if amp else np.sqrt(power / (reps * T_B))
        summary[tag] = _comb_arm(model, bundle, tag, T_B, h_max, reps,
                                 base_samples, amp, omega_cut, shots, seed,
                                 arm_idx, threads, oracle_only)

    shifts_a = TWO_PI * np.arange(1, h_max + 1) / T_Ba
    shifts_b = TWO_PI * np.arange(1, int(opts["n_shifts_b"]) + 1) / T_Ba
    est_a = _dpss_probe_arm(model, bundle, "dpss-a", int(opts["dpss_a_samples"]),
                            float(opts["dpss_a_dt_s"]), shifts_a, power, shots,
                            seed, 2, threads, oracle_only)
    est_b = _dpss_probe_arm(model, bundle, "dpss-b", int(opts["dpss_b_samples"]),
                            float(opts["dpss_b_dt_s"]), shifts_b, power, shots,
                            seed, 3, threads, oracle_only)
    summary["dpss-a"] = {"n_points": len(est_a)}
    summary["dpss-b"] = {"n_points": len(est_b),
                         "peak_shift_hz": float(
                             shifts_b[int(np.argmax(est_b))] / TWO_PI)}
    _write_true_psd(bundle, model,
                    _psd_f_max(model, 1.1 * shifts_b[-1] / TWO_PI))
    return summary


def _detection_bank(model, opts, sub_seed, threads, oracle_only):
    """(shift, order) waveform grid with per-pair records, AQM shot split."""
    n, dt = int(opts["n_samples"]), float(opts["dt_s"])
    w = float(opts.get("w_cycles", 7.0 / n))
    power, shots = float(opts["power_rad2_per_s"]), int(opts["n_shots"])
    n_orders = int(opts["n_orders"])
    shots_per_order = max(1, shots // n_orders)
    shifts = TWO_PI * float(opts["shift_step_hz"]) * \
        np.arange(int(opts["n_shifts"]))
    params = SlepianParams(n, w)
    tapers = compute_dpss(params, max_order=n_orders - 1)
    _warn_shifts(shifts, dt)
    wfs, pbs = _order_grid(tapers, dt, shifts, power, w)
    expected = [[_expected_record(model, wf, pb, shots_per_order, k)
                 for k, (wf, pb) in enumerate(zip(row, pbrow))]
                for row, pbrow in zip(wfs, pbs)]
    measured = None
    if not oracle_only:
        results = _run_grid(model, wfs, shots_per_order, sub_seed, 2, threads)
        measured = [[eigenestimate(r, pb, order=k)
                     for k, (r, pb) in enumerate(zip(row, pbrow))]
                    for row, pbrow in zip(results, pbs)]
    return dict(params=params, tapers=tapers, shifts=shifts, wfs=wfs,
                pbs=pbs, expected=expected, measured=measured,
                shots_per_order=shots_per_order, power=power, dt=dt, w=w,
                n_orders=n_orders, shots=shots)


def _aqm_pass(bank, records, contexts):
    data = [ShiftData(omega_s=om, records=tuple(recs), waveforms=tuple(row),
                      passbands=tuple(pbrow))
            for om, recs, row, pbrow in zip(bank["shifts"], records,
                                            bank["wfs"], bank["pbs"])]
    return adaptive_multitaper(data, contexts=contexts)


def _aqm_bounds(bank, aqm):
    out = []
    for p in range(len(bank["shifts"])):
        areas = np.array([pb.area for pb in bank["pbs"][p]])
        out.append(np.sqrt(aqm_variance_bound(aqm.weights[p], areas,
                                              bank["shots_per_order"])))
    return np.array(out)


def _run_detect_line(model, opts, bundle, seed, threads, oracle_only):
    bank = _detection_bank(model, opts, seed, threads, oracle_only)
    shifts, power, dt, w = (bank["shifts"], bank["power"], bank["dt"],
                            bank["w"])
    shots = bank["shots"]
    shifts_hz = shifts / TWO_PI

    k0_base = dpss_waveform(bank["tapers"][0], 1.0, dt)
    k0_wfs, k0_pbs = _modulated_bank(k0_base, shifts, power, w)
    ssqm = ssqm_coefficients(bank["params"], dt, bank["n_orders"],
                             int(opts["ssqm_seed"]))
    ssqm_base = combine_tapers(bank["tapers"], ssqm.coefficients, 1.0, dt)
    ssqm_wfs, ssqm_pbs = _modulated_bank(ssqm_base, shifts, power, w)

    contexts = _grid_contexts(bank["wfs"], bank["pbs"], threads)
    summary = {"ssqm": {"cost": ssqm.cost, "uniform_cost": ssqm.uniform_cost,
                        "fallback": ssqm.fallback}}

    def single_order_arm(tag, wfs, pbs, arm_idx, estimator):
        exp = [_expected_record(model, wf, pb, shots, None)
               for wf, pb in zip(wfs, pbs)]
        bounds = np.sqrt(variance_bound(np.array([pb.area for pb in pbs]),
                                        shots))
        z_exp = significance_test([r.value for r in exp], bounds)
        bundle.csv("expected-%s.csv" % tag,
                   ["shift_hz", "band_area", "expected_estimate_s",
                    "expected_sd_s", "bound_s", "z_expected"],
                   [shifts_hz, [r.area for r in exp],
                    [r.value for r in exp],
                    [np.sqrt(r.variance) for r in exp], bounds, z_exp])
        out = {"z_expected_max": float(np.max(z_exp))}
        if not oracle_only:
            results = _run_bank(model, wfs, shots, seed, arm_idx, threads)
            recs = [estimator(r, pb) for r, pb in zip(results, pbs)]
            z = significance_test([r.value for r in recs], bounds)
            bundle.csv("estimates-%s.csv" % tag,
                       ["shift_hz", "estimate_s", "sd_s", "bound_s", "z"],
                       [shifts_hz, [r.value for r in recs],
                        [np.sqrt(r.variance) for r in recs], bounds, z])
            out["z_max"] = float(np.max(z))
            out["z_argmax_hz"] = float(shifts_hz[int(np.argmax(z))])
        return out

    summary["k0"] = single_order_arm("k0", k0_wfs, k0_pbs, 0,
                                     lambda r, pb: eigenestimate(r, pb))
    summary["ssqm"].update(single_order_arm("ssqm", ssqm_wfs, ssqm_pbs, 1,
                                            ssqm_estimate))

    aqm_exp = _aqm_pass(bank, bank["expected"], contexts)
    exp_bounds = _aqm_bounds(bank, aqm_exp)
    z_exp = significance_test(aqm_exp.estimates, exp_bounds)
    bundle.csv("expected-aqm.csv",
               ["shift_hz", "expected_estimate_s", "expected_sd_s",
                "bound_s", "z_expected"],
               [shifts_hz, aqm_exp.estimates, np.sqrt(aqm_exp.variances),
                exp_bounds, z_exp])
    order_labels = ["w%d" % k for k in range(bank["n_orders"])]
    bundle.csv("weights-aqm-expected.csv", ["shift_hz"] + order_labels,
               [shifts_hz] + list(aqm_exp.weights.T))
    summary["aqm"] = {"z_expected_max": float(np.max(z_exp)),
                      "expected_iterations": aqm_exp.n_iterations,
                      "expected_converged": aqm_exp.converged}

    weights_for_filters = aqm_exp.weights
    if not oracle_only:
        aqm_mc = _aqm_pass(bank, bank["measured"], contexts)
        mc_bounds = _aqm_bounds(bank, aqm_mc)
        z_mc = significance_test(aqm_mc.estimates, mc_bounds)
        bundle.csv("estimates-aqm.csv",
                   ["shift_hz", "estimate_s", "sd_s", "bound_s", "z"],
                   [shifts_hz, aqm_mc.estimates, np.sqrt(aqm_mc.variances),
                    mc_bounds, z_mc])
        bundle.csv("weights-aqm.csv", ["shift_hz"] + order_labels,
                   [shifts_hz] + list(aqm_mc.weights.T))
        summary["aqm"].update({"z_max": float(np.max(z_mc)),
                               "z_argmax_hz": float(
                                   shifts_hz[int(np.argmax(z_mc))]),
                               "iterations": aqm_mc.n_iterations,
                               "converged": aqm_mc.converged})
        weights_for_filters = aqm_mc.weights

    b0 = TWO_PI * w / dt
    f_grid = np.linspace(0.0, (shifts[-1] + 4.0 * b0) / TWO_PI, 1601)
    point_labels = ["p%d" % p for p in range(len(shifts))]
    for tag, wfs in (("k0", k0_wfs), ("ssqm", ssqm_wfs)):
        _filter_table(bundle, "filters-%s.csv" % tag, f_grid, point_labels,
                      [filter_eval(wf, TWO_PI * f_grid) for wf in wfs])
    aqm_curves = [aqm_effective_filter(bank["wfs"][p], bank["pbs"][p],
                                       weights_for_filters[p],
                                       TWO_PI * f_grid)
                  for p in range(len(shifts))]
    _filter_table(bundle, "filters-aqm.csv", f_grid, point_labels, aqm_curves)
    bundle.csv("shift-grid.csv", ["column", "shift_hz"],
               [np.arange(len(shifts)), shifts_hz])

    _write_true_psd(bundle, model, _psd_f_max(model, f_grid[-1]))
    return summary


def _run_bayes_refine(model, opts, bundle, seed, threads, oracle_only):
    det_opts = {**DEFAULTS["detect-line"], **opts.get("detection", {})}
    n_segments = int(opts["n_segments"])
    d_omega = TWO_PI * float(opts["segment_width_hz"])
    level = float(opts["credible_level"])

    bank = _detection_bank(model, det_opts, seed, threads, oracle_only)
    records = bank["measured"] if bank["measured"] is not None \
        else bank["expected"]
    flat_wfs = [wf for row in bank["wfs"] for wf in row]
    flat_recs = [r for row in records for r in row]

    segs = _map_parallel(
        lambda wf: segment_areas(wf, d_omega, n_segments), flat_wfs, threads)
    shots_po = bank["shots_per_order"]
    p_hat = np.clip(1.0 - np.array([r.signal for r in flat_recs]),
                    0.5 / shots_po, 1.0 - 0.5 / shots_po)
    info = np.array([fisher_information(s, p, shots_po)
                     for s, p in zip(segs, p_hat)])
    values = np.array([r.value for r in flat_recs])
    variances = np.array([r.variance for r in flat_recs])
    prior_raw, estimable = build_prior(values, info, variances)
    reg_cov, ridge = regularize_covariance(prior_raw.cov)
    prior = GaussianBelief(mean=prior_raw.mean, cov=reg_cov)

    rn = int(opts["refine_n_samples"])
    rdt = float(opts["refine_dt_s"])
    rw = float(opts.get("refine_w_cycles", 1.0 / rn))
    rshots = int(opts["refine_n_shots"])
    power = float(opts["power_rad2_per_s"])
    rshifts = TWO_PI * (float(opts["refine_shift_start_hz"])
                        + float(opts["refine_shift_step_hz"])
                        * np.arange(1, int(opts["refine_n_shifts"]) + 1))
    rtaper = compute_dpss(SlepianParams(rn, rw), max_order=0)[0]
    rbase = dpss_waveform(rtaper, 1.0, rdt)
    _warn_shifts(rshifts, rdt)
    rwfs, rpbs = _modulated_bank(rbase, rshifts, power, rw)

    r_exp = [_expected_record(model, wf, pb, rshots, 0)
             for wf, pb in zip(rwfs, rpbs)]
    r_bounds = np.sqrt(variance_bound(np.array([pb.area for pb in rpbs]),
                                      rshots))
    bundle.csv("expected-refine.csv",
               ["shift_hz", "band_area", "expected_estimate_s",
                "expected_sd_s", "bound_s"],
               [rshifts / TWO_PI, [r.area for r in r_exp],
                [r.value for r in r_exp],
                [np.sqrt(r.variance) for r in r_exp], r_bounds])
    r_recs = r_exp
    if not oracle_only:
        results = _run_bank(model, rwfs, rshots, seed, 3, threads)
        r_recs = [eigenestimate(r, pb) for r, pb in zip(results, rpbs)]
        z = significance_test([r.value for r in r_recs], r_bounds)
        bundle.csv("estimates-refine.csv",
                   ["shift_hz", "estimate_s", "sd_s", "bound_s", "z"],
                   [rshifts / TWO_PI, [r.value for r in r_recs],
                    [np.sqrt(r.variance) for r in r_recs], r_bounds, z])

    transfer = np.array([segment_areas(wf, d_omega, n_segments) / pb.area
                         for wf, pb in zip(rwfs, rpbs)])
    posterior = bayes_update(prior, transfer,
                             np.array([r.value for r in r_recs]),
                             np.array([r.variance for r in r_recs]))
    plo, phi = credible_intervals(prior, level)
    qlo, qhi = credible_intervals(posterior, level)
    centers_hz = (np.arange(n_segments) + 0.5) * d_omega / TWO_PI
    bundle.csv("segments.csv",
               ["segment_center_hz", "true_s", "prior_mean_s", "prior_lo_s",
                "prior_hi_s", "posterior_mean_s", "posterior_lo_s",
                "posterior_hi_s", "estimable"],
               [centers_hz, psd_eval(model, TWO_PI * centers_hz), prior.mean,
                plo, phi, posterior.mean, qlo, qhi,
                estimable.astype(float)])

    f_grid = np.linspace(0.0, n_segments * d_omega / TWO_PI, 1601)
    _filter_table(bundle, "filters-refine.csv", f_grid,
                  ["p%d" % p for p in range(len(rwfs))],
                  [filter_eval(wf, TWO_PI * f_grid) for wf in rwfs])
    _write_true_psd(bundle, model, _psd_f_max(model, f_grid[-1]))

    window = (centers_hz >= rshifts[0] / TWO_PI) & \
        (centers_hz <= rshifts[-1] / TWO_PI)
    scope = window & estimable
    peak = int(np.argmax(np.where(scope, posterior.mean, -np.inf)))
    summary = {
        "n_detection_settings": len(flat_recs),
        "n_segments": n_segments,
        "peak_segment_center_hz": float(centers_hz[peak]),
        "peak_posterior_mean_s": float(posterior.mean[peak]),
        "mean_ci_width_prior_s": float(np.mean((phi - plo)[scope])),
        "mean_ci_width_posterior_s": float(np.mean((qhi - qlo)[scope])),
        "negative_posterior_mean": posterior.negative_mean,
        "n_unestimable": int(np.count_nonzero(~estimable)),
        "prior_ridge": ridge,
    }
    return summary


def _run_custom(model, opts, bundle, seed, threads, oracle_only):
    n, dt = int(opts["n_samples"]), float(opts["dt_s"])
    w = float(opts.get("w_cycles", 1.0 / n))
    n_orders = int(opts["n_orders"])
    mode = opts["modulation"]
    shifts = TWO_PI * np.asarray(opts["shifts_hz"], float)
    power, shots = float(opts["power_rad2_per_s"]), int(opts["n_shots"])
    axes = opts["axes"]
    if mode == "sin" and np.any(shifts <= 0.0):
        raise ConfigError("modulation 'sin' needs positive shifts",
                          path="options/shifts_hz")
    _warn_shifts(shifts, dt)

    tapers = compute_dpss(SlepianParams(n, w), max_order=n_orders - 1)
    wfs, pbs = [], []
    for om in shifts:
        row = [normalize_power(modulate(dpss_waveform(t, 1.0, dt), mode, om),
                               power) for t in tapers]
        wfs.append(row)
        pbs.append([dpss_passband(wf, om, w) for wf in row])

    shift_col = np.repeat(shifts / TWO_PI, n_orders)
    order_col = np.tile(np.arange(n_orders), len(shifts))
    expected = [[_expected_record(model, wf, pb, shots, k)
                 for k, (wf, pb) in enumerate(zip(row, pbrow))]
                for row, pbrow in zip(wfs, pbs)]
    flat_exp = [r for row in expected for r in row]
    bundle.csv("expected-custom.csv",
               ["shift_hz", "order", "band_area", "expected_signal",
                "expected_estimate_s", "expected_sd_s"],
               [shift_col, order_col, [r.area for r in flat_exp],
                [r.signal for r in flat_exp],
                [r.value for r in flat_exp],
                [np.sqrt(r.variance) for r in flat_exp]])

    measured = None
    if not oracle_only:
        results = _run_grid(model, wfs, shots, seed, 0, threads, axes=axes)
        measured = [[eigenestimate(r, pb, order=k)
                     for k, (r, pb) in enumerate(zip(row, pbrow))]
                    for row, pbrow in zip(results, pbs)]
        flat_mc = [r for row in measured for r in row]
        bundle.csv("estimates-custom.csv",
                   ["shift_hz", "order", "estimate_s", "sd_s", "signal",
                    "n_shots"],
                   [shift_col, order_col, [r.value for r in flat_mc],
                    [np.sqrt(r.variance) for r in flat_mc],
                    [r.signal for r in flat_mc],
                    [r.n_shots for r in flat_mc]])

    summary = {"n_settings": len(shifts) * n_orders}
    if opts["run_aqm"] and n_orders >= 2:
        contexts = _grid_contexts(wfs, pbs, threads)
        source = measured if measured is not None else expected
        data = [ShiftData(omega_s=om, records=tuple(recs),
                          waveforms=tuple(row), passbands=tuple(pbrow))
                for om, recs, row, pbrow in zip(shifts, source, wfs, pbs)]
        aqm = adaptive_multitaper(data, contexts=contexts)
        bundle.csv("aqm-custom.csv",
                   ["shift_hz", "estimate_s", "sd_s"]
                   + ["w%d" % k for k in range(n_orders)],
                   [shifts / TWO_PI, aqm.estimates, np.sqrt(aqm.variances)]
                   + list(aqm.weights.T))
        summary["aqm"] = {"iterations": aqm.n_iterations,
                          "converged": aqm.converged}

    b0 = TWO_PI * w / dt
    f_grid = np.linspace(0.0, (float(np.max(shifts)) + 4.0 * b0) / TWO_PI,
                         1601)
    labels = ["p%d_k%d" % (p, k) for p in range(len(shifts))
              for k in range(n_orders)]
    curves = [filter_eval(wf, TWO_PI * f_grid)
              for row in wfs for wf in row]
    _filter_table(bundle, "filters-custom.csv", f_grid, labels, curves)
    _write_true_psd(bundle, model, _psd_f_max(model, f_grid[-1]))
    return summary


_RUNNERS = {
    "lorentzian-vs-rse": _run_lorentzian_vs_rse,
    "comb-vs-dpss": _run_comb_vs_dpss,
    "detect-line": _run_detect_line,
    "bayes-refine": _run_bayes_refine,
    "custom": _run_custom,
}


def _package_versions():
    try:
        from slepian_qns import __version__
        pkg = __version__
    except Exception:
        pkg = "unknown"
    return {
        "slepian_qns": pkg,
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "jsonschema": importlib.metadata.version("jsonschema"),
        "python": "%d.%d.%d" % sys.version_info[:3],
    }


def run_scenario(config, out_dir, seed=None, threads=1, oracle_only=False):
    """Run a named scenario and write its output bundle.

    Parameters
    ----------
    config : dict
        Scenario configuration; validated against the bundled schema.
        Option keys not present fall back to the scenario's defaults.
    out_dir : path-like
        Output directory, created if missing.
    seed : int, optional
        Master seed; overrides the config's ``seed`` (default 0).  Every
        measurement derives its own child seed from the master and its
        position, so results do not depend on ``threads``.
    threads : int
        Worker threads for the independent measurement settings.  File
        writing stays on the calling thread.
    oracle_only : bool
        Skip Monte Carlo; emit only quadrature-predicted expected values.

    Returns
    -------
    dict
        The run manifest (also written as ``manifest.json``): scenario,
        resolved options, seed, versions, output inventory and a summary.
        A mid-run failure writes ``manifest-error.json`` with the partial
        output inventory before re-raising.
    """
    validate_config(config)
    scenario = config["scenario"]
    opts = {**DEFAULTS[scenario], **config.get("options", {})}
    if seed is None:
        seed = config.get("seed", 0)
    seed = int(seed)
    threads = max(1, int(threads))
    model = noise_from_config(config["noise"])
    bundle = _Bundle(out_dir)
    base = {
        "schema_version": 1,
        "scenario": scenario,
        "label": config.get("label", ""),
        "config": config,
        "resolved_options": opts,
        "seed": seed,
        "threads": threads,
        "oracle_only": bool(oracle_only),
        "frequency_convention": (
            "config and CSV fields named *_hz are ordinary frequencies in "
            "Hz and *_s are PSD values in seconds; internally angular "
            "frequency omega = 2*pi*f rad/s"),
        "versions": _package_versions(),
    }
    try:
        summary = _RUNNERS[scenario](model, opts, bundle, seed, threads,
                                     bool(oracle_only))
    except Exception as exc:
        bundle.json("manifest-error.json", {
            **base,
            "error": repr(exc),
            "traceback": traceback.format_exc(),
            "outputs": sorted(o for o in bundle.outputs
                              if o != "manifest-error.json"),
        })
        raise
    manifest = {**base, "summary": summary,
                "outputs": sorted(bundle.outputs)}
    bundle.json("manifest.json", manifest)
    return manifest


def regenerate(manifest, out_dir, threads=None):
    """Re-run a scenario from its manifest; returns the new manifest.

    With the same package versions the regenerated bundle is file-for-file
    identical to the original (the round-trip property a manifest exists
    to guarantee).
    """
    return run_scenario(manifest["config"], out_dir, seed=manifest["seed"],
                        threads=(manifest["threads"] if threads is None
                                 else threads),
                        oracle_only=manifest["oracle_only"])
