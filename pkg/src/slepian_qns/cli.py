"""Command-line interface.

Five subcommands expose the library over files: ``dpss`` emits Slepian
tapers, ``filter`` evaluates a waveform's filter function, ``simulate``
runs one measurement setting, ``estimate`` turns stored results into
spectrum estimates, and ``scenario`` runs a full configuration-driven
study.  All file formats are CSV for curves and JSON for records, with
frequencies in Hz (see the bundled scenario schema for the config
contract).
"""

import argparse
import json
import sys
from collections import defaultdict

import numpy as np

from .estimators import (EstimateRecord, ShiftData, adaptive_multitaper,
                         significance_test, variance_bound)
from .filters import filter_eval
from .scenarios import (ConfigError, build_waveform, noise_from_config,
                        run_scenario, validate_config)
from .sim import ExperimentConfig, run_experiment
from .slepian import SlepianParams, compute_dpss

TWO_PI = 2.0 * np.pi


def _save_csv(path, header, columns):
    arr = np.column_stack([np.asarray(c, float) for c in columns])
    target = sys.stdout if path is None else path
    np.savetxt(target, arr, delimiter=",", header=",".join(header),
               comments="", fmt="%.17g")


def _load_json(path):
    with open(path) as fh:
        return json.load(fh)


def _waveform_csv(path, waveform):
    n = np.arange(waveform.n_samples)
    _save_csv(path, ["n", "t_start_s", "omega_rad_per_s"],
              [n, n * waveform.dt, waveform.samples])


def _cmd_dpss(args):
    if args.orders < 1:
        raise ConfigError("--orders must be at least 1")
    tapers = compute_dpss(SlepianParams(args.n, args.w),
                          max_order=args.orders - 1)
    _save_csv(args.out, ["taper_%d" % t.order for t in tapers],
              [t.sequence for t in tapers])
    if args.concentrations:
        _save_csv(args.concentrations, ["order", "concentration"],
                  [[t.order for t in tapers],
                   [t.concentration for t in tapers]])
    return 0


def _cmd_filter(args):
    spec = _load_json(args.config)
    wf, band = build_waveform(spec.get("waveform", spec))
    f_max = args.max_hz if args.max_hz else 0.5 / wf.dt
    grid = np.linspace(0.0, f_max, args.points)
    _save_csv(args.out, ["frequency_hz", "filter"],
              [grid, filter_eval(wf, TWO_PI * grid)])
    if args.waveform_out:
        _waveform_csv(args.waveform_out, wf)
    return 0


def _cmd_simulate(args):
    spec = _load_json(args.config)
    for key in ("waveform", "noise", "n_shots"):
        if key not in spec:
            raise ConfigError("simulate config needs %r" % key)
    wf, band = build_waveform(spec["waveform"])
    model = noise_from_config(spec["noise"])
    seed = args.seed if args.seed is not None else int(spec.get("seed", 0))
    cfg = ExperimentConfig(wf, model, int(spec["n_shots"]), seed,
                           axes=spec.get("axes", "z"),
                           oversampling=int(spec.get("oversampling", 8)),
                           label=spec.get("label", ""),
                           threads=args.threads)
    res = run_experiment(cfg)
    payload = {
        "config": {**spec, "seed": seed},
        "band": {"lo_hz": band.lo / TWO_PI, "hi_hz": band.hi / TWO_PI,
                 "center_hz": band.center / TWO_PI, "area": band.area},
        "result": {
            "label": res.label,
            "omega_s_hz": res.omega_s / TWO_PI,
            "n_shots": res.n_shots,
            "counts": {ax: list(c) for ax, c in sorted(res.counts.items())},
            "p_hat": {ax: p for ax, p in sorted(res.p_hat.items())},
            "signal": res.signal,
            "variance": res.variance,
        },
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if args.out is None:
        sys.stdout.write(text)
    else:
        with open(args.out, "w") as fh:
            fh.write(text)
    return 0


def _stored_record(payload):
    band = payload["band"]
    res = payload["result"]
    return EstimateRecord(
        omega_s=TWO_PI * res["omega_s_hz"],
        order=int(payload["config"]["waveform"].get("order", 0)),
        tag="eigen", value=res["signal"] / band["area"],
        variance=res["variance"] / band["area"] ** 2,
        area=band["area"], signal=res["signal"], n_shots=res["n_shots"])


def _cmd_estimate(args):
    payloads = [_load_json(p) for p in args.results]
    records = sorted((_stored_record(p) for p in payloads),
                     key=lambda r: (r.omega_s, r.order))
    if args.method == "eigen":
        bounds = np.sqrt(variance_bound(
            np.array([r.area for r in records]),
            np.array([r.n_shots for r in records], float)))
        values = np.array([r.value for r in records])
        z = significance_test(values, bounds) if len(records) >= 3 \
            else np.full(len(records), np.nan)
        _save_csv(args.out,
                  ["shift_hz", "order", "estimate_s", "sd_s", "bound_s",
                   "z"],
                  [[r.omega_s / TWO_PI for r in records],
                   [r.order for r in records], values,
                   [np.sqrt(r.variance) for r in records], bounds, z])
        return 0

    # adaptive multitaper: group stored results by shift, orders aligned
    groups = defaultdict(list)
    for payload in payloads:
        rec = _stored_record(payload)
        wf, band = build_waveform(payload["config"]["waveform"])
        groups[rec.omega_s].append((rec.order, rec, wf, band))
    data = []
    for om in sorted(groups):
        rows = sorted(groups[om], key=lambda item: item[0])
        data.append(ShiftData(omega_s=om,
                              records=tuple(r for _, r, _, _ in rows),
                              waveforms=tuple(w for _, _, w, _ in rows),
                              passbands=tuple(b for _, _, _, b in rows)))
    n_orders = len(data[0].records)
    if any(len(sd.records) != n_orders for sd in data) or n_orders < 2:
        raise ConfigError("aqm needs the same >=2 orders at every shift")
    aqm = adaptive_multitaper(data)
    _save_csv(args.out,
              ["shift_hz", "estimate_s", "sd_s"]
              + ["w%d" % k for k in range(n_orders)],
              [aqm.shifts / TWO_PI, aqm.estimates, np.sqrt(aqm.variances)]
              + list(aqm.weights.T))
    return 0


def _cmd_scenario(args):
    config = _load_json(args.config)
    validate_config(config)
    if args.name and config["scenario"] != args.name:
        raise ConfigError("--name %r does not match config scenario %r"
                          % (args.name, config["scenario"]))
    manifest = run_scenario(config, args.out, seed=args.seed,
                            threads=args.threads,
                            oracle_only=args.oracle_only)
    print("wrote %d files to %s" % (len(manifest["outputs"]) + 1, args.out))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="slepian-qns",
        description="Band-limited (Slepian) noise spectroscopy toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("dpss", help="emit Slepian tapers as CSV columns")
    d.add_argument("--n", type=int, required=True, help="sequence length")
    d.add_argument("--w", type=float, required=True,
                   help="half-bandwidth in cycles per sample")
    d.add_argument("--orders", type=int, required=True,
                   help="number of taper columns (orders 0..orders-1)")
    d.add_argument("--out", help="output CSV (default stdout)")
    d.add_argument("--concentrations",
                   help="also write per-order concentrations to this CSV")
    d.set_defaults(func=_cmd_dpss)

    f = sub.add_parser("filter", help="evaluate a waveform's filter function")
    f.add_argument("--config", required=True,
                   help="JSON waveform description (see README)")
    f.add_argument("--out", help="output CSV (default stdout)")
    f.add_argument("--points", type=int, default=2001)
    f.add_argument("--max-hz", type=float, default=None,
                   help="grid end (default: the waveform Nyquist 1/(2 dt))")
    f.add_argument("--waveform-out",
                   help="also export the waveform samples as CSV "
                        "(n, t_start_s, omega_rad_per_s)")
    f.set_defaults(func=_cmd_filter)

    s = sub.add_parser("simulate", help="run one simulated measurement")
    s.add_argument("--config", required=True,
                   help="JSON with waveform, noise, n_shots[, axes, seed]")
    s.add_argument("--seed", type=int, default=None,
                   help="overrides the config seed")
    s.add_argument("--out", help="output JSON (default stdout)")
    s.add_argument("--threads", type=int, default=1)
    s.set_defaults(func=_cmd_simulate)

    e = sub.add_parser("estimate",
                       help="estimate spectrum values from stored results")
    e.add_argument("--results", nargs="+", required=True,
                   help="result JSONs written by `simulate`")
    e.add_argument("--method", choices=("eigen", "aqm"), default="eigen")
    e.add_argument("--out", help="output CSV (default stdout)")
    e.set_defaults(func=_cmd_estimate)

    c = sub.add_parser("scenario", help="run a configuration-driven study")
    c.add_argument("--config", required=True, help="scenario JSON")
    c.add_argument("--name", help="cross-check against config['scenario']")
    c.add_argument("--seed", type=int, default=None)
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--threads", type=int, default=1)
    c.add_argument("--oracle-only", action="store_true",
                   help="skip Monte Carlo, emit expected values only")
    c.set_defaults(func=_cmd_scenario)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, OSError, json.JSONDecodeError, KeyError) as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
