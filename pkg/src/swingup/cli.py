"""Command-line front end.

Subcommands ``trajectory``, ``sweep``, ``spectrum``, ``photonics`` and
``reproduce`` read a TOML run configuration (see ``swingup.config``);
``design`` evaluates the closed-form design rules from arguments.
Outputs are CSV for series and maps, JSON for scalar bundles.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    COMMANDS,
    ConfigError,
    RunConfig,
    load_config,
    parse_quantity,
    pulse_to_table,
    quantity,
    sweep_grid,
)
from .core import HBAR, BlochState, IntegrationError, integrate
from .photonics import ConvergenceError, PulseTrainSpec, correlation_table, default_tau_grid, emission_metrics
from .protocols import (
    bessel_j1,
    effective_sideband_area,
    fm_modulation_frequency_hint,
    half_period_dwells,
    rabi_params,
    second_detuning,
)
from .pulses import AREA, RATE, TIME, TwoColor, spectrum
from .sweeps import run_sweep

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_NUMERICAL = 4
EXIT_CONVERGENCE = 5


def _fmt(x):
    return repr(float(x))


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=False, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(type(o).__name__)


def _stem(run: RunConfig, cfg_path, command):
    base = Path(cfg_path).stem if cfg_path else "run"
    return f"{base}_{run.name}_{command}" if run.name != "main" else f"{base}_{command}"


def _meta(run: RunConfig):
    return {
        "run": run.name,
        "config": run.source,
        "version": __version__,
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "pulse": pulse_to_table(run.pulse),
        "integrator": asdict(run.integrator),
    }


# --- commands -------------------------------------------------------------------


def cmd_trajectory(run: RunConfig, out: Path, opts):
    """Time series of one pulse: CSV plus a JSON summary."""
    sec = run.sections["trajectory"]
    a, b = run.pulse.window()
    t0 = quantity(sec, "t0", TIME, a, "trajectory")
    t1 = quantity(sec, "t1", TIME, b, "trajectory")
    if not t1 > t0:
        raise ConfigError("trajectory: the time window is empty; set t0 and t1", run.source)
    gamma = quantity(sec, "gamma", RATE, 0.0, "trajectory")
    max_rows = int(sec.get("max_rows", 4000))
    h = run.integrator.step
    stride = int(sec.get("stride", max(1, math.ceil((t1 - t0) / h / max_rows))))
    settings = run.integrator.__class__(**{**asdict(run.integrator), "stride": stride})
    traj = integrate(BlochState(), run.pulse, t0, t1, settings, gamma)
    r = traj.bloch_vectors()
    om = run.pulse(traj.t)
    det = run.pulse.instantaneous_detuning(traj.t) * HBAR
    stem = _stem(run, run.source, "trajectory")
    path = out / f"{stem}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t [ps]", "f", "Re p", "Im p", "r_x", "r_y", "r_z", "hbar_delta [meV]", "|Omega| [1/ps]"])
        for k in range(len(traj.t)):
            w.writerow([_fmt(traj.t[k]), _fmt(traj.f[k]), _fmt(traj.p[k].real), _fmt(traj.p[k].imag),
                        _fmt(r[k, 0]), _fmt(r[k, 1]), _fmt(r[k, 2]),
                        "nan" if np.isnan(det[k]) else _fmt(det[k]), _fmt(abs(om[k]))])
    summary = {
        "final_f": float(traj.f[-1]),
        "final_p": [float(traj.p[-1].real), float(traj.p[-1].imag)],
        "bloch_norm": float(np.linalg.norm(r[-1])),
        "max_f": float(np.max(traj.f)),
        "rows": len(traj.t),
        "gamma_per_ps": gamma,
        "window_ps": [t0, t1],
    }
    if isinstance(run.pulse, TwoColor):
        p = run.pulse
        summary["delta2_rule_meV"] = HBAR * second_detuning(p.delta1, p.first_peak_amplitude())
        summary["delta2_meV"] = HBAR * p.delta2
    _write_json(out / f"{stem}.json", {"summary": summary, "metadata": _meta(run)})
    return {"run": run.name, "command": "trajectory", "files": [str(path)], **summary}


def cmd_sweep(run: RunConfig, out: Path, opts):
    sec = run.sections["sweep"]
    grid = sweep_grid(run, getattr(opts, "grid_limit", None))
    gamma = quantity(sec, "gamma", RATE, 0.0, "sweep")
    res = run_sweep(grid, workers=opts.threads, settings=run.integrator, gamma=gamma)
    stem = _stem(run, run.source, "sweep")
    res.metadata.update(_meta(run))
    res.to_csv(out / f"{stem}.csv")
    res.to_json(out / f"{stem}.json")
    summary = {
        "shape": list(grid.shape),
        "max_f": float(np.nanmax(res.values)) if np.isfinite(res.values).any() else None,
        "failures": len(res.failures),
    }
    if grid.shape == (1, 1):
        summary["value"] = float(res.values[0, 0])
    if res.failures and len(res.failures) == res.values.size:
        raise IntegrationError(f"every sweep cell failed, first: {res.failures[0]['error']}")
    return {"run": run.name, "command": "sweep", "files": [str(out / f"{stem}.csv")], **summary}


def cmd_spectrum(run: RunConfig, out: Path, opts):
    sec = run.sections["spectrum"]
    a, b = run.pulse.window()
    t0 = quantity(sec, "t0", TIME, a, "spectrum")
    t1 = quantity(sec, "t1", TIME, b, "spectrum")
    res = quantity(sec, "resolution", RATE, 0.01 / HBAR, "spectrum") * HBAR
    step = quantity(sec, "step", TIME, 2e-3, "spectrum")
    lo = quantity(sec, "detuning_min", RATE, -50 / HBAR, "spectrum") * HBAR
    hi = quantity(sec, "detuning_max", RATE, 50 / HBAR, "spectrum") * HBAR
    spec = spectrum(run.pulse, (t0, t1), res, step)
    keep = (spec.detuning >= lo) & (spec.detuning <= hi)
    mag = spec.magnitude[keep]
    norm = mag / np.max(spec.magnitude) if np.max(spec.magnitude) > 0 else mag
    stem = _stem(run, run.source, "spectrum")
    path = out / f"{stem}.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["detuning [meV]", "|amplitude| [ps]", "normalized"])
        for d, m, n in zip(spec.detuning[keep], mag, norm):
            w.writerow([_fmt(d), _fmt(m), _fmt(n)])
    peaks = [float(x) for x in spec.peaks()]
    _write_json(out / f"{stem}.json", {"peaks_meV": peaks, "d_omega_meV": spec.d_omega * HBAR,
                                       "metadata": _meta(run)})
    return {"run": run.name, "command": "spectrum", "files": [str(path)], "peaks_meV": peaks[:8]}


def train_from_run(run: RunConfig):
    sec = run.sections["photonics"]
    kw = {}
    for key in ("max_periods", "warmup_periods"):
        if key in sec:
            kw[key] = int(sec[key])
    if "tol" in sec:
        kw["tol"] = float(sec["tol"])
    try:
        return PulseTrainSpec(run.pulse, quantity(sec, "period", TIME, where="photonics"),
                              quantity(sec, "gamma", RATE, where="photonics"),
                              settings=run.integrator, **kw)
    except ValueError as exc:
        raise ConfigError(f"photonics: {exc}", run.source) from None


def cmd_photonics(run: RunConfig, out: Path, opts):
    sec = run.sections["photonics"]
    train = train_from_run(run)
    m = emission_metrics(train)
    stem = _stem(run, run.source, "photonics")
    files = [str(out / f"{stem}.json")]
    _write_json(out / f"{stem}.json", {
        "purity": m.purity,
        "indistinguishability": m.indistinguishability,
        "photon_output": m.photon_output,
        **m.percent(),
        "raw": m.raw,
        "settings": {"gamma_per_ps": train.gamma, "period_ps": train.period, "tol": train.tol,
                     "max_periods": train.max_periods},
        "metadata": _meta(run),
    })
    if sec.get("correlations", False):
        n = int(sec.get("tau_points", 200))
        table = correlation_table(train, default_tau_grid(train, n_fine=n, n_coarse=max(n // 4, 4)))
        table.to_csv(out / f"{stem}_g2.csv")
        files.append(str(out / f"{stem}_g2.csv"))
    return {"run": run.name, "command": "photonics", "files": files, "purity": m.purity,
            "indistinguishability": m.indistinguishability, "photon_output": m.photon_output,
            "periods": m.raw["periods"]}


HANDLERS = {
    "trajectory": cmd_trajectory,
    "sweep": cmd_sweep,
    "spectrum": cmd_spectrum,
    "photonics": cmd_photonics,
}


def run_command(cfg, command, out, opts):
    runs = [r for r in cfg.runs if r.has(command)]
    if not runs:
        raise ConfigError(f"no run has a [{command}] section", cfg.path)
    return [HANDLERS[command](r, out, opts) for r in runs]


# --- design -------------------------------------------------------------------


def cmd_design(args):
    """Closed-form design values as (name, value, unit) rows."""

    def q(val, kind, name):
        return parse_quantity(val, kind, f"--{name.replace('_', '-')}")

    rows = []
    if args.rule == "rabi":
        o = q(args.omega0, RATE, "omega0")
        d = q(args.delta, RATE, "delta")
        p = rabi_params(o, d)
        rows += [("omega_r", p.omega_r * HBAR, "meV"), ("omega_r", p.omega_r, "1/ps"),
                 ("amplitude_a", p.amplitude_a, ""), ("period", p.period, "ps")]
    elif args.rule == "delta2":
        d1 = q(args.delta1, RATE, "delta1")
        if args.omega1 is not None:
            om = q(args.omega1, RATE, "omega1")
        else:
            if args.alpha1 is None or args.sigma1 is None:
                raise ConfigError("delta2 needs --omega1 or both --alpha1 and --sigma1")
            sigma = q(args.sigma1, TIME, "sigma1")
            if not sigma > 0:
                raise ConfigError("--sigma1 must be positive")
            om = q(args.alpha1, AREA, "alpha1") / (math.sqrt(2 * math.pi) * sigma)
        rows += [("omega1_peak", om, "1/ps"), ("delta2", second_detuning(d1, om) * HBAR, "meV")]
    elif args.rule == "sideband":
        alpha = q(args.alpha, AREA, "alpha")
        dm = q(args.delta_m, RATE, "delta_m")
        wm = q(args.omega_m, RATE, "omega_m")
        if wm == 0:
            raise ConfigError("--omega-m must be non-zero")
        rows += [("J1(delta_m/omega_m)", bessel_j1(dm / wm), ""),
                 ("effective_area", effective_sideband_area(alpha, dm, wm) / math.pi, "pi")]
    elif args.rule == "fm-hint":
        alpha = q(args.alpha, AREA, "alpha")
        sigma = q(args.sigma, TIME, "sigma")
        if not sigma > 0:
            raise ConfigError("--sigma must be positive")
        dc = q(args.delta_c, RATE, "delta_c")
        om = alpha / (math.sqrt(2 * math.pi) * sigma)
        rows += [("omega0_peak", om * HBAR, "meV"),
                 ("omega_m_hint", fm_modulation_frequency_hint(om, dc) * HBAR, "meV")]
    elif args.rule == "dwell":
        o = q(args.omega0, RATE, "omega0")
        dl = q(args.delta_low, RATE, "delta_low")
        dh = q(args.delta_high, RATE, "delta_high")
        a, b = half_period_dwells(o, dl, dh)
        rows += [("dwell_low", a, "ps"), ("dwell_high", b, "ps"), ("cycle", a + b, "ps")]
    return rows


# --- argument parsing -----------------------------------------------------------


def build_parser():
    ap = argparse.ArgumentParser(prog="swingup", description="Swing-up excitation of a two-level emitter.")
    ap.add_argument("--version", action="version", version=f"swingup {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, many=False):
        if many:
            p.add_argument("--config", nargs="+", required=True, help="TOML run configurations")
        else:
            p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        p.add_argument("--threads", type=int, default=1, help="worker threads for sweeps")
        p.add_argument("--json", action="store_true", help="print a JSON summary to stdout")
        p.add_argument("--grid-limit", type=int, default=None,
                       help="cap every sweep axis at this many points (quick checks)")

    for name in COMMANDS:
        common(sub.add_parser(name, help=f"run the [{name}] sections of a config"))
    rp = sub.add_parser("reproduce", help="run every command listed in one or more configs")
    common(rp, many=True)

    dp = sub.add_parser("design", help="closed-form design rules")
    rules = dp.add_subparsers(dest="rule", required=True)
    flag = argparse.ArgumentParser(add_help=False)
    flag.add_argument("--json", action="store_true", help="print JSON instead of a table")
    r = rules.add_parser("rabi", parents=[flag], help="generalized Rabi frequency and amplitude")
    r.add_argument("--omega0", required=True)
    r.add_argument("--delta", required=True)
    r = rules.add_parser("delta2", parents=[flag], help="detuning of the second colour")
    r.add_argument("--delta1", required=True)
    r.add_argument("--omega1")
    r.add_argument("--alpha1")
    r.add_argument("--sigma1")
    r = rules.add_parser("sideband", parents=[flag], help="effective area of the first FM side-band")
    r.add_argument("--alpha", required=True)
    r.add_argument("--delta-m", dest="delta_m", required=True)
    r.add_argument("--omega-m", dest="omega_m", required=True)
    r = rules.add_parser("fm-hint", parents=[flag], help="modulation frequency hint")
    r.add_argument("--alpha", required=True)
    r.add_argument("--sigma", required=True)
    r.add_argument("--delta-c", dest="delta_c", required=True)
    r = rules.add_parser("dwell", parents=[flag], help="half-period dwell times of a switching schedule")
    r.add_argument("--omega0", required=True)
    r.add_argument("--delta-low", dest="delta_low", required=True)
    r.add_argument("--delta-high", dest="delta_high", required=True)
    return ap


def _print_results(results, as_json):
    if as_json:
        print(json.dumps(results, indent=1, default=_json_default))
        return
    for r in results:
        extra = ", ".join(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}"
                          for k, v in r.items() if k not in ("run", "command", "files"))
        print(f"[{r['command']}] {r['run']}: {extra}")
        for f in r["files"]:
            print(f"  -> {f}")


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.command == "design":
            rows = cmd_design(args)
            if args.json:
                print(json.dumps([{"name": n, "value": v, "unit": u} for n, v, u in rows], indent=1))
            else:
                for n, v, u in rows:
                    print(f"{n:>22s} = {v:.10g} {u}".rstrip())
            return EXIT_OK
        out = Path(args.out)
        os.makedirs(out, exist_ok=True)
        results = []
        if args.command == "reproduce":
            for p in args.config:
                cfg = load_config(p)
                for c in cfg.commands:
                    results += run_command(cfg, c, out, args)
        else:
            cfg = load_config(args.config)
            results = run_command(cfg, args.command, out, args)
        _print_results(results, args.json)
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConvergenceError as exc:
        print(f"not converged: {exc}", file=sys.stderr)
        return EXIT_CONVERGENCE
    except (IntegrationError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ValueError as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
