"""Command-line entry points.

Subcommands: ``simulate``, ``design-gains``, ``design-pid``, ``check-stability``,
``eigen-scan`` and ``export-fixtures``.  Scenario settings come from a YAML
file (``--config``) or a built-in preset (``--preset``); ``--set key=value``
and the dedicated flags override individual keys.
"""

import argparse
import dataclasses
import math
import sys
import warnings
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import PRESETS, apply_overrides, config_to_dict, dump_config, load_config, preset
from .control import GOLDEN_GAINS, design_pid, plant_tf_from_params, series_branches, to_parallel_gains
from .friction import FrictionParams
from .harness import RunResult, eigen_scan, export_csv, run
from .observer import ObserverGains, check_stability, design_gains, dominant_pole

FIXTURE_PRESETS = ("illustration_stable", "illustration_divergent")
FIXTURE_STRIDE = 100


def _scenario(args):
    if args.config and args.preset:
        raise SystemExit("use either --config or --preset, not both")
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = preset(args.preset or "illustration_stable")
    overrides = list(args.set or [])
    for flag, key in (("duration", "duration"), ("rho", "observer.rho"), ("mode", "mode")):
        value = getattr(args, flag, None)
        if value is not None:
            overrides.append(f"{key}={value}")
    cfg = apply_overrides(cfg, overrides)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
    elif cfg.noisy and cfg.mode in ("open_loop_observer", "closed_loop_pid",
                                    "closed_loop_pid_observer"):
        raise SystemExit("--seed is required for scenarios with input or measurement noise")
    return cfg


def _print(data):
    sys.stdout.write(yaml.safe_dump(data, sort_keys=False))


def _clean(metrics):
    return {k: (None if isinstance(v, float) and math.isnan(v) else float(v))
            for k, v in metrics.items()}


def cmd_simulate(args):
    cfg = _scenario(args)
    result = run(cfg)
    out = Path(args.out or cfg.output.directory or ".")
    out.mkdir(parents=True, exist_ok=True)
    csv_path = export_csv(result, out / f"{args.stem}.csv")
    dump_config(cfg, out / f"{args.stem}_config.yaml")
    report = {"csv": str(csv_path), "metrics": _clean(result.metrics)}
    if args.plots or cfg.output.plots:
        from .plotting import emit_plots

        report["plots"] = [str(p) for p in emit_plots(result, cfg, out, args.stem)]
    (out / f"{args.stem}_metrics.yaml").write_text(
        yaml.safe_dump(report["metrics"], sort_keys=False), encoding="utf-8")
    _print(report)
    return 0


def _friction_from_args(args):
    return FrictionParams(coulomb_coeff=args.coulomb, viscous_coeff=args.sigma,
                          presliding_scale=args.scale, viscous_lag=args.beta,
                          stiffness_clamp=args.kappa)


def _stability_dict(gains, fp, mass):
    rep = check_stability(gains, fp, mass)

    def c(z):
        return [float(z.real), float(z.imag)]

    return {
        "prop1_ok": list(rep.prop1_ok),
        "stable": rep.stable,
        "eigenvalues_at_zero_stiffness": [c(z) for z in rep.eigenvalues],
        "eigenvalues_at_kappa": [c(z) for z in rep.reversal_eigenvalues],
        "dominant_pole": rep.dominant_pole,
        "all_real_negative": rep.all_real_negative,
    }


def cmd_design_gains(args):
    fp = _friction_from_args(args)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        g = design_gains(fp, args.mass, args.rho)
    report = {"L1": g.L1, "L2": g.L2, "rho": g.rho,
              "designed_dominant_pole": dominant_pole(fp, args.mass, args.rho)}
    report.update(_stability_dict(g, fp, args.mass))
    if caught:
        report["warnings"] = [str(w.message) for w in caught]
    _print(report)
    return 0


def cmd_check_stability(args):
    fp = _friction_from_args(args)
    g = ObserverGains(args.L1, args.L2)
    _print(_stability_dict(g, fp, args.mass))
    return 0


def cmd_design_pid(args):
    from .plant import PlantParams

    pp = PlantParams(mass=args.mass, input_gain=args.input_gain)
    fp = FrictionParams(viscous_coeff=args.sigma)
    if args.golden:
        branches = [{"k": k, "tau": tau, "ti": ti} for k, tau, ti in series_branches(GOLDEN_GAINS)]
        _print({"gains": GOLDEN_GAINS._asdict(), "series_branches": branches})
        return 0
    if args.max_s is None:
        raise SystemExit("--max-s is required unless --golden is given")
    tf = plant_tf_from_params(pp, fp)
    design = design_pid(tf, args.max_s, args.phase_margin)
    gains = to_parallel_gains(design, tf)
    _print({"plant": tf._asdict(), "design": design._asdict(), "gains": gains._asdict()})
    return 0


def cmd_eigen_scan(args):
    cfg = _scenario(args)
    overrides = []
    if args.rhos:
        overrides.append("eigen_scan.rhos=[" + ",".join(str(r) for r in args.rhos) + "]")
    if args.n:
        overrides.append(f"eigen_scan.n_stiffness={args.n}")
    cfg = apply_overrides(cfg, overrides)
    table = eigen_scan(cfg)
    report = {"all_real_negative": bool(table.metrics["all_real_negative"])}
    rhos = table.columns["rho"]
    report["dominant_poles"] = {float(r): float(table.columns["dominant_pole"][rhos == r][0])
                                for r in np.unique(rhos)}
    if args.out:
        report["csv"] = str(export_csv(table, args.out))
    _print(report)
    return 0


def decimate(result, stride=FIXTURE_STRIDE):
    return RunResult({k: v[::stride].copy() for k, v in result.columns.items()},
                     dict(result.metrics))


def export_fixtures(directory, seed, stride=FIXTURE_STRIDE):
    """Run the two illustration scenarios and write decimated CSV, config and metrics."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for name in FIXTURE_PRESETS:
        cfg = dataclasses.replace(preset(name), seed=seed)
        result = run(cfg)
        written.append(export_csv(decimate(result, stride), directory / f"{name}.csv"))
        dump_config(cfg, directory / f"{name}_config.yaml")
        (directory / f"{name}_metrics.yaml").write_text(
            yaml.safe_dump(_clean(result.metrics), sort_keys=False), encoding="utf-8")
    return written


def cmd_export_fixtures(args):
    paths = export_fixtures(args.out, args.seed, args.stride)
    _print({"written": [str(p) for p in paths]})
    return 0


def _add_scenario_args(p):
    p.add_argument("--config", help="YAML scenario file")
    p.add_argument("--preset", choices=PRESETS, help="built-in scenario")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override a config key, e.g. observer.rho=1.5 (repeatable)")
    p.add_argument("--seed", type=int, help="noise seed (required for noisy scenarios)")


def _add_friction_args(p):
    p.add_argument("--mass", type=float, default=0.538)
    p.add_argument("--coulomb", type=float, default=0.35)
    p.add_argument("--sigma", type=float, default=21.1)
    p.add_argument("--scale", type=float, default=3000.0)
    p.add_argument("--beta", type=float, default=0.001, help="viscous lag; 0 selects the static law")
    p.add_argument("--kappa", type=float, default=8000.0)


def build_parser():
    parser = argparse.ArgumentParser(prog="frictobs", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run a scenario and write CSV, metrics and plots")
    _add_scenario_args(p)
    p.add_argument("--mode", help="override the scenario mode")
    p.add_argument("--duration", type=float)
    p.add_argument("--rho", type=float)
    p.add_argument("--out", help="output directory")
    p.add_argument("--stem", default="run", help="output file stem")
    p.add_argument("--plots", action="store_true", help="also write PNG figures")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("design-gains", help="observer gains for a design parameter rho")
    _add_friction_args(p)
    p.add_argument("--rho", type=float, default=1.02)
    p.set_defaults(func=cmd_design_gains)

    p = sub.add_parser("check-stability", help="gain conditions and eigenvalues for given gains")
    _add_friction_args(p)
    p.add_argument("--L1", type=float, required=True)
    p.add_argument("--L2", type=float, required=True)
    p.set_defaults(func=cmd_check_stability)

    p = sub.add_parser("design-pid", help="sensitivity-bounded PID design")
    p.add_argument("--mass", type=float, default=0.538)
    p.add_argument("--input-gain", type=float, default=3.28)
    p.add_argument("--sigma", type=float, default=21.1)
    p.add_argument("--max-s", type=float, help="bound on the peak disturbance sensitivity")
    p.add_argument("--phase-margin", type=float, help="phase argument [rad] (optional)")
    p.add_argument("--golden", action="store_true", help="report the deployed gain set")
    p.set_defaults(func=cmd_design_pid)

    p = sub.add_parser("eigen-scan", help="observer eigenvalues over a rho x stiffness grid")
    _add_scenario_args(p)
    p.add_argument("--rhos", type=float, nargs="+")
    p.add_argument("--n", type=int, help="stiffness samples per rho")
    p.add_argument("--out", help="CSV path for the table")
    p.set_defaults(func=cmd_eigen_scan, preset="eigen_scan")

    p = sub.add_parser("export-fixtures", help="regenerate the golden illustration runs")
    p.add_argument("--out", required=True, help="fixture directory")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--stride", type=int, default=FIXTURE_STRIDE, help="row decimation")
    p.set_defaults(func=cmd_export_fixtures)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


__all__ = ["main", "build_parser", "export_fixtures", "decimate", "config_to_dict"]
