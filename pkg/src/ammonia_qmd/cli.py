"""Command-line front end.

Subcommands write CSV/JSON results, a ``.manifest.json`` describing how to
regenerate them, and optional SVG figures.  Exit status is 0 on success,
2 on usage errors and 1 on runtime errors.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, classical, qdyn, spectra, sweep
from .rng import stream

OUTDIR_ENV = "AMMONIA_QMD_OUTDIR"
MODELS = ("nh3", "nd3", "custom", "classical-full", "classical-continuous")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    json_errors = False

    def error(self, message):
        if _Parser.json_errors:
            sys.stderr.write(json.dumps({"error": "usage", "message": message}) + "\n")
            raise SystemExit(2)
        super().error(message)


def default_fixture() -> Path:
    return Path(str(resources.files("ammonia_qmd") / "data" / "nh3_pressure_reconstructed.csv"))


def _outdir() -> Path:
    return Path(os.environ.get(OUTDIR_ENV, "."))


def _out_path(args, name: str) -> Path:
    if args.out:
        return Path(args.out)
    return _outdir() / name


def _svg_path(args, out: Path, default: bool) -> Path | None:
    if getattr(args, "no_svg", False):
        return None
    if getattr(args, "svg", None):
        return Path(args.svg)
    return out.with_suffix(".svg") if default else None


def _write_manifest(out: Path, args, config: dict, outputs: list[Path]) -> Path:
    flags = {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "config")}
    manifest = {
        "subcommand": args.command,
        "flags": flags,
        "config": config,
        "seed": config.get("seed", getattr(args, "seed", None)),
        "outputs": [str(p) for p in outputs],
        "version": __version__,
    }
    path = Path(str(out) + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _parse_initial(text: str) -> qdyn.StateVector:
    named = {
        "left": qdyn.StateVector(1 + 0j, 0j),
        "right": qdyn.StateVector(0j, 1 + 0j),
        "symmetric": qdyn.from_energy_basis(1, 0),
        "antisymmetric": qdyn.from_energy_basis(0, 1),
    }
    if text in named:
        return named[text]
    try:
        a, b = (complex(x.replace(" ", "")) for x in text.split(","))
    except ValueError:
        raise UsageError(
            f"--initial must be one of {sorted(named)} or 'alpha,beta' complex pair"
        ) from None
    return qdyn.StateVector(a, b).normalized()


def _quantum_config(args, p: float) -> qdyn.QuantumModelConfig:
    common = dict(p_rate=p, dt=args.dt, n_cycles=args.cycles, seed=args.seed,
                  impact_side=args.side)
    model = getattr(args, "model", None) or args.preset
    if args.omega_p is not None:
        return qdyn.QuantumModelConfig(omega_p=args.omega_p, **common)
    if model in (None, "custom"):
        raise UsageError("a custom quantum model needs --omega-p")
    return qdyn.preset(model, **common)


def _template(args):
    if args.model.startswith("classical-"):
        return classical.ClassicalModelConfig(
            model=args.model.split("-", 1)[1],
            epsilon=args.epsilon,
            dt=args.dt,
            n_cycles=args.cycles,
            seed=args.seed,
            velocity_measure=args.velocity_measure,
            mixing=args.mixing,
        )
    if args.epsilon != 1.0:
        raise UsageError("--epsilon applies to classical models only")
    return _quantum_config(args, 0.0)


def _parse_impacts(text: str, cfg: qdyn.QuantumModelConfig) -> list[qdyn.ImpactEvent]:
    gen = stream(cfg.seed, 0)
    events = []
    for item in text.split(","):
        t_text, _, d_text = item.partition(":")
        try:
            t = float(t_text)
            d = gen.random() * cfg.max_duration if d_text in ("", "auto") else float(d_text)
        except ValueError:
            raise UsageError(f"bad impact {item!r}; expected time:duration or time:auto") from None
        if math.isinf(d):
            raise UsageError("auto durations need --omega-p > 0")
        events.append(qdyn.ImpactEvent(int(round(t / cfg.dt)), d, "left"))
    return events


def cmd_trajectory(args) -> int:
    if args.impacts and args.p > 0:
        raise UsageError("--impacts (scripted) and --p > 0 (random) are exclusive")
    cfg = _quantum_config(args, args.p)
    initial = _parse_initial(args.initial)
    if args.impacts:
        impacts = _parse_impacts(args.impacts, cfg)
    else:
        impacts = qdyn.draw_impacts(cfg, 0)
    traj = qdyn.evolve(cfg, impacts, initial)
    out = _out_path(args, "trajectory.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    t = np.arange(traj.alpha.size) * cfg.dt
    with open(out, "w") as fh:
        fh.write("t,y\n")
        for ti, yi in zip(t, traj.occupancy):
            fh.write(f"{float(ti)!r},{float(yi)!r}\n")
    outputs = [out]
    svg = _svg_path(args, out, default=False)
    if svg:
        from .plots import trajectory_svg

        trajectory_svg(svg, t, traj.occupancy, [e.index * cfg.dt for e in impacts])
        outputs.append(svg)
    a, b = qdyn.basis_transform(traj.final_state)
    config = cfg.to_dict()
    config["impacts"] = [[e.index * cfg.dt, e.duration, e.side] for e in impacts]
    config["final_energy_coefficients"] = [[a.real, a.imag], [b.real, b.imag]]
    _write_manifest(out, args, config, outputs)
    print(json.dumps({"out": str(out), "n_impacts": len(impacts),
                      "a": f"{a:.4f}", "b": f"{b:.4f}"}))
    return 0


def cmd_spectrum(args) -> int:
    template = _template(args)
    specs = sweep.ensemble_spectrum(template, args.p, args.ensemble, args.quantity, args.threads)
    avg = spectra.average_spectra(specs)
    fit = spectra.fit_lineshape(avg, tuple(args.fit_range))
    out = _out_path(args, "spectrum.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    avg.to_csv(out)
    fit_path = out.with_suffix(".fit.json")
    fit_path.write_text(fit.to_json() + "\n")
    outputs = [out, fit_path]
    svg = _svg_path(args, out, default=True)
    if svg:
        from .plots import spectrum_svg

        spectrum_svg(svg, avg, fit, nu_max=args.fit_range[1])
        outputs.append(svg)
    config = {**template.to_dict(), "p_rate": args.p}
    _write_manifest(out, args, config, outputs)
    print(fit.to_json())
    return 0


def cmd_sweep(args) -> int:
    template = _template(args)
    grid = sweep.parse_grid(args.p)
    result = sweep.run_sweep(template, grid, args.ensemble, args.quantity,
                             tuple(args.fit_range), threads=args.threads)
    scaling = _scaling(args.scaling, args.model)
    if scaling is not None:
        result = sweep.map_pressure(result, scaling)
    out = _out_path(args, "sweep.csv")
    out.parent.mkdir(parents=True, exist_ok=True)
    result.to_csv(out)
    outputs = [out]
    svg = _svg_path(args, out, default=True)
    if svg:
        from .plots import sweep_svg

        sweep_svg(svg, result)
        outputs.append(svg)
    _write_manifest(out, args, result.config, outputs)
    summary = {"out": str(out), "quench_p": sweep.detect_quench(result)}
    try:
        summary["slope"] = sweep.broadening_slope(result)
    except ValueError:
        summary["slope"] = None
    print(json.dumps(summary))
    return 0


def _scaling(text, model=None):
    if text is None:
        if model in sweep.SCALINGS:
            return sweep.SCALINGS[model]
        return None
    if text in sweep.SCALINGS:
        return sweep.SCALINGS[text]
    try:
        return sweep.PressureScaling(float(text))
    except ValueError as exc:
        raise UsageError(f"--scaling: {exc}") from None


def cmd_compare(args) -> int:
    result = sweep.SweepResult.from_csv(args.sweep)
    data = sweep.ExperimentalDataset.from_csv(args.data or default_fixture())
    scaling = _scaling(args.scaling) or sweep.SCALINGS["nh3"]
    report = sweep.compare_experiment(result, data, scaling)
    out = _out_path(args, "comparison.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report.to_json() + "\n")
    outputs = [out]
    svg = _svg_path(args, out, default=True)
    if svg:
        from .plots import comparison_svg

        comparison_svg(svg, sweep.map_pressure(result, scaling), data, report)
        outputs.append(svg)
    _write_manifest(out, args, {"p_per_bar": scaling.p_per_bar, **result.header()}, outputs)
    print(json.dumps({"out": str(out), "nu0_rms": report.nu0_rms, "b_rms": report.b_rms,
                      "broadening_ratio": report.broadening_ratio}))
    return 0


def cmd_coherence(args) -> int:
    cfg = _quantum_config(args, args.p)
    initial = _parse_initial(args.initial)
    trajs = qdyn.simulate_ensemble(cfg, args.ensemble, initial)
    window = None
    if args.window:
        lo, hi = (float(x) for x in args.window.split(":"))
        window = (lo, hi)
    stats = qdyn.coherence_statistics(trajs, window)
    out = _out_path(args, "coherence.json")
    out.parent.mkdir(parents=True, exist_ok=True)
    record = stats.to_dict()
    # Decimated |rho_LR| traces of the first few trajectories.
    step = max(1, int(round(args.trace_step / cfg.dt)))
    record["trace_times"] = (np.arange(0, trajs[0].alpha.size, step) * cfg.dt).tolist()
    record["abs_rho_LR_traces"] = [
        np.abs(t.coherence[::step]).tolist() for t in trajs[: args.n_traces]
    ]
    out.write_text(json.dumps(record, indent=1, sort_keys=True) + "\n")
    outputs = [out]
    svg = _svg_path(args, out, default=True)
    if svg:
        from .plots import coherence_svg

        coherence_svg(svg, stats, np.array(record["trace_times"]),
                      [np.array(t) for t in record["abs_rho_LR_traces"]])
        outputs.append(svg)
    _write_manifest(out, args, cfg.to_dict(), outputs)
    print(json.dumps({"out": str(out), "mean_abs_rho_LR": stats.mean_abs_coherence,
                      "abs_ensemble_rho_LR": stats.ensemble_coherence,
                      "edge_fraction": stats.edge_fraction}))
    return 0


def _fit_range(text):
    lo, hi = (float(x) for x in text.split(":"))
    return [lo, hi]


def _add_common(p, quantum_only=False):
    p.add_argument("--config", help="JSON file of flag defaults; explicit flags win")
    p.add_argument("--dt", type=float, default=1 / 64, help="sampling step in cycles")
    p.add_argument("--cycles", type=float, default=2048, help="record length in cycles")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--omega-p", type=float, default=None, help="perturbation strength (rad/cycle)")
    p.add_argument("--side", choices=qdyn.SIDE_POLICIES, default="random")
    p.add_argument("--out", help=f"output file (default: ${OUTDIR_ENV} or cwd)")
    p.add_argument("--svg", help="SVG figure path")
    if not quantum_only:
        p.add_argument("--no-svg", action="store_true")
        p.add_argument("--epsilon", type=float, default=1.0)
        p.add_argument("--velocity-measure", choices=classical.VELOCITY_MEASURES,
                       default="amplitude")
        p.add_argument("--mixing", choices=classical.MIXINGS, default="phasor")
        p.add_argument("--quantity", choices=spectra.QUANTITIES, default="modulus")
        p.add_argument("--fit-range", type=_fit_range, default=list(spectra.DEFAULT_FIT_RANGE),
                       help="nu_min:nu_max")
        p.add_argument("--ensemble", type=int, default=sweep.DEFAULT_ENSEMBLE)
        p.add_argument("--threads", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ammonia-qmd", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("--json-errors", action="store_true",
                        help="report errors as JSON on stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("trajectory", help="left-well occupancy of one realisation")
    model = p.add_mutually_exclusive_group(required=True)
    model.add_argument("--preset", choices=sorted(qdyn.PRESETS))
    model.add_argument("--omega-p", type=float)
    p.add_argument("--p", type=float, default=0.0, help="impacts per cycle")
    p.add_argument("--impacts", help="scripted impacts 'time:duration|auto,...'")
    p.add_argument("--initial", default="left",
                   help="left|right|symmetric|antisymmetric or 'alpha,beta'")
    p.add_argument("--config")
    p.add_argument("--dt", type=float, default=1 / 64)
    p.add_argument("--cycles", type=float, default=4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--side", choices=qdyn.SIDE_POLICIES, default="random")
    p.add_argument("--out")
    p.add_argument("--svg")
    p.set_defaults(func=cmd_trajectory)

    p = sub.add_parser("spectrum", help="ensemble spectrum and line fit at one impact rate")
    p.add_argument("--model", choices=MODELS, required=True)
    p.add_argument("--p", type=float, required=True)
    _add_common(p)
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("sweep", help="fitted peak frequency and width over an impact-rate grid")
    p.add_argument("--model", choices=MODELS, required=True)
    p.add_argument("--p", required=True, help="grid start:stop:step or comma list")
    p.add_argument("--scaling", help="impacts/cycle per bar, or nh3|nd3")
    _add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", help="overlay a sweep on pressure data")
    p.add_argument("--sweep", required=True, help="sweep CSV")
    p.add_argument("--data", help="dataset CSV (default: bundled NH3 reconstruction)")
    p.add_argument("--scaling", help="impacts/cycle per bar, or nh3|nd3 (default nh3)")
    p.add_argument("--config")
    p.add_argument("--out")
    p.add_argument("--svg")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("coherence", help="density-matrix localisation diagnostics")
    model = p.add_mutually_exclusive_group(required=True)
    model.add_argument("--preset", choices=sorted(qdyn.PRESETS))
    model.add_argument("--omega-p", type=float)
    p.add_argument("--p", type=float, default=7.5)
    p.add_argument("--ensemble", type=int, default=sweep.DEFAULT_ENSEMBLE)
    p.add_argument("--initial", default="left")
    p.add_argument("--window", help="late-time window 'start:stop' in cycles")
    p.add_argument("--trace-step", type=float, default=1.0, help="trace decimation in cycles")
    p.add_argument("--n-traces", type=int, default=4)
    p.add_argument("--config")
    p.add_argument("--dt", type=float, default=1 / 64)
    p.add_argument("--cycles", type=float, default=2048)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--side", choices=qdyn.SIDE_POLICIES, default="random")
    p.add_argument("--out")
    p.add_argument("--svg")
    p.add_argument("--no-svg", action="store_true")
    p.set_defaults(func=cmd_coherence)
    return parser


def _apply_config_file(parser, argv):
    """Parse ``argv`` with defaults taken from ``--config`` so explicit flags win."""
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    path = pre.parse_known_args(argv)[0].config
    if not path:
        return parser.parse_args(argv)
    try:
        defaults = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config file {path} is not valid JSON: {exc}") from None
    if not isinstance(defaults, dict):
        raise UsageError(f"config file {path} must hold a JSON object")
    choices = parser._subparsers._group_actions[0].choices
    command = next((a for a in argv if a in choices), None)
    if command is None:
        return parser.parse_args(argv)
    subparser = choices[command]
    known = {a.dest for a in subparser._actions}
    unknown = set(defaults) - known
    if unknown:
        raise UsageError(f"unknown keys in config file: {sorted(unknown)}")
    subparser.set_defaults(**defaults)
    # Required options may now come from the file.
    for action in subparser._actions:
        if action.dest in defaults:
            action.required = False
    for group in subparser._mutually_exclusive_groups:
        if any(a.dest in defaults for a in group._group_actions):
            group.required = False
    return parser.parse_args(argv)


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    _Parser.json_errors = "--json-errors" in argv
    parser = build_parser()
    try:
        args = _apply_config_file(parser, argv)
        return args.func(args)
    except UsageError as exc:
        _report(exc, "usage", parser)
        return 2
    except (ValueError, OSError, KeyError) as exc:
        _report(exc, type(exc).__name__, None)
        return 1


def _report(exc, kind, parser):
    if _Parser.json_errors:
        sys.stderr.write(json.dumps({"error": kind, "message": str(exc)}) + "\n")
    else:
        if parser is not None:
            parser.print_usage(sys.stderr)
        sys.stderr.write(f"ammonia-qmd: error: {exc}\n")


if __name__ == "__main__":
    raise SystemExit(main())
