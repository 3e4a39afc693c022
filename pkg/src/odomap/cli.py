"""Command-line driver: ``odomap simulate | map | evaluate | sweep``.

Every configuration value can be given in a TOML file (``--config``) and
overridden per run with a flag of the same dotted name, for example
``--correlation.c_min 2.0`` or ``--sim.laps=3``.

Exit codes: 0 success, 2 configuration error, 3 data error (unreadable or
malformed input), 4 pipeline failure (e.g. no loop closures).
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import warnings
from pathlib import Path

import numpy as np

from . import plotting
from .config import ConfigError, PipelineConfig, load_config, parse_value
from .evaluation import MatchError, evaluate_map, write_evaluation_json
from .geometry import Polygon, poses_to_array
from .loop_closure import write_matrix_csv
from .mapping import MapError, save_map
from .optimizer import OptimizationError, write_report_json
from .pipeline import PipelineError, build_map, run_simulation, summarize, sweep
from .pose_graph import write_graph
from .segmentation import write_dominant_points_csv
from .shapes import BUILTIN
from .sim import DataError, Environment, OdometryNoiseModel, load_environment, read_trace_csv, write_trace_csv

log = logging.getLogger("odomap")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_PIPELINE = 0, 2, 3, 4


# -- input helpers ----------------------------------------------------------


def load_env(spec: str) -> Environment:
    """Environment JSON path, or the name of a built-in shape."""
    path = Path(spec)
    if not path.exists() and spec in BUILTIN:
        return BUILTIN[spec]()
    if not path.exists():
        raise FileNotFoundError(f"{spec}: no such file (built-in shapes: {', '.join(BUILTIN)})")
    try:
        return load_environment(path)
    except ValueError as exc:
        raise DataError(f"{spec}: {exc}") from None


def load_polygon(spec: str) -> Polygon:
    """Boundary of a map or environment file; self-intersecting maps are accepted."""
    path = Path(spec)
    if not path.exists() and spec in BUILTIN:
        return BUILTIN[spec]().boundary
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{spec}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    try:
        return Polygon(data["boundary"])
    except (KeyError, TypeError):
        raise DataError(f"{spec}: expected a 'boundary' list of [x, y] points") from None
    except ValueError as exc:
        raise DataError(f"{spec}: invalid boundary: {exc}") from None


def split_overrides(extra: list[str]) -> dict:
    """``--section.key value`` / ``--section.key=value`` tokens to a dict."""
    out = {}
    k = 0
    while k < len(extra):
        tok = extra[k]
        if not (tok.startswith("--") and "." in tok.split("=", 1)[0]):
            raise ConfigError(f"unrecognized argument {tok!r}")
        name, eq, value = tok[2:].partition("=")
        if not eq:
            if k + 1 >= len(extra):
                raise ConfigError(f"{tok} needs a value")
            k += 1
            value = extra[k]
        out[name] = parse_value(value)
        k += 1
    return out


def _config(args, extra) -> PipelineConfig:
    overrides = split_overrides(extra)
    if args.seed is not None:
        overrides["sim.seed"] = args.seed
    return load_config(args.config, overrides)


def _plot_dir(args) -> Path | None:
    if args.plot is None:
        return None
    d = Path(args.plot)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _sidecar(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix)


# -- verbs ------------------------------------------------------------------


def cmd_simulate(args, cfg: PipelineConfig) -> int:
    env = load_env(args.env)
    trace = run_simulation(env, cfg)
    trace.metadata.update({"environment": env.name, "seed": cfg.sim.seed, "alphas": list(cfg.noise.alphas)})
    write_trace_csv(trace, args.output)
    xy = trace.positions()
    length = float(np.linalg.norm(np.diff(xy, axis=0), axis=1).sum())
    print(f"{len(trace)} poses, arclength {length:.3f} m -> {args.output}")
    if (d := _plot_dir(args)) is not None:
        plotting.write_svg(plotting.path_svg(xy, title=f"{env.name}: odometric path"), d / "path.svg")
    return EXIT_OK


def cmd_map(args, cfg: PipelineConfig) -> int:
    trace = read_trace_csv(args.trace)
    res = build_map(trace, cfg)
    out = Path(args.output)
    save_map(res.estimate, out)
    report_path = Path(args.report) if args.report else _sidecar(out, ".report.json")
    write_report_json(res.report, report_path)
    if args.graph:
        write_graph(res.graph, args.graph)
    if args.dominant:
        write_dominant_points_csv(res.dominant_points, args.dominant)
    if args.correlation:
        write_matrix_csv(res.correlation, args.correlation)
    rep = res.report
    print(
        f"{len(res.dominant_points)} dominant points, {len(res.pairs)} loop pairs, "
        f"closing pair {res.estimate.closing_pair}, {len(res.estimate.polygon)} map vertices"
    )
    print(
        f"optimization: {rep.iterations} iterations, error {rep.initial_error:.6g} -> "
        f"{rep.final_error:.6g} ({rep.message})"
    )
    print(f"map -> {out}, report -> {report_path}")
    ev = None
    if args.truth:
        ev = evaluate_map(res.estimate.polygon, load_env(args.truth).boundary, cfg.alignment, cfg.correlation)
        print(f"area deviation {100 * ev.delta_a:.2f}%")
    if (d := _plot_dir(args)) is not None:
        plotting.write_svg(
            plotting.path_svg(trace.positions(), res.dominant_points.points, "odometric path, dominant points"),
            d / "path.svg",
        )
        plotting.write_svg(plotting.heatmap_svg(res.correlation, res.pairs), d / "correlation.svg")
        before = poses_to_array(res.initial_graph.vertices)
        after = poses_to_array(res.graph.vertices)
        loops = [(c.source, c.target) for c in res.graph.loop_closures]
        plotting.write_svg(plotting.before_after_svg(before, after, loops), d / "before_after.svg")
        if ev is not None:
            truth = load_env(args.truth).boundary
            aligned = ev.transform.apply_polygon(res.estimate.polygon)
            plotting.write_svg(plotting.overlay_svg(aligned, truth, ev.delta_a), d / "overlay.svg")
    return EXIT_OK


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    estimate = load_polygon(args.map)
    truth = load_env(args.truth).boundary
    ev = evaluate_map(estimate, truth, cfg.alignment, cfg.correlation)
    t = ev.transform
    print(f"area deviation {100 * ev.delta_a:.2f}% (Horn initialization {100 * ev.horn_delta_a:.2f}%)")
    print(f"transform: rotation {t.angle:.6f} rad, translation ({t.tx:.6f}, {t.ty:.6f}) m")
    if args.output:
        write_evaluation_json(ev, args.output)
    if (d := _plot_dir(args)) is not None:
        plotting.write_svg(plotting.overlay_svg(t.apply_polygon(estimate), truth, ev.delta_a), d / "overlay.svg")
    return EXIT_OK


def _alphas(text: str) -> list[float]:
    try:
        vals = [float(a) for a in text.split(",") if a.strip()]
    except ValueError:
        raise ConfigError(f"--alphas: expected comma-separated numbers, got {text!r}") from None
    if not vals:
        raise ConfigError("--alphas is empty")
    for a in vals:
        OdometryNoiseModel.uniform(a)  # validates
    return vals


def cmd_sweep(args, cfg: PipelineConfig) -> int:
    env = load_env(args.env)
    try:
        alphas = _alphas(args.alphas)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.seeds < 1:
        raise ConfigError("--seeds must be >= 1")
    seeds = range(cfg.sim.seed, cfg.sim.seed + args.seeds)
    rows = sweep(env, cfg, alphas, seeds)
    out = Path(args.output)
    with open(out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "seed", "delta_a", "error"])
        for r in rows:
            w.writerow([f"{r.alpha:g}", r.seed, "" if r.delta_a is None else "%.9g" % r.delta_a, r.error])
    summary_path = Path(args.summary) if args.summary else _sidecar(out, "_summary.csv")
    table = summarize(rows)
    with open(summary_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["alpha", "runs", "succeeded", "mean_delta_a", "std_delta_a"])
        for s in table:
            w.writerow([f"{s['alpha']:g}", s["runs"], s["succeeded"], "%.9g" % s["mean"], "%.9g" % s["std"]])
    for s in table:
        print(
            f"alpha {s['alpha']:g}: {s['succeeded']}/{s['runs']} runs, "
            f"mean {100 * s['mean']:.2f}%, std {100 * s['std']:.2f}%"
        )
    print(f"runs -> {out}, summary -> {summary_path}")
    return EXIT_OK


# -- entry point ------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML configuration file")
    common.add_argument("--seed", type=int, help="random seed (overrides sim.seed)")
    common.add_argument("--plot", metavar="DIR", help="write SVG figures into DIR")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = argparse.ArgumentParser(
        prog="odomap",
        description="Boundary maps from wheel odometry of a robot driving a closed boundary.",
        epilog="Any configuration value may be overridden with --section.key VALUE.",
    )
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("simulate", parents=[common], help="simulate an odometry trace")
    s.add_argument("env", help="environment JSON or built-in shape name")
    s.add_argument("-o", "--output", required=True, help="trace CSV to write")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("map", parents=[common], help="estimate a boundary map from a trace")
    m.add_argument("trace", help="trace CSV")
    m.add_argument("-o", "--output", required=True, help="map JSON to write")
    m.add_argument("--report", help="optimization report JSON (default: <map>.report.json)")
    m.add_argument("--graph", help="write the optimized pose graph (text format)")
    m.add_argument("--dominant", help="write dominant points CSV")
    m.add_argument("--correlation", help="write the correlation matrix CSV")
    m.add_argument("--truth", help="environment to score the map against")
    m.set_defaults(func=cmd_map)

    e = sub.add_parser("evaluate", parents=[common], help="area deviation of a map from the truth")
    e.add_argument("map", help="map JSON")
    e.add_argument("truth", help="true environment JSON or built-in shape name")
    e.add_argument("-o", "--output", help="evaluation report JSON")
    e.set_defaults(func=cmd_evaluate)

    w = sub.add_parser("sweep", parents=[common], help="deviation over noise levels and seeds")
    w.add_argument("env", help="environment JSON or built-in shape name")
    w.add_argument("--alphas", default="0.1,0.2,0.3,0.4,0.5", help="comma-separated noise levels")
    w.add_argument("--seeds", type=int, default=10, help="runs per noise level, from --seed upward")
    w.add_argument("-o", "--output", required=True, help="per-run CSV to write")
    w.add_argument("--summary", help="per-alpha summary CSV (default: <output>_summary.csv)")
    w.set_defaults(func=cmd_sweep)
    return p


def _show_warning(message, category, filename, lineno, file=None, line=None):
    log.warning("%s", message)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s: %(message)s",
        stream=sys.stderr,
    )
    old = warnings.showwarning
    warnings.showwarning = _show_warning
    try:
        cfg = _config(args, extra)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        msg = f"{exc.filename}: {exc.strerror}" if isinstance(exc, OSError) and exc.strerror else str(exc)
        print(f"data error: {msg}", file=sys.stderr)
        return EXIT_DATA
    except (PipelineError, MapError, OptimizationError, MatchError) as exc:
        print(f"pipeline failure: {exc}", file=sys.stderr)
        return EXIT_PIPELINE
    finally:
        warnings.showwarning = old


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
