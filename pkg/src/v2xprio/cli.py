"""Command-line entry point: ``run``, ``sweep``, ``calibrate`` and helpers.

Exit codes: 0 success, 1 runtime failure, 2 invalid input. Settings resolve
as command-line flag > config file > built-in default. ``V2XPRIO_OUT_DIR``
replaces the default output directory when ``--out`` is not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from datetime import datetime, timezone
from functools import partial
from pathlib import Path

from . import __version__
from .config import ConfigError, ScenarioConfig, build_config, config_schema, load_config_file
from .distraction import fit_sigma, tail_probability
from .output import (
    cdf_csv,
    summary_json,
    write_cdf_csv,
    write_records_csv,
    write_summary_json,
    write_sweep_csv,
    write_trace_csv,
)
from .roadnet import build_default_map
from .simcore import Simulation, SweepError, latency_cdf, run_sweep

OUT_DIR_ENV = "V2XPRIO_OUT_DIR"
EXIT_OK, EXIT_RUNTIME, EXIT_INVALID = 0, 1, 2
CALIBRATION_THETAS = (2.0, 4.0, 8.0)


class InputError(Exception):
    pass


def _out_dir(args, default: str) -> Path:
    return Path(args.out or os.environ.get(OUT_DIR_ENV) or default)


def _file_layer(args) -> dict:
    layer: dict = {}
    if getattr(args, "manifest", None):
        doc = load_config_file(args.manifest)
        if "config" not in doc:
            raise ConfigError([(str(args.manifest), "manifest has no 'config' entry")])
        layer = doc["config"]
    if args.config:
        layer = {**layer, **load_config_file(args.config)}
    return layer


def _flag_layer(args) -> dict:
    mapping = {
        "theta": "theta",
        "sigma": "sigma",
        "vehicles": "vehicle_count",
        "seed": "seed",
        "duration": "sim_duration_s",
    }
    layer = {key: getattr(args, flag) for flag, key in mapping.items() if getattr(args, flag, None) is not None}
    if getattr(args, "static", False):
        layer["static"] = True
    return layer


def resolve_config(args) -> ScenarioConfig:
    return build_config(_file_layer(args), _flag_layer(args))


def write_manifest(out: Path, cfg: ScenarioConfig, seeds: list[int], command: str, **extra) -> Path:
    out.mkdir(parents=True, exist_ok=True)
    doc = {
        "tool": "v2xprio",
        "version": __version__,
        "command": command,
        "config": cfg.model_dump(mode="json"),
        "seeds": seeds,
        "output_dir": str(out),
        "started_at": datetime.now(timezone.utc).isoformat(),
        **extra,
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")
    return path


def write_run_outputs(out: Path, table, summary: dict, bin_width_ms: float, records: bool = True) -> None:
    out.mkdir(parents=True, exist_ok=True)
    if records:
        write_records_csv(out / "records.csv", table)
    write_summary_json(out / "summary.json", summary)
    for label, name in ((None, "cdf.csv"), ("High", "cdf_high.csv"), ("Normal", "cdf_normal.csv")):
        try:
            bins = latency_cdf(table, label, bin_width_ms)
        except ValueError:
            continue  # class has no deliveries
        write_cdf_csv(out / name, bins)


def cmd_run(args) -> int:
    cfg = resolve_config(args)
    out = _out_dir(args, "results/run")
    write_manifest(out, cfg, [cfg.seed], "run", bin_width_ms=args.bin_width)
    trace = [] if args.trace else None
    table, summary = Simulation(cfg, trace=trace).run()
    write_run_outputs(out, table, summary, args.bin_width)
    if trace is not None:
        write_trace_csv(out / "mac_trace.csv", trace)
    print(f"theta={cfg.theta:g} sigma={cfg.sigma:g} seed={cfg.seed}: "
          f"High fraction {summary['realized_high_fraction']:.4f} "
          f"(expected {summary['expected_high_fraction']:.4f}), "
          f"delivery ratio {summary['delivery_ratio']}, High p50 {summary['p50_high_ms']} ms")
    print(f"outputs in {out}")
    return EXIT_OK


def parse_thetas(text: str) -> list[float]:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise InputError("--thetas: need at least one threshold")
    try:
        thetas = [float(p) for p in parts]
    except ValueError:
        raise InputError(f"--thetas: not a comma-separated list of numbers: {text!r}") from None
    for t in thetas:
        if not t >= 0:
            raise InputError(f"--thetas: thresholds must be non-negative, got {t}")
    return thetas


def _sweep_sink(out: Path, bin_width_ms: float, records: bool, cfg, table, summary) -> None:
    write_run_outputs(out / f"theta_{cfg.theta:g}_seed_{cfg.seed}", table, summary, bin_width_ms, records)


def cmd_sweep(args) -> int:
    thetas = parse_thetas(args.thetas)
    if args.seeds < 1:
        raise InputError("--seeds must be at least 1")
    base = resolve_config(args)
    seeds = [args.seed_base + i for i in range(args.seeds)]
    out = _out_dir(args, "results/sweep")
    write_manifest(out, base, seeds, "sweep", thetas=thetas, bin_width_ms=args.bin_width)
    sink = partial(_sweep_sink, out, args.bin_width, args.write_records)
    result = run_sweep(base, thetas, seeds, workers=args.workers, sink=sink)
    write_sweep_csv(out / "sweep.csv", result.rows)
    agg = {f"{t:g}": v for t, v in result.aggregates.items()}
    (out / "aggregate.json").write_text(json.dumps(agg, indent=2, sort_keys=True) + "\n")
    for t, v in result.aggregates.items():
        med = v["median_p50_high_ms"]
        print(f"theta={t:g}: median High p50 = {'n/a' if med is None else f'{med:.3f} ms'} "
              f"({v['seeds_with_high']}/{v['seeds']} seeds with High deliveries)")
    print(f"outputs in {out}")
    return EXIT_OK


def read_scores(path: Path) -> list[float]:
    values = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        text = line.strip()
        if not text or text.startswith("#"):
            continue
        try:
            x = float(text)
        except ValueError:
            raise InputError(f"{path}:{lineno}: not a number: {text!r}") from None
        if not x >= 0 or x == float("inf"):
            raise InputError(f"{path}:{lineno}: distraction score must be finite and >= 0, got {text}")
        values.append(x)
    if not values:
        raise InputError(f"{path}: no distraction scores found")
    return values


def format_probability(p: float) -> str:
    return f"{p:.4f}" if p >= 1e-3 else f"{p:.4e}"


def cmd_calibrate(args) -> int:
    scores = read_scores(args.scores)
    try:
        params = fit_sigma(scores)
    except ValueError as exc:
        raise InputError(f"{args.scores}: {exc}") from None
    print(f"samples: {len(scores)}")
    print(f"fitted sigma: {params.sigma:.6f}")
    print("theta  P(X >= theta)")
    for theta in CALIBRATION_THETAS:
        print(f"{theta:<6g} {format_probability(tail_probability(theta, params))}")
    return EXIT_OK


def cmd_schema(args) -> int:
    print(json.dumps(config_schema(), indent=2, sort_keys=True))
    return EXIT_OK


def cmd_export_map(args) -> int:
    cfg = resolve_config(args)
    text = build_default_map(cfg.map_bounds_m, cfg.junction_count).to_json()
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    return EXIT_OK


def _scenario_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file (see the 'schema' command)")
    p.add_argument("--sigma", type=float, help="Rayleigh distraction scale")
    p.add_argument("--vehicles", type=int, help="number of vehicles")
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--static", action="store_true", help="freeze vehicle positions")
    p.add_argument("--out", help=f"output directory (default from ${OUT_DIR_ENV})")
    p.add_argument("--bin-width", type=float, default=1.0, help="CDF bin width in ms")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="v2xprio", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario")
    _scenario_flags(p)
    p.add_argument("--manifest", help="re-run from a manifest.json written by an earlier run")
    p.add_argument("--theta", type=float, help="distraction threshold for High priority")
    p.add_argument("--seed", type=int, help="run seed")
    p.add_argument("--trace", action="store_true", help="also write mac_trace.csv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("sweep", help="run every (theta, seed) combination")
    _scenario_flags(p)
    p.add_argument("--thetas", default="2,4,8", help="comma-separated thresholds")
    p.add_argument("--seeds", type=int, default=10, help="number of seeds")
    p.add_argument("--seed-base", type=int, default=0, help="first seed")
    p.add_argument("--workers", type=int, default=1, help="parallel worker processes")
    p.add_argument("--write-records", action="store_true", help="write records.csv for every run")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("calibrate", help="fit sigma to distraction scores")
    p.add_argument("--scores", required=True, help="file with one non-negative score per line")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("schema", help="print the config file JSON schema")
    p.set_defaults(func=cmd_schema)

    p = sub.add_parser("export-map", help="write the road graph as JSON")
    p.add_argument("--config")
    p.add_argument("--out")
    p.set_defaults(func=cmd_export_map)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for loc, msg in exc.errors:
            print(f"error: {loc}: {msg}", file=sys.stderr)
        return EXIT_INVALID
    except (InputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SweepError as exc:
        if isinstance(exc.cause, ConfigError):
            print(f"error: theta={exc.theta} seed={exc.seed}: {exc.cause}", file=sys.stderr)
            return EXIT_INVALID
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
