"""
Command-line entry point: ``aqadapt {simulate,ingest,preprocess,run,table}``.

Exit codes: 0 on success, 1 for data or runtime errors, 2 for usage and
parse errors. Every ``run`` writes a manifest that can be fed back with
``--manifest`` to repeat the run bit-identically.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .core import DataError, Dataset, PlausibilityGate, format_timestamp, read_csv, validate_dataset, write_csv
from .experiment import (
    MODELS,
    CellKey,
    ExperimentConfig,
    ExperimentReport,
    RunTrace,
    run_grid,
    table,
)
from .ingest import aggregate_hourly, join_reference, merge_datasets, read_raw_csv, read_reference_csv
from .metrics import METRIC_NAMES, smooth_series
from .models import SnnConfig
from .preprocess import DbscanParams, dbscan_outliers
from .schedule import Mode, enumerate_grid
from .simulate import ScenarioError, default_scenario, generate, read_scenario, write_scenario

log = logging.getLogger("aqadapt")

EXIT_OK, EXIT_ERROR, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or an unparsable config file (exit code 2)."""


# -- config files ------------------------------------------------------------


def _parse_grid(text: str, allow_equal: bool = False) -> tuple[tuple[int, int], ...]:
    text = text.strip()
    if text == "all":
        return tuple(enumerate_grid(allow_equal))
    cells = []
    for part in text.replace(";", ",").split(","):
        part = part.strip()
        if not part:
            continue
        tau, sep, pi = part.partition(":")
        if not sep:
            raise ValueError(f"grid cell {part!r} is not TAU:PI")
        cells.append((int(tau), int(pi)))
    if not cells:
        raise ValueError("empty grid")
    return tuple(cells)


def _parse_modes(text: str) -> tuple[Mode, ...]:
    text = text.strip().lower()
    if text in ("both", "all"):
        return (Mode.REGULAR, Mode.OPPORTUNISTIC)
    return tuple(Mode(m.strip().upper()) for m in text.split(",") if m.strip())


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("true", "yes", "1", "on"):
        return True
    if low in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.replace(";", ",").split(",") if v.strip())


def _coerce_value(key: str, raw: str, allow_equal: bool) -> Any:
    if key == "grid":
        return _parse_grid(raw, allow_equal)
    if key == "modes":
        return _parse_modes(raw)
    if key == "models":
        return tuple(m.strip() for m in raw.split(",") if m.strip())
    if key in ("offsets", "snn_hidden", "elm_hidden"):
        return _int_list(raw)
    if key.startswith("snn."):
        field = {f.name: f for f in dataclasses.fields(SnnConfig)}[key[4:]]
        kind = field.type
        if "bool" in str(kind):
            return _parse_bool(raw)
        if raw.strip().lower() == "none":
            return None
        return int(raw) if "int" in str(kind) else float(raw)
    field = {f.name: f for f in dataclasses.fields(ExperimentConfig)}[key]
    kind = str(field.type)
    if "bool" in kind:
        return _parse_bool(raw)
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw.strip()


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``key = value`` lines; ``#`` starts a comment. Returns raw strings."""
    known = {f.name for f in dataclasses.fields(ExperimentConfig)} - {"snn"}
    known |= {f"snn.{f.name}" for f in dataclasses.fields(SnnConfig)}
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise UsageError(f"config line {lineno}: expected 'key = value'")
        if key not in known:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        out[key] = value.strip()
    return out


def build_config(raw: dict[str, str]) -> ExperimentConfig:
    """Resolve raw key/value strings (config file merged with CLI overrides)."""
    allow_equal = _parse_bool(raw.get("allow_pi_eq_tau", "false"))
    top: dict[str, Any] = {}
    snn: dict[str, Any] = {}
    for key, value in raw.items():
        try:
            v = _coerce_value(key, value, allow_equal)
        except (ValueError, KeyError) as exc:
            raise UsageError(f"bad value for {key}: {exc}") from None
        if key.startswith("snn."):
            snn[key[4:]] = v
        else:
            top[key] = v
    if snn:
        top["snn"] = SnnConfig(**snn)
    try:
        return ExperimentConfig(**top)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def config_to_text(config: ExperimentConfig) -> str:
    d = config.as_dict()
    lines = []
    for key, value in d.items():
        if key == "snn":
            lines += [f"snn.{k} = {v}" for k, v in value.items()]
        elif key == "grid":
            lines.append(f"grid = {', '.join(f'{t}:{p}' for t, p in value)}")
        elif isinstance(value, list):
            lines.append(f"{key} = {', '.join(map(str, value))}")
        else:
            lines.append(f"{key} = {value}")
    return "\n".join(lines) + "\n"


# -- helpers -----------------------------------------------------------------


def sha256_file(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _now() -> str:
    return dt.datetime.now(dt.timezone.utc).isoformat(timespec="seconds")


def _report_validation(d: Dataset) -> bool:
    problems = validate_dataset(d, PlausibilityGate())
    for v in problems[:50]:
        print(f"invalid record {v.index}: {v.rule}: {v.detail}", file=sys.stderr)
    if len(problems) > 50:
        print(f"... {len(problems) - 50} more violations", file=sys.stderr)
    return not problems


class SeriesWriter:
    """Collects per-run traces into smoothed error series (and raw traces)."""

    def __init__(self, out_dir: Path, window: int, write_traces: bool, write_timings: bool):
        self.series_dir = out_dir / "series"
        self.trace_dir = out_dir / "traces" if write_traces else None
        self.timings = [] if write_timings else None
        self.window = window
        self.acc: dict[tuple[CellKey, int], list] = {}

    def __call__(self, trace: RunTrace) -> None:
        err = np.abs(trace.y_pred - trace.y_true)
        key = (trace.cell, trace.offset)
        slot = self.acc.setdefault(key, [trace.timestamps, np.zeros(len(err)), 0])
        slot[1] += err
        slot[2] += 1
        if self.trace_dir is not None:
            self.trace_dir.mkdir(parents=True, exist_ok=True)
            lines = ["timestamp,y_true,y_pred,generation,scored"]
            for i in range(len(err)):
                lines.append(
                    f"{format_timestamp(trace.timestamps[i])},{float(trace.y_true[i])!r},{float(trace.y_pred[i])!r},"
                    f"{trace.generation[i]},{int(trace.scored[i])}"
                )
            name = f"{trace.cell.label()}_o{trace.offset}_r{trace.repeat}.csv"
            (self.trace_dir / name).write_text("\n".join(lines) + "\n")
        if self.timings is not None:
            for a in trace.adaptations:
                self.timings.append(
                    (trace.cell.label(), trace.offset, trace.repeat, a.generation, a.train_size, a.wall_time)
                )

    def finish(self, out_dir: Path) -> None:
        self.series_dir.mkdir(parents=True, exist_ok=True)
        for (cell, offset), (ts, total, n) in sorted(self.acc.items(), key=lambda kv: (kv[0][0].sort_key(), kv[0][1])):
            smooth = smooth_series(total / n, self.window)
            lines = ["timestamp,abs_error_smoothed"]
            lines += [f"{format_timestamp(t)},{float(v)!r}" for t, v in zip(ts, smooth)]
            (self.series_dir / f"{cell.label()}_o{offset}.csv").write_text("\n".join(lines) + "\n")
        if self.timings is not None:
            lines = ["cell,offset,repeat,generation,train_size,wall_time_s"]
            lines += [",".join(map(str, row)) for row in self.timings]
            (out_dir / "timings.csv").write_text("\n".join(lines) + "\n")


# -- commands ----------------------------------------------------------------


def cmd_simulate(args: argparse.Namespace) -> int:
    base = default_scenario(args.duration)
    s = read_scenario(args.scenario, base) if args.scenario else base
    if args.seed is not None:
        s = dataclasses.replace(s, seed=args.seed)
    result = generate(s)
    write_csv(result.dataset, args.out)
    if args.truth_out:
        result.write_truth_csv(args.truth_out)
    if args.scenario_out:
        write_scenario(s, args.scenario_out)
    log.info("wrote %d records to %s", len(result.dataset), args.out)
    return EXIT_OK


def cmd_ingest(args: argparse.Namespace) -> int:
    merged = None
    for path in args.raw:
        d = aggregate_hourly(read_raw_csv(path), min_coverage=args.min_coverage, meta={"source": "ingest"})
        merged = d if merged is None else merge_datasets(merged, d)
    if args.reference:
        joined = join_reference(merged, read_reference_csv(args.reference))
        merged = joined.dataset
        if joined.ignored:
            print(f"{joined.ignored} reference rows had no matching sensor hour", file=sys.stderr)
    write_csv(merged, args.out)
    log.info("wrote %d hourly records to %s", len(merged), args.out)
    return EXIT_OK


def cmd_preprocess(args: argparse.Namespace) -> int:
    d = read_csv(args.data)
    params = DbscanParams(eps=args.dbscan_eps, min_pts=args.dbscan_minpts, space=args.dbscan_space)
    out = dbscan_outliers(d, params)
    write_csv(out, args.out)
    n_out = int(np.count_nonzero(out.flags & 1)) - int(np.count_nonzero(d.flags & 1))
    log.info("flagged %d outliers out of %d records", n_out, len(d))
    return EXIT_OK


def _overrides(args: argparse.Namespace) -> dict[str, str]:
    o: dict[str, str] = {}
    if args.grid:
        o["grid"] = args.grid
    if args.models:
        o["models"] = args.models
    if args.mode:
        o["modes"] = args.mode
    if args.seed is not None:
        o["master_seed"] = str(args.seed)
    if args.offsets:
        o["offsets"] = args.offsets
    if args.repeats is not None:
        o["init_repeats"] = str(args.repeats)
    if args.allow_pi_eq_tau:
        o["allow_pi_eq_tau"] = "true"
    if args.clock:
        o["clock"] = args.clock
    for kv in args.set or []:
        key, sep, value = kv.partition("=")
        if not sep:
            raise UsageError(f"--set expects key=value, got {kv!r}")
        o[key.strip()] = value.strip()
    return o


def cmd_run(args: argparse.Namespace) -> int:
    started = _now()
    if args.manifest:
        if args.config or _overrides(args):
            raise UsageError("--manifest replays a run exactly; drop --config and overrides")
        manifest = json.loads(Path(args.manifest).read_text())
        config = ExperimentConfig.from_dict(manifest["config"])
        want = manifest["inputs"]["data"]["sha256"]
        if sha256_file(args.data) != want:
            print(f"data digest differs from manifest ({want[:12]}...)", file=sys.stderr)
            return EXIT_ERROR
    else:
        raw = parse_config_text(Path(args.config).read_text()) if args.config else {}
        raw.update(_overrides(args))
        unknown = [k for k in raw if k not in {f.name for f in dataclasses.fields(ExperimentConfig)} and not k.startswith("snn.")]
        if unknown:
            raise UsageError(f"unknown setting(s) {unknown}")
        config = build_config(raw)

    data = read_csv(args.data)
    if not _report_validation(data):
        return EXIT_ERROR
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    writer = SeriesWriter(out, args.smooth_window, args.traces, args.timings)
    report = run_grid(data, config, workers=args.workers, on_trace=writer)
    report.to_csv(out / "report.csv")
    report.write_json(out / "report.json")
    writer.finish(out)
    (out / "config.txt").write_text(config_to_text(config))

    inputs = {"data": {"path": str(args.data), "sha256": sha256_file(args.data)}}
    if args.config:
        inputs["config"] = {"path": str(args.config), "sha256": sha256_file(args.config)}
    manifest = {
        "tool": "aqadapt",
        "version": __version__,
        "command": "run",
        "config": config.as_dict(),
        "master_seed": config.master_seed,
        "inputs": inputs,
        "outputs": {name: sha256_file(out / name) for name in ("report.csv", "report.json")},
        "workers": args.workers,
        "started": started,
        "finished": _now(),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    log.info("%d cells written to %s", len(report.cells), out)
    return EXIT_OK


def format_table(rows: list[list[str]]) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in rows)


def cmd_table(args: argparse.Namespace) -> int:
    report = ExperimentReport.from_json(json.loads(Path(args.report).read_text()))
    if args.model not in MODELS:
        raise UsageError(f"unknown model {args.model!r}; choose from {sorted(MODELS)}")
    try:
        mode = Mode(args.mode.upper())
    except ValueError:
        raise UsageError(f"unknown mode {args.mode!r}") from None
    try:
        rows = table(report, args.model, mode, args.metric)
    except KeyError as exc:
        print(f"error: {exc.args[0]}", file=sys.stderr)
        return EXIT_ERROR
    print(format_table(rows))
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="aqadapt", description="Field calibration and drift adaptation experiments.")
    p.add_argument("--version", action="version", version=f"aqadapt {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic co-location dataset")
    s.add_argument("--scenario", help="key = value scenario file (defaults fill the rest)")
    s.add_argument("--duration", type=int, default=13140, help="hours when no scenario overrides it")
    s.add_argument("--seed", type=int)
    s.add_argument("--out", required=True)
    s.add_argument("--truth-out")
    s.add_argument("--scenario-out", help="write the fully resolved scenario here")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("ingest", help="aggregate raw sensor CSVs to hourly records")
    s.add_argument("--raw", required=True, action="append", help="raw sample CSV (repeatable)")
    s.add_argument("--reference", help="hourly reference analyzer CSV")
    s.add_argument("--min-coverage", type=float, default=0.75)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_ingest)

    s = sub.add_parser("preprocess", help="flag DBSCAN outliers")
    s.add_argument("--data", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--dbscan-eps", type=float, default=1.0)
    s.add_argument("--dbscan-minpts", type=int, default=8)
    s.add_argument("--dbscan-space", choices=("joint", "features"), default="joint")
    s.set_defaults(func=cmd_preprocess)

    s = sub.add_parser("run", help="run the calibration/adaptation grid")
    s.add_argument("--data", required=True)
    s.add_argument("--out-dir", required=True)
    s.add_argument("--config", help="flat key = value experiment config")
    s.add_argument("--manifest", help="replay the configuration recorded in a manifest.json")
    s.add_argument("--grid", help="'all' or comma-separated TAU:PI cells")
    s.add_argument("--models", help=f"comma-separated subset of {','.join(MODELS)}")
    s.add_argument("--mode", help="regular, opportunistic or both")
    s.add_argument("--seed", type=int, help="master seed")
    s.add_argument("--offsets", help="comma-separated start offsets (usable samples)")
    s.add_argument("--repeats", type=int, help="initial-model repeats per offset")
    s.add_argument("--clock", choices=("samples", "wallclock"))
    s.add_argument("--allow-pi-eq-tau", action="store_true")
    s.add_argument("--set", action="append", metavar="KEY=VALUE", help="any other config key")
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--smooth-window", type=int, default=96)
    s.add_argument("--traces", action="store_true", help="write per-run prediction traces")
    s.add_argument("--timings", action="store_true", help="write adaptation wall times (not reproducible)")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("table", help="print a P x T grid from report.json")
    s.add_argument("--report", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--mode", default="regular")
    s.add_argument("--metric", default="mae", choices=METRIC_NAMES)
    s.set_defaults(func=cmd_table)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ScenarioError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, ValueError, ArithmeticError, OSError, RuntimeError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
