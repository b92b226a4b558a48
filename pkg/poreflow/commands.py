from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .config import SimConfig, config_from_mapping, save_config
from .errors import ConfigError, OutputError, PoreflowError
from .output import Provenance, read_snapshot, snapshot_name, write_series, write_snapshot
from .solver import SeriesRow, SystemState, run
from .studies import STUDY_KINDS, run_study, run_validation
from .utils import parse_value

logger = logging.getLogger("poreflow.commands")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="simulate", description="Open lipid membrane with a free edge in Stokes flow")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--quiet", action="store_true", help="only log warnings and errors")
    sub = parser.add_subparsers(dest="verb", required=True)

    def with_config(command: argparse.ArgumentParser) -> None:
        command.add_argument("config_path", nargs="?", help="JSON configuration file")
        command.add_argument("--config", dest="config_flag", help="JSON configuration file")
        command.add_argument("--output-dir", help="directory for snapshots and tables")
        command.add_argument("--snapshot-every", type=int, help="write every k-th step")
        command.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one config key")
        command.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)

    with_config(sub.add_parser("run", help="simulate one configuration"))
    study = sub.add_parser("study", help="mesh, width, viscosity or boundary-layer sweep")
    with_config(study)
    study.add_argument("--kind", choices=STUDY_KINDS, default="convergence")
    study.add_argument("--grid", help="comma separated sweep values")
    validate = sub.add_parser("validate", help="run the oracle suite")
    validate.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    info = sub.add_parser("info", help="describe a snapshot or series file")
    info.add_argument("path")
    info.add_argument("--quiet", action="store_true", default=argparse.SUPPRESS, help=argparse.SUPPRESS)
    return parser


def configure_logging(quiet: bool) -> None:
    level = "WARNING" if quiet else os.getenv("POREFLOW_LOG_LEVEL", "INFO").upper()
    logging.basicConfig(
        level=getattr(logging, level, logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def apply_overrides(values: dict[str, Any], overrides: Sequence[str]) -> dict[str, Any]:
    defaults = SimConfig().to_dict()
    out = dict(values)
    for item in overrides:
        key, sep, raw = item.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"override '{item}' is not of the form key=value", key="set")
        if key not in defaults:
            raise ConfigError("unknown configuration key", key=key)
        try:
            out[key] = parse_value(defaults[key], raw.strip())
        except ValueError as exc:
            raise ConfigError(f"cannot parse '{raw}': {exc}", key=key) from exc
    return out


def load_config(args: argparse.Namespace) -> SimConfig:
    path = args.config_flag or args.config_path
    values: dict[str, Any] = {}
    text = None
    if path:
        try:
            text = Path(path).read_text(encoding="utf-8")
            values = json.loads(text)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc.msg}", line=exc.lineno) from exc
        if not isinstance(values, dict):
            raise ConfigError(f"{path} must contain a JSON object")
    values = apply_overrides(values, args.set)
    output_dir = args.output_dir or os.getenv("POREFLOW_OUTPUT_DIR")
    if output_dir:
        values["output_dir"] = output_dir
    if args.snapshot_every is not None:
        values["snapshot_every"] = args.snapshot_every
    return config_from_mapping(values, text)


def command_run(config: SimConfig) -> int:
    out = Path(config.output_dir)
    provenance = Provenance.from_config(config)
    try:
        out.mkdir(parents=True, exist_ok=True)
        save_config(config, out / "config.json")
    except OSError as exc:
        raise OutputError(f"cannot prepare output directory ({exc.strerror})", path=str(out)) from exc

    def on_snapshot(state: SystemState, row: SeriesRow) -> None:
        write_snapshot(state, out / snapshot_name(state.step), provenance)

    result = run(config, on_snapshot=on_snapshot)
    write_series(result.series, out / "series.tsv", provenance)
    final = result.series[-1]
    print(f"stopped: {result.stop_reason} after {result.steps} steps at t={final.t:.6g}")
    print(f"energy {final.energy.total:.10g}  area {final.area:.10g}  edges {final.hole_radii}")
    if result.energy_increases:
        print(f"warning: energy increased in {result.energy_increases} step(s)", file=sys.stderr)
    if result.failure:
        print(f"error: {result.failure}", file=sys.stderr)
        return 1
    return 0


def command_study(config: SimConfig, kind: str, grid: str | None) -> int:
    values = None
    if grid:
        try:
            values = [float(item) for item in grid.split(",") if item.strip()]
        except ValueError as exc:
            raise ConfigError(f"cannot parse grid '{grid}'", key="grid") from exc
    path = run_study(kind, config, grid=values)
    print(f"wrote {path}")
    return 0


def command_validate() -> int:
    results = run_validation()
    for result in results:
        mark = "ok  " if result.passed else "FAIL"
        print(f"{mark} {result.name:<20} {result.value:.3e} (threshold {result.threshold:.3e}) {result.detail}")
    return 0 if all(result.passed for result in results) else 1


def command_info(path: str) -> int:
    table = read_snapshot(path)
    for key, value in table.header.items():
        if key != "columns":
            print(f"{key}: {value}")
    print(f"columns: {', '.join(table.columns)}")
    print(f"rows: {len(table.data)}")
    if "X_r" in table.columns:
        xr = table.column("X_r")
        speed = np.hypot(table.column("U_r"), table.column("U_z"))
        print(f"X_r at ends: {xr[0]:.10g}, {xr[-1]:.10g}")
        print(f"max |U|: {speed.max():.6g}")
    return 0


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(getattr(args, "quiet", False))
    try:
        if args.verb == "run":
            return command_run(load_config(args))
        if args.verb == "study":
            return command_study(load_config(args), args.kind, args.grid)
        if args.verb == "validate":
            return command_validate()
        return command_info(args.path)
    except PoreflowError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
