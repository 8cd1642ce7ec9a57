"""Command-line entry point: run scenarios, dump eigen-tables, rebuild reports."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .basis import set_workers
from .diagnostics import RunRecord
from .linear_core import eigen_table_csv
from .runner import ConfigError, InstabilityError, ScenarioConfig, emit_report, run_scenario

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INSTABILITY = 3
EXIT_IO = 4


def _load_config(args) -> ScenarioConfig:
    cfg = ScenarioConfig.load(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out_dir is not None:
        overrides["out_dir"] = args.out_dir
    return replace(cfg, **overrides) if overrides else cfg


def cmd_run(args) -> int:
    cfg = _load_config(args)
    try:
        record = run_scenario(cfg)
    except InstabilityError as exc:
        logging.error("%s", exc)
        if exc.record is not None and exc.record.times:
            exc.record.metadata["config"] = cfg.to_dict()
            emit_report(exc.record, Path(cfg.out_dir) / "unstable", plot=False)
        return EXIT_INSTABILITY
    paths = emit_report(record, cfg.out_dir, plot=cfg.plot)
    for name, fit in record.fits.items():
        if "slope" in fit:
            print(f"{name}: slope {fit['slope']:.4f} +- {fit['stderr']:.1e} (predicted {fit['predicted']:.4f})")
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def cmd_eigen_table(args) -> int:
    cfg = _load_config(args)
    text = eigen_table_csv(cfg.truncation(), cfg.alpha)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "eigen_table.csv"
    path.write_text(text)
    print(f"wrote {path}")
    return EXIT_OK


def cmd_report(args) -> int:
    try:
        record = RunRecord.from_json(Path(args.record))
    except json.JSONDecodeError as exc:
        raise ConfigError(f"cannot parse record: {exc}") from exc
    out = args.out_dir or str(Path(args.record).parent)
    plot = record.metadata.get("config", {}).get("plot", True)
    paths = emit_report(record, out, plot=plot)
    print(f"wrote {', '.join(str(p) for p in paths.values())}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stratbous", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--out-dir", default=None)

    r = sub.add_parser("run", help="run a scenario from a YAML config")
    r.add_argument("config")
    common(r)
    r.set_defaults(func=cmd_run)
    e = sub.add_parser("eigen-table", help="write the per-mode eigen-table CSV")
    e.add_argument("config")
    common(e)
    e.set_defaults(func=cmd_eigen_table)
    rep = sub.add_parser("report", help="regenerate CSV and plot from a record JSON")
    rep.add_argument("record")
    common(rep)
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads:
        set_workers(args.threads)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG if args.command != "report" else EXIT_IO
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
