"""Run every YAML config in configs/ and print the fitted slopes.

    python scripts/run_all_scenarios.py [--only NAME ...] [--out-root out]
"""

import argparse
import logging
import time
from dataclasses import replace
from pathlib import Path

from stratbous.runner import InstabilityError, ScenarioConfig, emit_report, run_scenario

ROOT = Path(__file__).resolve().parents[1]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--only", nargs="*", default=None, help="config stems to run")
    ap.add_argument("--out-root", default="out")
    ap.add_argument("--no-plot", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s")

    for path in sorted((ROOT / "configs").glob("*.yaml")):
        if args.only and path.stem not in args.only:
            continue
        cfg = ScenarioConfig.load(path)
        cfg = replace(cfg, out_dir=str(Path(args.out_root) / path.stem), plot=not args.no_plot)
        t0 = time.perf_counter()
        try:
            rec = run_scenario(cfg)
        except InstabilityError as exc:
            print(f"{path.stem}: unstable ({exc})")
            continue
        emit_report(rec, cfg.out_dir, plot=cfg.plot)
        print(f"== {path.stem} ({time.perf_counter() - t0:.1f}s)")
        for name, fit in rec.fits.items():
            if "slope" in fit:
                print(f"   {name:28s} slope {fit['slope']:8.4f}  predicted {fit['predicted']:8.4f}")
        for key in ("conservation", "witness", "compare_linear", "sigma"):
            if key in rec.metadata:
                print(f"   {key}: {rec.metadata[key]}")


if __name__ == "__main__":
    main()
