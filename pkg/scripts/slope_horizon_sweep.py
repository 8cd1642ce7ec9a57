"""Fitted linear-flow slopes of the lower-bound data versus the horizon T.

Shows how long the modal transient lasts before the algebraic rate appears:

    python scripts/slope_horizon_sweep.py --alpha 1 --horizons 20 200 2e3 2e5 1e7
"""

import argparse

from stratbous.runner import ScenarioConfig, run_scenario


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--alpha", type=int, default=0)
    ap.add_argument("--m", type=int, default=None)
    ap.add_argument("--Q", type=int, default=65536)
    ap.add_argument("--horizons", type=float, nargs="+", default=[20, 200, 2000])
    args = ap.parse_args()
    m = args.m if args.m is not None else (4 if args.alpha == 0 else 5)
    print(f"alpha={args.alpha} m={m} Q={args.Q}")
    print(f"{'T':>10} {'theta_bar L2':>14} {'v_d L2':>10} {'predicted':>10}")
    for T in args.horizons:
        cfg = ScenarioConfig.from_dict(dict(
            scenario="linear_sharpness", d=2, alpha=args.alpha, m=m, N_h=1, Q=args.Q, T_final=T,
            initial={"generator": "sharpness", "epsilon": 0.1}, s_values=[0.0], plot=False,
        ))
        rec = run_scenario(cfg)
        th, vd = rec.fits["theta_bar:hom_s0"], rec.fits["v_d:hom_s0"]
        print(f"{T:10.3g} {th['slope']:14.4f} {vd['slope']:10.4f} {th['predicted']:10.4f}")


if __name__ == "__main__":
    main()
