#!/usr/bin/env python3
"""Effect of the slab cap dt_max on the Barenblatt-Pattle error at a fixed fine mesh."""

import argparse
import logging
import os

from pmev.driver import SimulationConfig, convergence_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=float, default=2.0)
    ap.add_argument("--n", type=int, default=8000)
    ap.add_argument("--dt", default="4e-3,2e-3,1e-3,5e-4,2.5e-4")
    ap.add_argument("--out", default="runs/time_study")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    os.makedirs(args.out, exist_ok=True)
    dts = [float(s) for s in args.dt.split(",")]
    table = convergence_study(SimulationConfig(example="bp", m=args.m), [args.n], dts)
    print(table.format())
    print("(slopes above are against dt_max)")
    table.write_csv(os.path.join(args.out, "time_study.csv"))


if __name__ == "__main__":
    main()
