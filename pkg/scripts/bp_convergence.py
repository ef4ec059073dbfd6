#!/usr/bin/env python3
"""Barenblatt-Pattle mesh-refinement study for several exponents m.

Prints one table per m (errors at T = (t0 + 0.1) / 2 and least-squares
slopes against h = N^(-1/2)) and writes ``convergence_m<m>.csv``.
"""

import argparse
import logging
import os

from pmev.driver import SimulationConfig, convergence_study


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", default="2,5", help="comma-separated exponents")
    ap.add_argument("--n", default="500,2000,8000", help="comma-separated element counts")
    ap.add_argument("--dt-max", type=float, default=1e-4)
    ap.add_argument("--out", default="runs/bp_convergence")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    os.makedirs(args.out, exist_ok=True)
    n_list = [int(s) for s in args.n.split(",")]
    for m in (float(s) for s in args.m.split(",")):
        table = convergence_study(SimulationConfig(example="bp", m=m, dt_max=args.dt_max), n_list)
        print(f"\nm = {m:g}")
        print(table.format())
        table.write_csv(os.path.join(args.out, f"convergence_m{m:g}.csv"))


if __name__ == "__main__":
    main()
