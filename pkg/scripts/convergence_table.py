"""Refinement study over the three benchmark mesh families.

Defaults reproduce the headline table (8 base divisions, four levels,
tau = 0.001, T = 2), which takes about half a minute.  Pass smaller
values for a quick look, e.g.

    python3 scripts/convergence_table.py --base-divisions 4 --levels 0,1,2 \
        --tau 0.005
"""

import argparse
from pathlib import Path

import numpy as np

from hdivwave.analysis import attach_rates
from hdivwave.driver import PlaneWave, convergence_study, write_convergence_csv
from hdivwave.mesh import MeshFamily

FAMILIES = ("structured-triangle", "structured-quad", "hybrid")


def parse_args():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--base-divisions", type=int, default=8)
    p.add_argument("--levels", default="0,1,2,3",
                   help="comma-separated refinement levels")
    p.add_argument("--tau", default="0.001")
    p.add_argument("--T", type=float, default=2.0)
    p.add_argument("--out-dir", type=Path, default=Path("results"))
    return p.parse_args()


def main():
    args = parse_args()
    levels = [int(s) for s in args.levels.split(",")]
    tau = args.tau if args.tau == "auto" else float(args.tau)
    args.out_dir.mkdir(parents=True, exist_ok=True)

    for kind in FAMILIES:
        fam = MeshFamily(kind, base_divisions=args.base_divisions)
        reports = attach_rates(
            convergence_study(fam, levels, PlaneWave(), tau, args.T))
        write_convergence_csv(reports, args.out_dir / f"convergence_{kind}.csv")

        print(f"\n{kind}")
        print(f"{'h':>10} {'energy_err':>12} {'eoc':>6} "
              f"{'discrete_err':>12} {'eoc':>6}")
        for r in reports:
            ee = "" if r.eoc_energy is None else f"{r.eoc_energy:6.2f}"
            ed = "" if r.eoc_discrete is None else f"{r.eoc_discrete:6.2f}"
            print(f"{r.h:10.5f} {r.energy_error:12.6f} {ee:>6} "
                  f"{r.discrete_error:12.6f} {ed:>6}")
        rates_e = [r.eoc_energy for r in reports[1:]]
        rates_d = [r.eoc_discrete for r in reports[1:]]
        if rates_e:
            print(f"{'mean':>10} {'':>12} {np.mean(rates_e):6.2f} "
                  f"{'':>12} {np.mean(rates_d):6.2f}")


if __name__ == "__main__":
    main()
