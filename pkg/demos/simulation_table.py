"""Coverage table for loss-scale selection under GP discrepancy.

Run with ``python3 demos/simulation_table.py [N_MC] [JOBS]``. The default
100 Monte-Carlo iterations per row take about half an hour on one core.
"""

import sys

from gibbscal.experiments.simstudy import run_table, write_table_csv


def main(n_mc=100, jobs=1):
    rows = run_table(n_mc=int(n_mc), seed=0, n_jobs=int(jobs))
    print(f"{'method':20s} {'autocorr':>8s} {'E(w)':>8s} {'coverage':>9s} {'se':>6s}")
    for r in rows:
        print(f"{r['method']:20s} {r['autocorr']:8.1f} {r['E_w']:8.3f} {r['coverage']:9.2f} {r['coverage_se']:6.2f}")
    write_table_csv(rows, "simulation_table.csv")


if __name__ == "__main__":
    main(*sys.argv[1:])
