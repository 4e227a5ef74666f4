"""Synthetic nine-experiment ensemble: per-experiment Gibbs posteriors and their consensus.

Run with ``python3 demos/ensemble.py [JOBS]``. Prints the selected loss
scales, the subset intervals for each parameter and the consensus intervals
under both scaling policies.
"""

import sys

from gibbscal.checks import narrower_subsets
from gibbscal.experiments.ensemble import run_ensemble_demo


def fmt(iv, i):
    return f"({iv['lo'][i]:8.3f}, {iv['hi'][i]:8.3f})"


def main(jobs=1):
    r = run_ensemble_demo(n_jobs=int(jobs))
    names = r["names"]
    print(f"true parameters: {dict(zip(names, r['theta_star']))}")
    for m in ("bootstrap", "ess"):
        print(f"\nloss scale by {m}")
        for e in r["experiments"]:
            iv = e["posterior"][m]["interval"]
            print(f"  {e['id']:5s} w = {e['scales'][m]:.3f}  " + "  ".join(f"{n} {fmt(iv, i)}" for i, n in enumerate(names)))
        for scaling in ("within", "across"):
            iv = r["consensus"][m][scaling]["interval"]
            print(f"  consensus ({scaling:6s})  " + "  ".join(f"{n} {fmt(iv, i)}" for i, n in enumerate(names)))
        k, total = narrower_subsets(r)[m]
        print(f"  across consensus narrower than {k}/{total} subset intervals")


if __name__ == "__main__":
    main(*sys.argv[1:])
