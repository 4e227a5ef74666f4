"""How often the within-experiment consensus interval contains the truth when every subset interval does.

Runs 20 seeded ensembles (effective-sample-size loss scales, which need no
bootstrap and keep the run short) and reports, for each parameter, the
number of ensembles in which all subset 90% intervals contain the true
value and, among those, how many consensus intervals also contain it. This
is an empirical check, not a guarantee.

Run with ``python3 demos/ensemble_containment.py [N_ENSEMBLES] [JOBS]``.
"""

import sys
from dataclasses import replace

from gibbscal.experiments.ensemble import SyntheticEnsembleSpec, run_ensemble_demo


def main(n=20, jobs=1):
    base = SyntheticEnsembleSpec(methods=("ess",))
    d = len(base.theta_star)
    all_in = [0] * d
    both_in = [0] * d
    for seed in range(int(n)):
        r = run_ensemble_demo(replace(base, seed=1000 + seed), n_jobs=int(jobs))
        cons = r["consensus"]["ess"]["within"]["interval"]
        for i, t in enumerate(r["theta_star"]):
            subsets = [e["posterior"]["ess"]["interval"] for e in r["experiments"]]
            if all(iv["lo"][i] <= t <= iv["hi"][i] for iv in subsets):
                all_in[i] += 1
                both_in[i] += cons["lo"][i] <= t <= cons["hi"][i]
    for i, name in enumerate(r["names"]):
        print(f"{name}: every subset interval contains the truth in {all_in[i]}/{n} ensembles; "
              f"consensus interval also contains it in {both_in[i]}/{all_in[i]}")


if __name__ == "__main__":
    main(*sys.argv[1:])
