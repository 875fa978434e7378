#!/usr/bin/env python3
"""Repeated stratified CV comparison on a simulated cohort.

Prints the per-class PR-AUC summary and the wall time. The defaults match the
configuration used by the acceptance runtime check; pass --full for the
full inner search (10 inner folds, 50 penalties), which is much slower.
"""

import argparse
import time

from hiddengenome.evaluation import Cohort, ExperimentConfig, cv_experiment
from hiddengenome.simulate import SimConfig, generate_cohort


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--sim-seed", type=int, default=1)
    ap.add_argument("--repetitions", type=int, default=5)
    ap.add_argument("--methods", nargs="+", default=["multilevel", "recorded"])
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--full", action="store_true")
    args = ap.parse_args()

    sim = generate_cohort(SimConfig(n_train=1200, n_test=300, n_recorded=5000, n_unseen=1000, seed=args.sim_seed))
    cohort = Cohort.from_records(sim.labeled_records(), sim.truth.space)
    inner, n_lambda = (10, 50) if args.full else (5, 20)
    cfg = ExperimentConfig(repetitions=args.repetitions, folds=5, inner_folds=inner, n_lambda=n_lambda,
                           seed=args.seed, methods=tuple(args.methods), n_jobs=args.threads)
    start = time.perf_counter()
    report = cv_experiment(cohort, cfg)
    print(report.summary_tsv(), end="")
    print(f"# wall time {time.perf_counter() - start:.1f} s")


if __name__ == "__main__":
    main()
