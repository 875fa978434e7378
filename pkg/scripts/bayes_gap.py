#!/usr/bin/env python3
"""Compare a fitted multilevel model with the Bayes rule on simulated data.

With no residual variant effects the true class probabilities are known, so
the Bayes accuracy is an upper reference for any fitted classifier.
"""

import argparse

import numpy as np

from hiddengenome.ingest import build_cohort
from hiddengenome.inference import predict
from hiddengenome.metafeatures import build_meta_design, burden_matrix
from hiddengenome.pipeline import TrainConfig, train
from hiddengenome.simulate import SimConfig, generate_cohort


def gap(seed: int, xi: float, sparsity: float, n_train: int) -> tuple[float, float]:
    cfg = SimConfig(n_classes=4, n_train=n_train, n_test=1000, n_recorded=3000, n_unseen=600, tau=0.0,
                    xi=xi, omega_sparsity=sparsity, seed=seed)
    sim = generate_cohort(cfg)
    records = sim.records()
    design, labels = build_cohort(records, sim.test_ids)
    meta = build_meta_design(design, records, sim.truth.space)
    burden = burden_matrix(design, meta)
    trained = train(design, labels, burden, sim.truth.space, TrainConfig(n_folds=5, n_lambda=15, full_path=False))
    preds = predict(trained.model, design, meta, rows=np.arange(labels.n_train, design.n_tumors), burden=burden)
    order = [sim.test_ids.index(t) for t in preds.tumor_ids]
    y = sim.y_test[order]
    bayes = np.mean(np.argmax(sim.bayes_probs("test")[order], axis=1) == y)
    return float(bayes), float(np.mean(preds.predicted == y))


if __name__ == "__main__":
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[21, 22, 23])
    ap.add_argument("--xi", type=float, default=1.0)
    ap.add_argument("--omega-sparsity", type=float, default=0.3)
    ap.add_argument("--n-train", type=int, default=2000)
    a = ap.parse_args()
    print("seed\tbayes\tfitted\tgap")
    for s in a.seeds:
        b, f = gap(s, a.xi, a.omega_sparsity, a.n_train)
        print(f"{s}\t{b:.3f}\t{f:.3f}\t{b - f:.3f}")
