"""Precision-recall evaluation and the repeated stratified cross-validation experiment."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from .ingest import CohortLabels, MutationRecord, VariantDesign, build_cohort
from .metafeatures import MetaDesign, MetaFeatureSpace, build_meta_design, burden_matrix
from .inference import predict
from .pipeline import METHODS, TrainConfig, train
from .solver import SolverConfig, stratified_folds

log = logging.getLogger(__name__)


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class PrCurve:
    recall: np.ndarray
    precision: np.ndarray
    thresholds: np.ndarray
    prevalence: float


def pr_curve(scores, truth) -> PrCurve:
    """One (recall, precision) point per distinct score, highest threshold first.

    Tied scores enter together, so a tie group never splits into several points.
    """
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth).astype(bool)
    if scores.shape != truth.shape:
        raise ValueError("scores and truth differ in length")
    n_pos = int(truth.sum())
    if n_pos == 0 or n_pos == truth.size:
        raise EvaluationError("precision-recall needs at least one positive and one negative item")
    order = np.argsort(-scores, kind="mergesort")
    s, t = scores[order], truth[order]
    tp = np.cumsum(t)
    fp = np.cumsum(~t)
    # last index of each tie group
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp, fp = tp[ends], fp[ends]
    return PrCurve(tp / n_pos, tp / (tp + fp), s[ends], n_pos / truth.size)


def pr_auc(curve: PrCurve) -> float:
    """Trapezoidal area over recall, starting from (0, first precision)."""
    r = np.r_[0.0, curve.recall]
    p = np.r_[curve.precision[0], curve.precision]
    return float(np.sum(np.diff(r) * (p[1:] + p[:-1]) / 2.0))


@dataclass
class OvrReport:
    class_names: list[str]
    auc: np.ndarray  # nan where undefined
    precision: np.ndarray  # hard (argmax) precision per class
    recall: np.ndarray
    curves: list[PrCurve | None] = field(default_factory=list)

    @property
    def average_auc(self) -> float:
        defined = self.auc[~np.isnan(self.auc)]
        return float(defined.mean()) if defined.size else float("nan")


def one_vs_rest_report(probs: np.ndarray, truth: np.ndarray, class_names: list[str]) -> OvrReport:
    """Per-class PR-AUC scored by probability column k, plus argmax precision/recall.

    A class with no members (or covering every item) has an undefined AUC; it
    is reported as nan and left out of the average. Precision of a class that
    is never predicted is 0.
    """
    probs = np.asarray(probs, dtype=float)
    truth = np.asarray(truth, dtype=np.int64)
    K = len(class_names)
    auc = np.full(K, np.nan)
    curves: list[PrCurve | None] = []
    for k in range(K):
        pos = truth == k
        if 0 < pos.sum() < pos.size:
            c = pr_curve(probs[:, k], pos)
            auc[k] = pr_auc(c)
            curves.append(c)
        else:
            warnings.warn(f"class {class_names[k]!r}: AUC undefined (no positives or no negatives)")
            curves.append(None)
    pred = np.argmax(probs, axis=1)
    precision, recall = np.zeros(K), np.zeros(K)
    for k in range(K):
        hit = np.sum((pred == k) & (truth == k))
        n_pred, n_true = np.sum(pred == k), np.sum(truth == k)
        precision[k] = hit / n_pred if n_pred else 0.0
        recall[k] = hit / n_true if n_true else 0.0
    return OvrReport(list(class_names), auc, precision, recall, curves)


@dataclass
class Cohort:
    """Labeled tumors with their presence design, meta rows and burden."""

    design: VariantDesign
    labels: CohortLabels
    meta: MetaDesign
    burden: np.ndarray
    space: MetaFeatureSpace

    @property
    def y(self) -> np.ndarray:
        return self.labels.labels

    @classmethod
    def from_records(cls, records: list[MutationRecord], space: MetaFeatureSpace) -> "Cohort":
        """All labeled tumors in ``records``; unlabeled rows are ignored."""
        labeled = [r for r in records if r.cancer_type is not None]
        design, labels = build_cohort(labeled)
        meta = build_meta_design(design, labeled, space)
        return cls(design, labels, meta, burden_matrix(design, meta), space)


def fold_design(cohort: Cohort, train_rows, test_rows):
    """Re-index the cohort as if only ``train_rows`` had been seen in training.

    Returns the design (training rows first, then test rows; training-observed
    variants first), the matching labels, meta rows and burden.
    """
    train_rows, test_rows = np.asarray(train_rows), np.asarray(test_rows)
    rows = np.r_[train_rows, test_rows]
    X = cohort.design.X[rows].tocsc()
    seen_train = np.asarray(X[: len(train_rows)].sum(axis=0)).ravel() > 0
    present = np.asarray(X.sum(axis=0)).ravel() > 0
    cols = np.r_[np.flatnonzero(seen_train), np.flatnonzero(present & ~seen_train)]
    ids = cohort.design.variant_ids
    tumor_ids = [cohort.design.tumor_ids[i] for i in rows]
    design = VariantDesign(
        tumor_ids, [ids[j] for j in cols], X[:, cols].tocsr(), int(seen_train.sum()), len(train_rows)
    )
    labels = CohortLabels(tumor_ids, cohort.labels.class_names, cohort.y[train_rows])
    meta = MetaDesign(design.variant_ids, cohort.meta.sbs_index[cols], cohort.meta.gene_index[cols], cohort.meta.p)
    return design, labels, meta, cohort.burden[rows]


@dataclass
class ExperimentConfig:
    repetitions: int = 5
    folds: int = 5
    methods: tuple[str, ...] = METHODS
    seed: int = 0
    inner_folds: int = 10
    n_lambda: int = 50
    lambda_min_ratio: float = 0.01
    cv_rule: str = "min"
    top: dict[str, int] = field(default_factory=dict)  # per-method screening override
    solver: SolverConfig = field(default_factory=SolverConfig)
    n_jobs: int = 1
    keep_curves: bool = False


def _job_seed(*key: int) -> int:
    return int(np.random.SeedSequence(list(key)).generate_state(1)[0])


def _run_fold(cohort: Cohort, config: ExperimentConfig, rep: int, fold: int, train_rows, test_rows):
    design, labels, meta, burden = fold_design(cohort, train_rows, test_rows)
    out = {}
    for method in config.methods:
        tc = TrainConfig(
            method=method,
            top=config.top.get(method),
            n_folds=config.inner_folds,
            n_lambda=config.n_lambda,
            lambda_min_ratio=config.lambda_min_ratio,
            cv_rule=config.cv_rule,
            seed=_job_seed(config.seed, rep, fold),
            full_path=False,
            solver=config.solver,
        )
        trained = train(design, labels, burden, cohort.space, tc)
        test = np.arange(len(train_rows), design.n_tumors)
        preds = predict(trained.model, design, meta, rows=test, burden=burden)
        out[method] = preds.probs
        log.info("rep %d fold %d %s: lambda=%.4g active=%d", rep, fold, method,
                 trained.model.lam, trained.model.diagnostics["n_active_groups"])
    return rep, fold, np.asarray(test_rows), out


@dataclass
class ExperimentReport:
    class_names: list[str]
    methods: list[str]
    auc: np.ndarray  # (repetitions, methods, K)
    average: np.ndarray  # (repetitions, methods)
    precision: np.ndarray  # hard metrics, (repetitions, methods, K)
    recall: np.ndarray
    curves: dict = field(default_factory=dict)  # (rep, method, class) -> PrCurve

    def _sd(self, a: np.ndarray) -> np.ndarray:
        if a.shape[0] < 2:
            return np.full(a.shape[1:], np.nan)
        return a.std(axis=0, ddof=1)

    def summary(self) -> dict[str, dict[str, tuple[float, float]]]:
        """method -> class (and 'average') -> (mean AUC, sd AUC) across repetitions."""
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            mean, sd = np.nanmean(self.auc, axis=0), self._sd(self.auc)
        out = {}
        for m, method in enumerate(self.methods):
            row = {c: (float(mean[m, k]), float(sd[m, k])) for k, c in enumerate(self.class_names)}
            row["average"] = (float(self.average[:, m].mean()), float(self._sd(self.average)[m]))
            out[method] = row
        return out

    def report_tsv(self) -> str:
        lines = ["repetition\tmethod\tclass\tauc"]
        for r in range(self.auc.shape[0]):
            for m, method in enumerate(self.methods):
                for k, c in enumerate(self.class_names):
                    lines.append(f"{r}\t{method}\t{c}\t{self.auc[r, m, k]:.10g}")
                lines.append(f"{r}\t{method}\taverage\t{self.average[r, m]:.10g}")
        return "\n".join(lines) + "\n"

    def summary_tsv(self) -> str:
        lines = ["method\tclass\tmean_auc\tsd_auc"]
        for method, row in self.summary().items():
            for c, (mu, sd) in row.items():
                lines.append(f"{method}\t{c}\t{mu:.10g}\t{sd:.10g}")
        return "\n".join(lines) + "\n"

    def hard_metrics_tsv(self) -> str:
        lines = ["repetition\tmethod\tclass\tprecision\trecall"]
        for r in range(self.auc.shape[0]):
            for m, method in enumerate(self.methods):
                for k, c in enumerate(self.class_names):
                    lines.append(
                        f"{r}\t{method}\t{c}\t{self.precision[r, m, k]:.10g}\t{self.recall[r, m, k]:.10g}"
                    )
        return "\n".join(lines) + "\n"

    def pr_points_tsv(self) -> str:
        lines = ["repetition\tmethod\tclass\trecall\tprecision"]
        for (r, method, c), curve in sorted(self.curves.items()):
            for rec, prec in zip(curve.recall, curve.precision):
                lines.append(f"{r}\t{method}\t{c}\t{rec:.10g}\t{prec:.10g}")
        return "\n".join(lines) + "\n"


def cv_experiment(cohort: Cohort, config: ExperimentConfig | None = None) -> ExperimentReport:
    """Repeated stratified K-fold comparison of the model variants.

    Screening and penalty selection run inside each training split only.
    Test-fold predictions are pooled over folds before computing the
    one-vs-rest PR-AUCs of a repetition.
    """
    config = config or ExperimentConfig()
    for method in config.methods:
        if method not in METHODS:
            raise EvaluationError(f"unknown method {method!r}")
    y = cohort.y
    K = cohort.labels.n_classes
    jobs = []
    for rep in range(config.repetitions):
        folds = stratified_folds(y, config.folds, _job_seed(config.seed, rep))
        for f in range(config.folds):
            jobs.append((rep, f, np.flatnonzero(folds != f), np.flatnonzero(folds == f)))

    if config.n_jobs == 1:
        results = [_run_fold(cohort, config, *job) for job in jobs]
    else:
        results = Parallel(n_jobs=config.n_jobs)(delayed(_run_fold)(cohort, config, *job) for job in jobs)

    methods = list(config.methods)
    R, M = config.repetitions, len(methods)
    pooled = np.full((R, M, len(y), K), np.nan)
    for rep, _, test_rows, out in results:
        for m, method in enumerate(methods):
            pooled[rep, m, test_rows] = out[method]
    if np.isnan(pooled).any():
        raise EvaluationError("pooled fold predictions do not cover every tumor")

    auc, avg = np.zeros((R, M, K)), np.zeros((R, M))
    prec, rec = np.zeros((R, M, K)), np.zeros((R, M, K))
    curves = {}
    for r in range(R):
        for m, method in enumerate(methods):
            rep_report = one_vs_rest_report(pooled[r, m], y, cohort.labels.class_names)
            auc[r, m], avg[r, m] = rep_report.auc, rep_report.average_auc
            prec[r, m], rec[r, m] = rep_report.precision, rep_report.recall
            if config.keep_curves:
                for k, c in enumerate(rep_report.curves):
                    if c is not None:
                        curves[(r, method, cohort.labels.class_names[k])] = c
    return ExperimentReport(list(cohort.labels.class_names), methods, auc, avg, prec, rec, curves)
