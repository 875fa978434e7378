import warnings
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiddengenome.evaluation import (
    Cohort,
    EvaluationError,
    ExperimentConfig,
    cv_experiment,
    fold_design,
    one_vs_rest_report,
    pr_auc,
    pr_curve,
)


def trapezoid_oracle(points):
    """Exact area with rational arithmetic, starting at (0, first precision)."""
    pts = [(Fraction(0), points[0][1])] + points
    return float(sum((r1 - r0) * (p0 + p1) / 2 for (r0, p0), (r1, p1) in zip(pts, pts[1:])))


class TestPrCurve:
    def test_perfect_classifier(self):
        assert pr_auc(pr_curve([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])) == 1.0

    @pytest.mark.parametrize("n_pos,n", [(1, 7), (3, 10), (50, 200)])
    def test_constant_score_gives_prevalence(self, n_pos, n):
        truth = np.r_[np.ones(n_pos), np.zeros(n - n_pos)]
        assert pr_auc(pr_curve(np.full(n, 0.3), truth)) == n_pos / n

    def test_hand_example(self):
        curve = pr_curve([0.9, 0.8, 0.7, 0.6], [1, 0, 1, 0])
        F = Fraction
        pts = [(F(1, 2), F(1)), (F(1, 2), F(1, 2)), (F(1), F(2, 3)), (F(1), F(1, 2))]
        assert np.allclose(curve.recall, [float(r) for r, _ in pts], atol=0)
        assert abs(pr_auc(curve) - trapezoid_oracle(pts)) < 1e-12
        assert abs(pr_auc(curve) - 19 / 24) < 1e-12

    def test_ties_enter_together(self):
        curve = pr_curve([0.9, 0.5, 0.5, 0.1], [1, 1, 0, 0])
        assert curve.recall.tolist() == [0.5, 1.0, 1.0]
        assert abs(pr_auc(curve) - 11 / 12) < 1e-12

    def test_degenerate_truth_rejected(self):
        with pytest.raises(EvaluationError):
            pr_curve([0.1, 0.2], [0, 0])
        with pytest.raises(ValueError):
            pr_curve([0.1, 0.2], [0, 1, 1])


@settings(max_examples=100)
@given(seed=st.integers(0, 10_000), n=st.integers(2, 60))
def test_auc_bounds_and_score_order_invariance(seed, n):
    rng = np.random.default_rng(seed)
    truth = rng.random(n) < 0.4
    truth[0], truth[1] = True, False
    scores = rng.integers(0, 5, n).astype(float)
    auc = pr_auc(pr_curve(scores, truth))
    assert 0.0 <= auc <= 1.0
    # monotone transforms of the scores leave the curve unchanged
    assert pr_auc(pr_curve(np.exp(scores), truth)) == auc
    perm = rng.permutation(n)
    assert pr_auc(pr_curve(scores[perm], truth[perm])) == auc


class TestOneVsRest:
    def test_missing_class_excluded_and_hard_metrics(self):
        probs = np.array([[0.7, 0.2, 0.1], [0.6, 0.3, 0.1], [0.2, 0.7, 0.1], [0.4, 0.5, 0.1]])
        truth = np.array([0, 1, 1, 0])
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rep = one_vs_rest_report(probs, truth, ["a", "b", "c"])
        assert np.isnan(rep.auc[2])
        assert rep.average_auc == pytest.approx(np.nanmean(rep.auc[:2]))
        # predicted: a, a, b, b
        assert rep.precision.tolist() == [0.5, 0.5, 0.0]
        assert rep.recall.tolist() == [0.5, 0.5, 0.0]


def test_fold_design_reindexes(small_sim):
    cohort = Cohort.from_records(small_sim.labeled_records(), small_sim.truth.space)
    n = cohort.design.n_tumors
    test = np.arange(0, n, 4)
    train = np.setdiff1d(np.arange(n), test)
    design, labels, meta, burden = fold_design(cohort, train, test)
    X = design.X.toarray()
    assert design.n_train == len(train) and labels.n_train == len(train)
    assert np.all(X[: len(train), : design.d1].sum(axis=0) > 0)
    assert np.all(X[: len(train), design.d1:].sum(axis=0) == 0)
    assert np.array_equal(labels.labels, cohort.y[train])
    assert np.array_equal(burden, cohort.burden[np.r_[train, test]])
    orig_col = {v: j for j, v in enumerate(cohort.design.variant_ids)}
    cols = [orig_col[v] for v in design.variant_ids]
    assert np.array_equal(meta.sbs_index, cohort.meta.sbs_index[cols])


@pytest.fixture(scope="module")
def tiny_cohort(small_sim):
    return Cohort.from_records(small_sim.labeled_records(), small_sim.truth.space)


def _small_config(**kw):
    base = dict(repetitions=2, folds=3, inner_folds=3, n_lambda=6, seed=11, top={"multilevel": 40, "recorded": 80})
    base.update(kw)
    return ExperimentConfig(**base)


def test_experiment_shapes_and_formats(tiny_cohort):
    rep = cv_experiment(tiny_cohort, _small_config(keep_curves=True))
    assert rep.auc.shape == (2, 3, 3) and rep.average.shape == (2, 3)
    assert np.all((rep.average > 0) & (rep.average <= 1))
    summary = rep.summary_tsv().splitlines()
    assert summary[0] == "method\tclass\tmean_auc\tsd_auc" and len(summary) == 1 + 3 * 4
    assert rep.report_tsv().splitlines()[0] == "repetition\tmethod\tclass\tauc"
    assert rep.hard_metrics_tsv().splitlines()[0] == "repetition\tmethod\tclass\tprecision\trecall"
    assert len(rep.curves) == 2 * 3 * 3
    assert rep.pr_points_tsv().splitlines()[0] == "repetition\tmethod\tclass\trecall\tprecision"


def test_experiment_deterministic_across_workers(tiny_cohort):
    cfg = dict(methods=("multilevel", "gene"), repetitions=1)
    serial = cv_experiment(tiny_cohort, _small_config(**cfg))
    again = cv_experiment(tiny_cohort, _small_config(**cfg))
    parallel = cv_experiment(tiny_cohort, _small_config(n_jobs=2, **cfg))
    assert serial.summary_tsv() == again.summary_tsv() == parallel.summary_tsv()
    assert serial.report_tsv() == parallel.report_tsv()


def test_unknown_method(tiny_cohort):
    with pytest.raises(EvaluationError):
        cv_experiment(tiny_cohort, _small_config(methods=("forest",)))


def test_single_repetition_sd_is_nan(tiny_cohort):
    rep = cv_experiment(tiny_cohort, _small_config(repetitions=1, methods=("gene",)))
    mean, sd = rep.summary()["gene"]["average"]
    assert 0 < mean <= 1 and np.isnan(sd)
