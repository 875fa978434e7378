import numpy as np
import pytest

from hiddengenome.ingest import MutationRecord, build_cohort
from hiddengenome.inference import (
    PredictionSet,
    SignatureGroupSpec,
    aggregate_signature_groups,
    linear_scores,
    odds_ratios,
    predict,
    read_signature_groups,
)
from hiddengenome.metafeatures import SBS96, MetaFeatureSpace, build_meta_design, burden_matrix
from hiddengenome.model import ModelFit
from hiddengenome.pipeline import TrainConfig, train
from hiddengenome.solver import ConfigError, softmax_probs

SPACE = MetaFeatureSpace(("BRAF", "KRAS"))


def toy_model(alpha, beta0=None, omega=None, space=SPACE, scales=None):
    K = len(alpha)
    beta0 = {k: np.asarray(v, float) for k, v in (beta0 or {}).items()}
    omega = {k: np.asarray(v, float) for k, v in (omega or {}).items()}
    scales = scales or {}
    return ModelFit(
        class_names=[f"K{k}" for k in range(K)], alpha=np.asarray(alpha, float), beta0=beta0, omega=omega,
        variant_scales={k: scales.get(k, 1.0) for k in beta0}, meta_scales={k: scales.get(k, 1.0) for k in omega},
        meta_space=space, lam=1.0, training_variants=sorted(beta0),
    )


def design_for(records, space=SPACE):
    ids = sorted({r.tumor_id for r in records})
    design, _ = build_cohort(records, ids)
    return design, build_meta_design(design, records, space)


class TestPredict:
    def test_zero_mutation_tumor_gets_intercepts(self):
        model = toy_model([0.3, -0.2, 1.0], omega={"KRAS": [1, 2, 3]})
        records = [MutationRecord("S1", "", "", "", "", "", None),
                   MutationRecord("S2", "v", "KRAS", "ACA", "C", "T", None)]
        design, meta = design_for(records)
        preds = predict(model, design, meta)
        assert np.allclose(preds.probs[0], softmax_probs(model.alpha), atol=1e-15)

    def test_unseen_variant_acts_through_meta_row(self):
        # two classes; unseen variant in KRAS with context A[C>T]G
        w_gene, w_sbs = np.array([0.0, 0.7]), np.array([0.1, -0.4])
        model = toy_model([0.2, -0.1], beta0={"old": [0.0, 5.0]},
                          omega={"KRAS": w_gene, "A[C>T]G": w_sbs})
        records = [MutationRecord("S1", "new", "KRAS", "ACG", "C", "T", None)]
        design, meta = design_for(records)
        preds = predict(model, design, meta)
        eta = np.array([0.2 + 0.0 + 0.1, -0.1 + 0.7 - 0.4])
        p1 = 1.0 / (1.0 + np.exp(eta[0] - eta[1]))
        assert preds.probs[0, 1] == pytest.approx(p1, abs=1e-14)
        assert preds.n_unseen.tolist() == [1] and preds.n_unseen_meta.tolist() == [1]

    def test_off_roster_gene_counts_as_unseen_without_meta(self):
        model = toy_model([0.0, 0.0])
        records = [MutationRecord("S1", "x", "NOTLISTED", "", "CA", "-", None)]
        design, meta = design_for(records)
        preds = predict(model, design, meta)
        assert preds.n_unseen.tolist() == [1] and preds.n_unseen_meta.tolist() == [0]
        assert np.allclose(preds.probs, 0.5)

    def test_all_zero_omega_unseen_only_equals_softmax_alpha(self, rng):
        model = toy_model(rng.normal(size=4), beta0={"seen": rng.normal(size=4)})
        records = [MutationRecord(f"S{i}", f"new{i}{j}", "KRAS", "ACA", "C", "A", None)
                   for i in range(5) for j in range(3)]
        design, meta = design_for(records)
        preds = predict(model, design, meta)
        assert np.array_equal(preds.probs, np.tile(softmax_probs(model.alpha), (5, 1)))

    def test_order_invariance(self, rng):
        model = toy_model(rng.normal(size=3), beta0={"a": rng.normal(size=3)},
                          omega={"KRAS": rng.normal(size=3), "T[C>A]A": rng.normal(size=3)})
        records = [MutationRecord("S1", "a", "KRAS", "TCA", "C", "A", None),
                   MutationRecord("S1", "b", "BRAF", "TCA", "C", "A", None),
                   MutationRecord("S2", "c", "KRAS", "GCA", "C", "T", None)]
        d1, m1 = design_for(records)
        d2, m2 = design_for(records[::-1])
        p1, p2 = predict(model, d1, m1), predict(model, d2, m2)
        assert p1.tumor_ids == p2.tumor_ids
        assert np.array_equal(p1.probs, p2.probs)

    def test_meta_space_mismatch(self):
        model = toy_model([0.0, 0.0])
        records = [MutationRecord("S1", "a", "KRAS", "TCA", "C", "A", None)]
        design, meta = design_for(records, MetaFeatureSpace(("KRAS",)))
        with pytest.raises(ValueError):
            predict(model, design, meta)


def test_two_scoring_paths_agree_on_random_models():
    """alpha + X (beta0 + U omega) equals alpha + X beta0 + (XU) omega."""
    rng = np.random.default_rng(2024)
    genes = [f"G{i}" for i in range(6)]
    space = MetaFeatureSpace(tuple(genes[:4]))
    for _ in range(100):
        K, d, n = int(rng.integers(2, 6)), int(rng.integers(3, 30)), int(rng.integers(1, 15))
        records = []
        for j in range(d):
            ctx = "".join(rng.choice(list("ACGT"), 3))
            alt = rng.choice([b for b in "ACGT" if b != ctx[1]])
            gene = genes[int(rng.integers(0, 6))]
            for i in np.flatnonzero(rng.random(n) < 0.3):
                records.append(MutationRecord(f"S{i}", f"v{j}", gene, ctx, ctx[1], alt, None))
        if not records:
            continue
        design, meta = design_for(records, space)
        beta0 = {v: rng.normal(size=K) for v in design.variant_ids if rng.random() < 0.5}
        omega = {name: rng.normal(size=K) for name in space.names if rng.random() < 0.3}
        model = toy_model(rng.normal(size=K), beta0, omega, space)
        U = meta.dense().astype(float)
        W = model.omega_matrix()
        B0 = np.array([beta0.get(v, np.zeros(K)) for v in design.variant_ids])
        X = design.X.toarray().astype(float)
        eta_hier = model.alpha + X @ (B0 + U @ W)
        eta_mixed = linear_scores(model, design.X, design.variant_ids, burden_matrix(design, meta))
        assert np.abs(eta_hier - eta_mixed).max() < 1e-10


class TestPredictionSet:
    def test_tie_goes_to_lowest_index_and_csv_round_trip(self, tmp_path):
        probs = np.array([[0.4, 0.4, 0.2], [0.1, 0.3, 0.6]])
        ps = PredictionSet(["a", "b"], ["X", "Y", "Z"], probs, np.array([0, 2]), np.array([0, 1]))
        assert ps.predicted.tolist() == [0, 2]
        path = tmp_path / "p.csv"
        path.write_text(ps.to_csv())
        assert path.read_text().splitlines()[0] == "tumor_id,X,Y,Z,predicted_class,n_unseen_variants"
        back = PredictionSet.from_csv(path)
        assert np.allclose(back.probs, probs) and back.n_unseen.tolist() == [0, 2]


class TestOddsRatios:
    def test_closed_form_and_reference_column(self):
        model = toy_model([0.0, 0.0], beta0={"v": [0.0, np.log(3)]}, omega={"KRAS": [0.0, 0.0]})
        rep = odds_ratios(model, "K0")
        row = rep.odds[rep.predictors.index("v")]
        assert row[1] == pytest.approx(3.0, rel=1e-14) and row[0] == 1.0
        assert np.all(rep.odds[rep.predictors.index("KRAS")] == 1.0)
        assert np.all(rep.odds > 0) and np.all(rep.odds[:, 0] == 1.0)
        assert rep.kinds == ["variant", "gene"]

    def test_scale_and_shift_invariance(self, rng):
        theta = rng.normal(size=4)
        a = toy_model(np.zeros(4), beta0={"v": theta}, scales={"v": 2.5})
        b = toy_model(np.zeros(4), beta0={"v": theta + 7.0}, scales={"v": 2.5})
        ra, rb = odds_ratios(a, 2), odds_ratios(b, 2)
        assert np.allclose(ra.odds, rb.odds, rtol=1e-12)
        assert np.allclose(ra.odds[0], np.exp(2.5 * (theta - theta[2])))

    def test_bad_reference(self):
        model = toy_model([0.0, 0.0])
        with pytest.raises(ConfigError):
            odds_ratios(model, "nope")
        with pytest.raises(ConfigError):
            odds_ratios(model, 5)

    def test_tsv_layout(self):
        rep = odds_ratios(toy_model([0.0, 0.0], omega={"A[C>A]A": [0.1, 0.2]}))
        lines = rep.to_tsv().splitlines()
        assert lines[0] == "predictor\tpredictor_kind\tclass\todds_ratio"
        assert lines[1].startswith("A[C>A]A\tsbs\tK0\t1")


class TestSignatureGroups:
    @pytest.fixture
    def fitted(self, rng):
        K = 3
        omega = {c: rng.normal(size=K) for c in SBS96}
        burden = rng.poisson(0.7, size=(50, SPACE.p))
        scales = {c: float(burden[:, i].std()) for i, c in enumerate(SBS96)}
        return toy_model(np.zeros(K), omega=omega, scales=scales), burden

    def test_one_hot_reproduces_single_category(self, fitted):
        model, burden = fitted
        t = 17
        e = np.zeros(96)
        e[t] = 1.0
        rep = aggregate_signature_groups(model, burden, [SignatureGroupSpec("one", e)], 1)
        single = odds_ratios(model, 1)
        assert np.array_equal(rep.odds[0], single.odds[single.predictors.index(SBS96[t])])

    def test_uniform_is_mean_of_rows(self, fitted):
        model, burden = fitted
        v = np.full(96, 1 / 96)
        rep = aggregate_signature_groups(model, burden, [SignatureGroupSpec("u", v)], 0)
        W = model.omega_matrix()[:96]
        scale = (burden[:, :96] @ v).std()
        assert np.allclose(rep.odds[0], np.exp(scale * (W.mean(axis=0) - W.mean(axis=0)[0])), rtol=1e-12)

    def test_random_weights_against_dense_oracle(self, fitted, rng):
        model, burden = fitted
        v = rng.random(96)
        rep = aggregate_signature_groups(model, burden, [SignatureGroupSpec("r", v)], 2)
        effect = sum(v[i] * model.omega[c] for i, c in enumerate(SBS96))
        col = np.array([sum(v[i] * burden[r, i] for i in range(96)) for r in range(burden.shape[0])])
        sd = np.sqrt(np.mean((col - col.mean()) ** 2))
        assert np.allclose(rep.odds[0], np.exp(sd * (effect - effect[2])), rtol=1e-10)

    def test_weight_length_checked(self):
        with pytest.raises(ConfigError):
            SignatureGroupSpec("bad", np.ones(95))
        with pytest.raises(ConfigError):
            SignatureGroupSpec("bad", np.r_[np.ones(95), np.nan])

    def test_read_table(self, tmp_path):
        path = tmp_path / "groups.tsv"
        rows = ["category\tA\tB"] + [f"{c}\t{i}\t1" for i, c in enumerate(reversed(SBS96))]
        path.write_text("\n".join(rows) + "\n")
        groups = read_signature_groups(path)
        assert [g.name for g in groups] == ["A", "B"]
        assert groups[0].weights[0] == 95.0 and groups[0].weights[95] == 0.0
        path.write_text("\n".join(rows[:-1]) + "\n")
        with pytest.raises(ConfigError):
            read_signature_groups(path)


def test_trained_model_round_trip_and_group_sparsity(small_sim, tmp_path):
    records = small_sim.records()
    design, labels = build_cohort(records, small_sim.test_ids)
    meta = build_meta_design(design, records, small_sim.truth.space)
    burden = burden_matrix(design, meta)
    trained = train(design, labels, burden, small_sim.truth.space,
                    TrainConfig(n_folds=3, n_lambda=8, top=60))
    model = trained.model
    assert model.diagnostics["converged"]
    rows = np.array(list(model.beta0.values()) + list(model.omega.values()))
    assert np.all(np.all(rows == 0, axis=1) | np.all(rows != 0, axis=1))
    model.save(tmp_path / "m.json")
    again = ModelFit.load(tmp_path / "m.json")
    test_rows = np.arange(labels.n_train, design.n_tumors)
    p1 = predict(model, design, meta, rows=test_rows, burden=burden)
    p2 = predict(again, design, meta, rows=test_rows, burden=burden)
    assert np.array_equal(p1.probs, p2.probs)
    assert np.allclose(p1.probs.sum(axis=1), 1.0, atol=1e-12)
    # every unseen variant sits in some test tumor
    assert p1.n_unseen.sum() >= small_sim.config.n_unseen
