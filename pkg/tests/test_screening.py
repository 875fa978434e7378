import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import sparse
from sklearn.metrics import normalized_mutual_info_score

from hiddengenome.ingest import MutationRecord, build_cohort
from hiddengenome.screening import nmi, nmi_columns, rank_scores, screen_variants


@settings(max_examples=100)
@given(seed=st.integers(0, 100_000), m=st.integers(2, 200), K=st.integers(2, 6))
def test_matches_geometric_nmi_reference(seed, m, K):
    rng = np.random.default_rng(seed)
    x = rng.random(m) < rng.random()
    c = rng.integers(0, K, m)
    ours = nmi(x, c, K)
    assert 0.0 <= ours <= 1.0
    if len(set(x)) > 1 and len(set(c)) > 1:
        ref = normalized_mutual_info_score(c, x.astype(int), average_method="geometric")
        assert abs(ours - ref) < 1e-10


def test_range_on_random_vectors():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        m = int(rng.integers(2, 100))
        v = nmi(rng.random(m) < 0.3, rng.integers(0, 4, m), 4)
        assert 0.0 <= v <= 1.0


def test_perfect_copy_and_constant():
    c = np.array([0, 1, 0, 1, 1, 0])
    assert nmi(c, c, 2) == pytest.approx(1.0, abs=1e-12)
    assert nmi(np.zeros(6), c, 2) == 0.0


def test_independent_pairs_median_small():
    vals = []
    for seed in range(100):
        rng = np.random.default_rng(seed)
        vals.append(nmi(rng.random(2000) < 0.5, rng.integers(0, 4, 2000), 4))
    assert np.median(vals) < 0.02


def test_length_mismatch():
    with pytest.raises(ValueError):
        nmi([0, 1], [0, 1, 1])


def test_vectorized_columns_match_scalar(rng):
    X = sparse.random(80, 30, density=0.2, random_state=1, format="csr")
    X.data[:] = 1
    y = rng.integers(0, 3, 80)
    cols = nmi_columns(X, y, 3)
    dense = X.toarray()
    assert np.allclose(cols, [nmi(dense[:, j], y, 3) for j in range(30)], atol=1e-14)


def test_rank_ties_break_by_id():
    ranks, keep = rank_scores(np.array([0.5, 0.9, 0.5, 0.1]), ["b", "z", "a", "c"], top=3)
    assert ranks.tolist() == [3, 1, 2, 4]
    # ranks strictly below the cutoff are retained
    assert keep.tolist() == [False, True, True, False]
    with pytest.raises(ValueError):
        rank_scores(np.zeros(2), ["a", "b"], 0)


def test_screen_uses_training_rows_only():
    recs = [MutationRecord(t, v, "G", "ACA", "C", "T", c) for t, v, c in
            [("T1", "good", "X"), ("T2", "good", "X"), ("T3", "noise", "Y"), ("T4", "noise", "X")]]
    recs.append(MutationRecord("S1", "new", "G", "ACA", "C", "T", None))
    design, labels = build_cohort(recs, {"S1"})
    ranking = screen_variants(design, labels, top=2)
    assert ranking.variant_ids == ["good", "noise"]
    assert ranking.retained_ids == ["good"]
    lines = ranking.to_tsv().splitlines()
    assert lines[0] == "variant_id\tnmi\trank\tretained"
    assert lines[1].split("\t")[0::2] == ["good", "1"] and lines[1].endswith("\t1")
