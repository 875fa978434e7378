"""Normalized mutual information screening of recorded variants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .ingest import CohortLabels, VariantDesign

DEFAULT_TOP = 250


def _entropy(counts: np.ndarray, total: float, axis: int = -1) -> np.ndarray:
    p = counts / total
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=axis)


def _nmi_from_table(table: np.ndarray) -> np.ndarray:
    """NMI for a stack of 2 x K contingency tables, shape (..., 2, K)."""
    total = table.sum(axis=(-2, -1))[..., None]
    hx = _entropy(table.sum(axis=-1), total)
    hc = _entropy(table.sum(axis=-2), total)
    hxc = _entropy(table.reshape(*table.shape[:-2], -1), total)
    mi = hx + hc - hxc
    denom = np.sqrt(hx * hc)
    with np.errstate(divide="ignore", invalid="ignore"):
        score = np.where(denom > 0, mi / denom, 0.0)
    return np.clip(score, 0.0, 1.0)


def nmi(x, labels, n_classes: int | None = None) -> float:
    """Plug-in I(X;C) / sqrt(H(X) H(C)) with natural logs; 0 if either entropy is 0.

    ``x`` is binary and ``labels`` holds integer class codes in
    ``0..n_classes-1``.
    """
    x = np.asarray(x).astype(bool)
    labels = np.asarray(labels, dtype=np.int64)
    if x.shape != labels.shape:
        raise ValueError(f"length mismatch: {x.shape[0]} vs {labels.shape[0]}")
    if x.size == 0:
        raise ValueError("nmi needs at least one observation")
    if n_classes is None:
        n_classes = int(labels.max()) + 1
    table = np.zeros((2, n_classes))
    np.add.at(table, (x.astype(np.int64), labels), 1)
    return float(_nmi_from_table(table))


def nmi_columns(X: sparse.spmatrix, labels: np.ndarray, n_classes: int) -> np.ndarray:
    """NMI of every (binary) column of ``X`` with ``labels``, vectorized."""
    X = sparse.csc_matrix(X)
    X.data = np.ones_like(X.data)
    Y = np.zeros((X.shape[0], n_classes))
    Y[np.arange(X.shape[0]), labels] = 1.0
    present = np.asarray(X.T @ Y)  # (d, K) counts with x=1
    class_tot = Y.sum(axis=0)
    table = np.stack([class_tot[None, :] - present, present], axis=1)
    return _nmi_from_table(table)


@dataclass(frozen=True)
class NmiRanking:
    variant_ids: list[str]
    scores: np.ndarray
    ranks: np.ndarray  # 1 = highest score; ties ordered by variant id
    retained: np.ndarray
    top: int

    @property
    def retained_ids(self) -> list[str]:
        """Retained variant ids in rank order."""
        order = np.argsort(self.ranks)
        return [self.variant_ids[i] for i in order if self.retained[i]]

    def to_tsv(self) -> str:
        lines = ["variant_id\tnmi\trank\tretained"]
        for i in np.argsort(self.ranks):
            lines.append(
                f"{self.variant_ids[i]}\t{self.scores[i]:.10g}\t{self.ranks[i]}\t{int(self.retained[i])}"
            )
        return "\n".join(lines) + "\n"


def rank_scores(scores: np.ndarray, ids: list[str], top: int) -> tuple[np.ndarray, np.ndarray]:
    """Ordinal ranks by descending score, ties by id; retain ranks below ``top``."""
    if top < 1:
        raise ValueError(f"screening cutoff must be >= 1, got {top}")
    order = sorted(range(len(ids)), key=lambda j: (-scores[j], ids[j]))
    ranks = np.empty(len(ids), dtype=np.int64)
    ranks[order] = np.arange(1, len(ids) + 1)
    return ranks, ranks < top


def screen_variants(
    design: VariantDesign, labels: CohortLabels, top: int = DEFAULT_TOP
) -> NmiRanking:
    """Score the recorded variants on the training tumors and keep ranks ``< top``.

    With the default of 250 this keeps ranks 1..249.
    """
    m, d1 = labels.n_train, design.d1
    X = design.X[:m, :d1]
    scores = nmi_columns(X, labels.labels, labels.n_classes)
    ids = design.variant_ids[:d1]
    ranks, retained = rank_scores(scores, ids, top)
    return NmiRanking(list(ids), scores, ranks, retained, top)
