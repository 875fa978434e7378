"""Prediction for new tumors and odds-ratio reports from a fitted model."""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .ingest import VariantDesign
from .metafeatures import SBS96, MetaDesign, burden_matrix
from .model import ModelFit
from .solver import ConfigError, softmax_probs


@dataclass
class PredictionSet:
    tumor_ids: list[str]
    class_names: list[str]
    probs: np.ndarray  # (n, K)
    n_unseen: np.ndarray  # variants absent from the training cohort
    n_unseen_meta: np.ndarray  # ... of which carry at least one meta-feature

    @property
    def predicted(self) -> np.ndarray:
        # np.argmax keeps the first maximum: ties go to the lowest class index
        return np.argmax(self.probs, axis=1)

    @property
    def predicted_names(self) -> list[str]:
        return [self.class_names[k] for k in self.predicted]

    def to_csv(self) -> str:
        lines = [",".join(["tumor_id", *self.class_names, "predicted_class", "n_unseen_variants"])]
        for i, tid in enumerate(self.tumor_ids):
            probs = [f"{p:.10g}" for p in self.probs[i]]
            lines.append(",".join([tid, *probs, self.class_names[self.predicted[i]], str(int(self.n_unseen[i]))]))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_csv(cls, path) -> "PredictionSet":
        with open(path, encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        header, body = rows[0], rows[1:]
        class_names = header[1:-2]
        probs = np.array([[float(x) for x in r[1:-2]] for r in body]).reshape(len(body), len(class_names))
        n_unseen = np.array([int(r[-1]) for r in body], dtype=np.int64)
        return cls([r[0] for r in body], class_names, probs, n_unseen, np.zeros_like(n_unseen))


def coefficient_matrices(model: ModelFit, variant_ids: list[str]) -> tuple[np.ndarray, np.ndarray]:
    """Residual effects aligned to ``variant_ids`` (0 where absent) and the (p, K) meta effects."""
    B0 = np.zeros((len(variant_ids), model.n_classes))
    for j, vid in enumerate(variant_ids):
        row = model.beta0.get(vid)
        if row is not None:
            B0[j] = row
    return B0, model.omega_matrix()


def linear_scores(model: ModelFit, X, variant_ids: list[str], burden: np.ndarray) -> np.ndarray:
    """eta = alpha + X beta0 + (XU) omega on the original scale."""
    B0, W = coefficient_matrices(model, variant_ids)
    X = sparse.csr_matrix(X, dtype=float)
    return model.alpha[None, :] + np.asarray(X @ B0) + burden @ W


def predict(
    model: ModelFit, design: VariantDesign, meta: MetaDesign, rows=None, burden=None
) -> PredictionSet:
    """Class probabilities for the tumors in ``rows`` (all rows by default).

    ``meta`` must be built over ``design.variant_ids`` with the model's own
    meta-feature space. Variants absent from training get no residual
    effect and act only through their meta-features. A precomputed
    ``burden`` must cover every row of ``design``.
    """
    if meta.p != model.meta_space.p:
        raise ValueError("meta design was not built with the model's meta-feature space")
    rows = np.arange(design.n_tumors) if rows is None else np.asarray(rows)
    X = design.X[rows]
    burden = (burden_matrix(design, meta) if burden is None else np.asarray(burden))[rows]
    probs = softmax_probs(linear_scores(model, X, design.variant_ids, burden))

    known = set(model.training_variants)
    unseen = np.array([v not in known for v in design.variant_ids], dtype=float)
    has_meta = ((meta.sbs_index >= 0) | (meta.gene_index >= 0)).astype(float)
    Xb = sparse.csr_matrix(X, dtype=float)
    Xb.data[:] = 1.0
    n_unseen = np.asarray(Xb @ unseen).astype(np.int64)
    n_unseen_meta = np.asarray(Xb @ (unseen * has_meta)).astype(np.int64)
    return PredictionSet(
        [design.tumor_ids[i] for i in rows], list(model.class_names), probs, n_unseen, n_unseen_meta
    )


@dataclass
class OddsRatioReport:
    """Odds ratios (one-standard-deviation change) against a reference class."""

    class_names: list[str]
    reference: int
    predictors: list[str]
    kinds: list[str]
    odds: np.ndarray  # (n_predictors, K); reference column is 1

    def to_tsv(self, header: bool = True) -> str:
        lines = ["predictor\tpredictor_kind\tclass\todds_ratio"] if header else []
        for name, kind, row in zip(self.predictors, self.kinds, self.odds):
            for k, cname in enumerate(self.class_names):
                lines.append(f"{name}\t{kind}\t{cname}\t{row[k]:.10g}")
        return "\n".join(lines) + "\n"

    def top(self, kind: str, n: int = 30) -> list[tuple[str, float]]:
        """Predictors of ``kind`` ordered by their largest odds ratio."""
        idx = [i for i, k in enumerate(self.kinds) if k == kind]
        best = sorted(idx, key=lambda i: (-self.odds[i].max(), self.predictors[i]))[:n]
        return [(self.predictors[i], float(self.odds[i].max())) for i in best]


def _reference_index(model: ModelFit, reference) -> int:
    if isinstance(reference, str):
        if reference not in model.class_names:
            raise ConfigError(f"reference class {reference!r} not in {model.class_names}")
        return model.class_names.index(reference)
    ref = int(reference)
    if not 0 <= ref < model.n_classes:
        raise ConfigError(f"reference class index {ref} out of range")
    return ref


def odds_ratio_row(coef: np.ndarray, scale: float, ref: int) -> np.ndarray:
    return np.exp(scale * (coef - coef[ref]))


def odds_ratios(model: ModelFit, reference=0) -> OddsRatioReport:
    """OR_k = exp(sd * (theta_k - theta_ref)) for every residual and meta effect."""
    ref = _reference_index(model, reference)
    sbs = set(SBS96)
    names, kinds, rows = [], [], []
    for vid in sorted(model.beta0):
        names.append(vid)
        kinds.append("variant")
        rows.append(odds_ratio_row(model.beta0[vid], model.variant_scales.get(vid, 0.0), ref))
    for name in model.meta_space.names:
        if name not in model.omega:
            continue
        names.append(name)
        kinds.append("sbs" if name in sbs else "gene")
        rows.append(odds_ratio_row(model.omega[name], model.meta_scales.get(name, 0.0), ref))
    odds = np.array(rows).reshape(len(rows), model.n_classes)
    return OddsRatioReport(list(model.class_names), ref, names, kinds, odds)


@dataclass(frozen=True)
class SignatureGroupSpec:
    name: str
    weights: np.ndarray  # length 96, canonical SBS order

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (len(SBS96),):
            raise ConfigError(f"signature group {self.name!r} needs {len(SBS96)} weights, got {w.size}")
        if not np.all(np.isfinite(w)):
            raise ConfigError(f"signature group {self.name!r} has non-finite weights")
        object.__setattr__(self, "weights", w)


def read_signature_groups(path) -> list[SignatureGroupSpec]:
    """TSV with a ``category`` column and one weight column per group."""
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh, delimiter="\t") if r and not r[0].startswith("#")]
    header, body = rows[0], rows[1:]
    if header[0] != "category":
        raise ConfigError("signature group table must start with a 'category' column")
    by_cat = {r[0]: r[1:] for r in body}
    missing = [c for c in SBS96 if c not in by_cat]
    if missing or len(by_cat) != len(SBS96):
        raise ConfigError(
            f"signature group table must list exactly the 96 SBS categories "
            f"(missing {len(missing)}, found {len(by_cat)})"
        )
    groups = []
    for g, name in enumerate(header[1:]):
        groups.append(SignatureGroupSpec(name, np.array([float(by_cat[c][g]) for c in SBS96])))
    return groups


def aggregate_signature_groups(
    model: ModelFit, burden: np.ndarray, groups: list[SignatureGroupSpec], reference=0
) -> OddsRatioReport:
    """Odds ratios for weighted SBS groups.

    The group effect is ``v^T omega_SBS``; its scale is the standard deviation
    of the weighted burden column ``burden_SBS @ v`` over the given cohort
    (the training cohort by default in the CLI).
    """
    ref = _reference_index(model, reference)
    n_sbs = model.meta_space.n_sbs
    W_sbs = model.omega_matrix()[:n_sbs]
    names, rows = [], []
    for g in groups:
        effect = g.weights @ W_sbs
        column = np.asarray(burden[:, :n_sbs], dtype=float) @ g.weights
        names.append(g.name)
        rows.append(odds_ratio_row(effect, float(column.std()), ref))
    odds = np.array(rows).reshape(len(rows), model.n_classes)
    return OddsRatioReport(list(model.class_names), ref, names, ["signature_group"] * len(names), odds)
