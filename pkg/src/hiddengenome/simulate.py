"""Synthetic cohorts drawn from the multilevel generative model.

Variant effects are ``beta = beta0 + U omega`` with Gaussian residual effects
(scale ``tau``) and meta effects (scale ``xi``); labels follow the softmax of
``alpha + x_i^T beta``. Variant presence is Bernoulli per (tumor, variant)
with power-law frequencies, and the ``n_unseen`` variants only ever occur in
test tumors.
"""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass

import numpy as np
from scipy import sparse

from .ingest import MutationRecord, write_mutations
from .metafeatures import SBS96, MetaDesign, MetaFeatureSpace, SUBSTITUTIONS, reverse_complement
from .solver import softmax_probs

_FLIP = str.maketrans("ACGT", "TGCA")


@dataclass
class SimConfig:
    n_classes: int = 4
    n_train: int = 1200
    n_test: int = 300
    n_recorded: int = 5000
    n_unseen: int = 1000
    n_genes: int = 40  # on the gene roster
    n_offroster_genes: int = 10
    mutations_per_tumor: float = 30.0
    freq_exponent: float = 1.1  # power-law decay of variant frequencies
    max_freq: float = 0.3
    tau: float = 0.5  # residual effect scale
    xi: float = 0.5  # meta effect scale
    omega_sparsity: float = 0.6  # fraction of meta-feature rows set to zero
    beta0_sparsity: float = 0.98  # fraction of residual rows set to zero
    seed: int = 0

    def __post_init__(self):
        for name in ("n_classes", "n_train", "n_recorded", "n_genes"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        for name in ("n_test", "n_unseen", "n_offroster_genes"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.tau < 0 or self.xi < 0:
            raise ValueError("tau and xi must be >= 0")
        for name in ("omega_sparsity", "beta0_sparsity"):
            if not 0 <= getattr(self, name) <= 1:
                raise ValueError(f"{name} must lie in [0, 1]")

    @property
    def n_variants(self) -> int:
        return self.n_recorded + self.n_unseen

    @property
    def class_names(self) -> list[str]:
        return [f"C{k + 1}" for k in range(self.n_classes)]


@dataclass
class Truth:
    space: MetaFeatureSpace
    variant_ids: list[str]  # recorded block first, then unseen
    genes: list[str]
    contexts: list[tuple[str, str, str]]  # (tri_context, ref, alt) as reported
    meta: MetaDesign
    freqs: np.ndarray
    alpha: np.ndarray
    omega: np.ndarray  # (p, K)
    beta0: np.ndarray  # (d, K)
    beta: np.ndarray  # (d, K)

    def to_dict(self, class_names: list[str]) -> dict:
        names = self.space.names
        return {
            "class_names": class_names,
            "alpha": self.alpha.tolist(),
            "omega": {names[l]: self.omega[l].tolist() for l in range(len(names)) if self.omega[l].any()},
            "beta0": {
                self.variant_ids[j]: self.beta0[j].tolist()
                for j in range(len(self.variant_ids)) if self.beta0[j].any()
            },
            "gene_roster": list(self.space.gene_roster),
        }


def _sparse_rows(rng, rows: int, cols: int, scale: float, sparsity: float) -> np.ndarray:
    W = rng.normal(0.0, scale, size=(rows, cols)) if scale > 0 else np.zeros((rows, cols))
    n_zero = int(round(sparsity * rows))
    W[rng.permutation(rows)[:n_zero]] = 0.0
    return W


def generate_truth(config: SimConfig) -> Truth:
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 0]))
    K, d = config.n_classes, config.n_variants
    roster = [f"G{i + 1:03d}" for i in range(config.n_genes)]
    off = [f"X{i + 1:03d}" for i in range(config.n_offroster_genes)]
    space = MetaFeatureSpace(tuple(roster))
    all_genes = roster + off

    gene_w = 1.0 / np.arange(1, len(all_genes) + 1)
    gene_w = rng.permutation(gene_w / gene_w.sum())
    gene_of = rng.choice(len(all_genes), size=d, p=gene_w)
    sbs_p = rng.dirichlet(np.full(len(SBS96), 0.5))
    sbs_of = rng.choice(len(SBS96), size=d, p=sbs_p)

    genes = [all_genes[g] for g in gene_of]
    contexts, ids = [], []
    flip = rng.random(d) < 0.5
    for j in range(d):
        cat = SBS96[sbs_of[j]]
        ref, alt = cat[2], cat[4]
        ctx = cat[0] + ref + cat[-1]
        if flip[j]:
            ctx, ref, alt = reverse_complement(ctx), ref.translate(_FLIP), alt.translate(_FLIP)
        contexts.append((ctx, ref, alt))
        ids.append(f"{genes[j]}:{100000 + 17 * j}:{ref}>{alt}")

    gene_col = np.array([space.gene_index(g) for g in genes], dtype=np.int64)
    meta = MetaDesign(ids, sbs_of.astype(np.int64), gene_col, space.p)

    ranks = rng.permutation(d) + 1.0
    w = ranks ** -config.freq_exponent
    freqs = np.minimum(config.mutations_per_tumor * w / w.sum(), config.max_freq)

    omega = _sparse_rows(rng, space.p, K, config.xi, config.omega_sparsity)
    beta0 = _sparse_rows(rng, d, K, config.tau, config.beta0_sparsity)
    beta = beta0 + _u_times(meta, omega)
    # intercepts cancel the expected linear predictor so classes are balanced on average
    alpha = -(freqs @ beta)
    return Truth(space, ids, genes, contexts, meta, freqs, alpha, omega, beta0, beta)


def _u_times(meta: MetaDesign, W: np.ndarray) -> np.ndarray:
    out = np.zeros((len(meta.variant_ids), W.shape[1]))
    for index in (meta.sbs_index, meta.gene_index):
        hit = index >= 0
        out[hit] += W[index[hit]]
    return out


@dataclass
class SimCohort:
    config: SimConfig
    truth: Truth
    train_ids: list[str]
    test_ids: list[str]
    X_train: sparse.csr_matrix  # over all d variants; unseen columns are empty
    X_test: sparse.csr_matrix
    y_train: np.ndarray
    y_test: np.ndarray

    def records(self, which: str = "all") -> list[MutationRecord]:
        """Mutation records; test tumors carry no cancer_type."""
        out = []
        names = self.config.class_names
        blocks = []
        if which in ("all", "train"):
            blocks.append((self.train_ids, self.X_train, self.y_train, True))
        if which in ("all", "test"):
            blocks.append((self.test_ids, self.X_test, self.y_test, False))
        t = self.truth
        for ids, X, y, labeled in blocks:
            for i, tid in enumerate(ids):
                cols = X.indices[X.indptr[i]:X.indptr[i + 1]]
                ctype = names[y[i]] if labeled else None
                if cols.size == 0:
                    out.append(MutationRecord(tid, "", "", "", "", "", ctype))
                for j in cols:
                    ctx, ref, alt = t.contexts[j]
                    out.append(MutationRecord(tid, t.variant_ids[j], t.genes[j], ctx, ref, alt, ctype))
        return out

    def labeled_records(self) -> list[MutationRecord]:
        """Every tumor with its true label (for cross-validation experiments)."""
        names = self.config.class_names
        test_label = dict(zip(self.test_ids, (names[k] for k in self.y_test)))
        return [
            r if r.cancer_type is not None else
            MutationRecord(r.tumor_id, r.variant_id, r.gene, r.tri_context, r.ref_allele, r.alt_allele,
                           test_label[r.tumor_id])
            for r in self.records()
        ]

    def bayes_probs(self, which: str = "test") -> np.ndarray:
        X = self.X_test if which == "test" else self.X_train
        return softmax_probs(self.truth.alpha + np.asarray(X @ self.truth.beta))


def _sample_presence(rng, n: int, freqs: np.ndarray, cols: np.ndarray, force: bool) -> sparse.csr_matrix:
    """Bernoulli presences for the variants in ``cols``; with ``force`` each appears at least once."""
    rows_all, cols_all = [], []
    counts = rng.binomial(n, freqs[cols])
    if force:
        counts = np.maximum(counts, 1)
    for j, c in zip(cols, counts):
        if c:
            rows_all.append(rng.choice(n, size=min(c, n), replace=False))
            cols_all.append(np.full(min(c, n), j))
    r = np.concatenate(rows_all) if rows_all else np.zeros(0, dtype=np.int64)
    c = np.concatenate(cols_all) if cols_all else np.zeros(0, dtype=np.int64)
    X = sparse.csr_matrix((np.ones(r.size, dtype=np.int8), (r, c)), shape=(n, len(freqs)))
    X.sort_indices()
    return X


def generate_cohort(config: SimConfig, truth: Truth | None = None) -> SimCohort:
    truth = truth or generate_truth(config)
    rng = np.random.default_rng(np.random.SeedSequence([config.seed, 1]))
    d1 = config.n_recorded
    recorded = np.arange(d1)
    everything = np.arange(config.n_variants)
    X_train = _sample_presence(rng, config.n_train, truth.freqs, recorded, force=True)
    X_test = _sample_presence(rng, config.n_test, truth.freqs, everything, force=False)
    if config.n_test and config.n_unseen:
        # every unseen variant occurs in at least one test tumor
        unseen = np.arange(d1, config.n_variants)
        missing = unseen[np.asarray(X_test[:, unseen].sum(axis=0)).ravel() == 0]
        extra = sparse.csr_matrix(
            (np.ones(missing.size, dtype=np.int8), (rng.integers(0, config.n_test, missing.size), missing)),
            shape=X_test.shape,
        )
        X_test = (X_test + extra).tocsr()
        X_test.data[:] = 1
    y_train = _sample_labels(rng, truth, X_train)
    y_test = _sample_labels(rng, truth, X_test)
    train_ids = [f"T{i + 1:05d}" for i in range(config.n_train)]
    test_ids = [f"S{i + 1:05d}" for i in range(config.n_test)]
    return SimCohort(config, truth, train_ids, test_ids, X_train, X_test, y_train, y_test)


def _sample_labels(rng, truth: Truth, X) -> np.ndarray:
    P = softmax_probs(truth.alpha + np.asarray(X @ truth.beta))
    u = rng.random(P.shape[0])
    return np.minimum((P.cumsum(axis=1) < u[:, None]).sum(axis=1), P.shape[1] - 1)


def default_signature_groups() -> dict[str, np.ndarray]:
    """One group per substitution class, weights uniform over its 16 contexts."""
    groups = {}
    for sub in SUBSTITUTIONS:
        w = np.array([1.0 / 16 if f"[{sub}]" in cat else 0.0 for cat in SBS96])
        groups[sub.replace(">", "to")] = w
    return groups


def write_simulation(sim: SimCohort, outdir) -> dict[str, str]:
    """Write mutations.tsv, test_ids.txt, test_labels.tsv, gene_roster.txt,
    signature_groups.tsv and truth.json into ``outdir``."""
    os.makedirs(outdir, exist_ok=True)
    paths = {name: os.path.join(outdir, name) for name in (
        "mutations.tsv", "test_ids.txt", "test_labels.tsv", "gene_roster.txt",
        "signature_groups.tsv", "truth.json")}
    with open(paths["mutations.tsv"], "w", encoding="utf-8") as fh:
        write_mutations(sim.records(), fh)
    with open(paths["test_ids.txt"], "w", encoding="utf-8") as fh:
        fh.writelines(f"{t}\n" for t in sim.test_ids)
    names = sim.config.class_names
    with open(paths["test_labels.tsv"], "w", encoding="utf-8") as fh:
        fh.write("tumor_id\tcancer_type\n")
        fh.writelines(f"{t}\t{names[k]}\n" for t, k in zip(sim.test_ids, sim.y_test))
    with open(paths["gene_roster.txt"], "w", encoding="utf-8") as fh:
        fh.writelines(f"{g}\n" for g in sim.truth.space.gene_roster)
    groups = default_signature_groups()
    with open(paths["signature_groups.tsv"], "w", encoding="utf-8") as fh:
        fh.write("\t".join(["category", *groups]) + "\n")
        for i, cat in enumerate(SBS96):
            fh.write("\t".join([cat, *(f"{w[i]:.10g}" for w in groups.values())]) + "\n")
    with open(paths["truth.json"], "w", encoding="utf-8") as fh:
        payload = sim.truth.to_dict(names)
        payload["config"] = asdict(sim.config)
        json.dump(payload, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return paths
