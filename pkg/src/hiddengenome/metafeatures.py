"""Variant meta-features (SBS-96 category and gene membership) and burden counts."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from importlib import resources
from itertools import product

import numpy as np

from .ingest import BASES, DataError, MutationRecord, VariantDesign

SUBSTITUTIONS = ("C>A", "C>G", "C>T", "T>A", "T>C", "T>G")
_COMPLEMENT = str.maketrans("ACGT", "TGCA")

SBS96 = tuple(
    f"{five}[{sub}]{three}"
    for sub in SUBSTITUTIONS
    for five, three in product("ACGT", repeat=2)
)
_SBS_INDEX = {cat: i for i, cat in enumerate(SBS96)}


def reverse_complement(seq: str) -> str:
    return seq.translate(_COMPLEMENT)[::-1]


def classify_sbs96(tri_context: str, ref: str, alt: str) -> str | None:
    """Pyrimidine-strand SBS-96 label such as ``"A[C>T]G"``.

    Returns ``None`` for anything that is not a single-base substitution.
    Purine references are reported on the opposite strand.
    """
    if len(ref) != 1 or len(alt) != 1 or ref not in BASES or alt not in BASES or ref == alt:
        return None
    if len(tri_context) != 3 or any(b not in BASES for b in tri_context):
        raise ValueError(f"malformed trinucleotide context {tri_context!r}")
    if tri_context[1] != ref:
        raise ValueError(f"context {tri_context!r} does not carry ref base {ref!r} in the middle")
    if ref in "AG":
        tri_context = reverse_complement(tri_context)
        ref = ref.translate(_COMPLEMENT)
        alt = alt.translate(_COMPLEMENT)
    return f"{tri_context[0]}[{ref}>{alt}]{tri_context[2]}"


@dataclass(frozen=True)
class MetaFeatureSpace:
    """Meta-feature columns: the 96 SBS categories followed by the gene roster."""

    gene_roster: tuple[str, ...]
    sbs_categories: tuple[str, ...] = SBS96

    def __post_init__(self):
        genes = tuple(self.gene_roster)
        if len(set(genes)) != len(genes):
            raise ValueError("gene roster contains duplicates")
        object.__setattr__(self, "gene_roster", tuple(sorted(genes)))
        if tuple(self.sbs_categories) != SBS96:
            raise ValueError("SBS categories must be the canonical 96-category order")

    @property
    def n_sbs(self) -> int:
        return len(self.sbs_categories)

    @property
    def p(self) -> int:
        return self.n_sbs + len(self.gene_roster)

    @property
    def names(self) -> list[str]:
        return list(self.sbs_categories) + list(self.gene_roster)

    def gene_index(self, gene: str) -> int:
        """Column of ``gene`` in the full meta-feature space, or -1 if off-roster."""
        return self._gene_cols.get(gene, -1)

    @cached_property
    def _gene_cols(self) -> dict[str, int]:
        return {g: self.n_sbs + i for i, g in enumerate(self.gene_roster)}

    def to_dict(self) -> dict:
        return {"sbs_categories": list(self.sbs_categories), "gene_roster": list(self.gene_roster)}

    @classmethod
    def from_dict(cls, d: dict) -> "MetaFeatureSpace":
        return cls(tuple(d["gene_roster"]), tuple(d["sbs_categories"]))


def read_gene_roster(path) -> list[str]:
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


def default_gene_roster() -> list[str]:
    """Small placeholder panel shipped with the package; supply a real panel for real data."""
    text = resources.files("hiddengenome").joinpath("data/default_gene_roster.txt").read_text()
    return [ln.strip() for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]


@dataclass(frozen=True)
class MetaDesign:
    """Per-variant meta-feature membership.

    ``sbs_index[j]`` and ``gene_index[j]`` are columns of the meta-feature
    space, or -1 when the variant has no such membership.
    """

    variant_ids: list[str]
    sbs_index: np.ndarray
    gene_index: np.ndarray
    p: int

    def row(self, j: int) -> set[int]:
        return {int(c) for c in (self.sbs_index[j], self.gene_index[j]) if c >= 0}

    def dense(self) -> np.ndarray:
        """Dense 0/1 U matrix; for tests and small instances only."""
        U = np.zeros((len(self.variant_ids), self.p), dtype=np.int64)
        for j in range(len(self.variant_ids)):
            for c in self.row(j):
                U[j, c] = 1
        return U


def build_meta_design(
    variant_ids: list[str] | VariantDesign,
    records: list[MutationRecord],
    space: MetaFeatureSpace,
) -> MetaDesign:
    if isinstance(variant_ids, VariantDesign):
        variant_ids = variant_ids.variant_ids
    info: dict[str, MutationRecord] = {}
    for r in records:
        if r.is_placeholder:
            continue
        prev = info.setdefault(r.variant_id, r)
        if prev.gene != r.gene:
            raise DataError(
                f"variant {r.variant_id!r} annotated with conflicting genes {prev.gene!r} and {r.gene!r}"
            )

    d = len(variant_ids)
    sbs = np.full(d, -1, dtype=np.int64)
    gene = np.full(d, -1, dtype=np.int64)
    for j, vid in enumerate(variant_ids):
        rec = info.get(vid)
        if rec is None:
            raise DataError(f"variant {vid!r} has no originating record")
        cat = classify_sbs96(rec.tri_context, rec.ref_allele, rec.alt_allele)
        if cat is not None:
            sbs[j] = _SBS_INDEX[cat]
        gene[j] = space.gene_index(rec.gene)
    return MetaDesign(list(variant_ids), sbs, gene, space.p)


def burden_matrix(design: VariantDesign, meta: MetaDesign) -> np.ndarray:
    """Integer matrix XU: per-tumor mutation counts for each meta-feature.

    Presence entries are streamed and each bumps at most two counters, so U
    is never materialized.
    """
    if len(meta.variant_ids) != design.d:
        raise ValueError(f"meta design covers {len(meta.variant_ids)} variants, design has {design.d}")
    coo = design.X.tocoo()
    out = np.zeros((design.n_tumors, meta.p), dtype=np.int64)
    for index in (meta.sbs_index, meta.gene_index):
        cols = index[coo.col]
        hit = cols >= 0
        np.add.at(out, (coo.row[hit], cols[hit]), 1)
    return out
