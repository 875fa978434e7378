"""Mutation table parsing, cohort assembly and variant recurrence counts."""

from __future__ import annotations

import csv
import io
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np
from scipy import sparse

BASES = frozenset("ACGT")
REQUIRED_COLUMNS = ("tumor_id", "cancer_type", "variant_id", "gene", "tri_context", "ref", "alt")


class FormatError(ValueError):
    """Malformed input file (missing column, bad row)."""


class DataError(ValueError):
    """Well-formed input that is inconsistent with the requested operation."""


@dataclass(frozen=True)
class MutationRecord:
    tumor_id: str
    variant_id: str
    gene: str
    tri_context: str
    ref_allele: str
    alt_allele: str
    cancer_type: str | None = None

    @property
    def is_snv(self) -> bool:
        return (
            len(self.ref_allele) == 1
            and len(self.alt_allele) == 1
            and self.ref_allele in BASES
            and self.alt_allele in BASES
            and self.ref_allele != self.alt_allele
            and len(self.tri_context) == 3
        )

    @property
    def is_placeholder(self) -> bool:
        """Row that only registers a tumor (no mutation), used for mutation-free tumors."""
        return self.variant_id == ""


def validate_record(rec: MutationRecord) -> None:
    """Raise ``ValueError`` when a record breaks the SNV invariants.

    Non-SNV records (indels, MNVs) are marked by a ``-`` or multi-base allele
    and are accepted without a trinucleotide context check.
    """
    if rec.is_placeholder:
        return
    ref, alt, ctx = rec.ref_allele, rec.alt_allele, rec.tri_context
    if len(ref) == 1 and len(alt) == 1 and ref != "-" and alt != "-":
        if ref not in BASES or alt not in BASES:
            raise ValueError(f"bases must be in ACGT, got ref={ref!r} alt={alt!r}")
        if ref == alt:
            raise ValueError(f"ref equals alt ({ref!r})")
        if len(ctx) != 3 or any(b not in BASES for b in ctx):
            raise ValueError(f"tri_context must be 3 bases over ACGT, got {ctx!r}")
        if ctx[1] != ref:
            raise ValueError(f"tri_context {ctx!r} middle base does not match ref {ref!r}")


def parse_mutations(stream: TextIO | Iterable[str]) -> list[MutationRecord]:
    """Parse a tab-separated mutation table.

    Lines starting with ``#`` are skipped. Column order is free; the header
    must contain every name in ``REQUIRED_COLUMNS``. An empty ``cancer_type``
    marks an unlabeled (test) tumor. An empty ``variant_id`` registers a tumor
    with no mutations.
    """
    lines = (line for line in stream if not line.startswith("#") and line.strip() != "")
    reader = csv.reader(lines, delimiter="\t")
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FormatError("empty mutation table: no header row") from None
    missing = [c for c in REQUIRED_COLUMNS if c not in header]
    if missing:
        raise FormatError(f"missing required column: {', '.join(missing)}")
    col = {name: header.index(name) for name in REQUIRED_COLUMNS}

    records = []
    for row_no, row in enumerate(reader, start=1):
        if len(row) < len(header):
            row = row + [""] * (len(header) - len(row))
        vals = {name: row[i].strip() for name, i in col.items()}
        rec = MutationRecord(
            tumor_id=vals["tumor_id"],
            variant_id=vals["variant_id"],
            gene=vals["gene"],
            tri_context=vals["tri_context"].upper(),
            ref_allele=vals["ref"].upper(),
            alt_allele=vals["alt"].upper(),
            cancer_type=vals["cancer_type"] or None,
        )
        if not rec.tumor_id:
            raise FormatError(f"row {row_no}: empty tumor_id: {chr(9).join(row)!r}")
        try:
            validate_record(rec)
        except ValueError as err:
            raise FormatError(f"row {row_no}: {err}: {chr(9).join(row)!r}") from None
        records.append(rec)
    return records


def read_mutations(path) -> list[MutationRecord]:
    with open(path, encoding="utf-8", newline="") as fh:
        return parse_mutations(fh)


def write_mutations(records: Iterable[MutationRecord], stream: TextIO) -> None:
    stream.write("\t".join(REQUIRED_COLUMNS) + "\n")
    for r in records:
        stream.write(
            "\t".join(
                [r.tumor_id, r.cancer_type or "", r.variant_id, r.gene,
                 r.tri_context, r.ref_allele, r.alt_allele]
            )
            + "\n"
        )


def format_mutations(records: Iterable[MutationRecord]) -> str:
    buf = io.StringIO()
    write_mutations(records, buf)
    return buf.getvalue()


def read_id_list(path) -> list[str]:
    """One identifier per line; blank and ``#`` lines ignored."""
    with open(path, encoding="utf-8") as fh:
        return [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]


@dataclass(frozen=True)
class CohortLabels:
    """Tumor ordering and class labels.

    ``labels`` holds 0-based class indices for the first ``n_train`` tumors;
    the remaining tumors are unlabeled test tumors.
    """

    tumor_ids: list[str]
    class_names: list[str]
    labels: np.ndarray

    @property
    def n_train(self) -> int:
        return len(self.labels)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


@dataclass(frozen=True)
class VariantDesign:
    """Binary tumor x variant presence matrix.

    Rows follow ``tumor_ids``; columns follow ``variant_ids`` with the
    ``d1`` training-observed variants first.
    """

    tumor_ids: list[str]
    variant_ids: list[str]
    X: sparse.csr_matrix
    d1: int
    n_train: int = field(default=0)

    @property
    def n_tumors(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return len(self.variant_ids)

    def entries(self) -> set[tuple[int, int]]:
        coo = self.X.tocoo()
        return set(zip(coo.row.tolist(), coo.col.tolist()))


def build_cohort(
    records: list[MutationRecord], test_tumor_ids: Iterable[str] = ()
) -> tuple[VariantDesign, CohortLabels]:
    """Assemble the sparse presence design and labels.

    Training tumors come first, then test tumors, each block sorted by id.
    Variants seen in any training tumor form the leading ``d1`` columns;
    test-only variants follow. Both blocks are sorted by ``variant_id``.
    """
    test_ids = set(test_tumor_ids)
    all_tumors = {r.tumor_id for r in records}
    unknown = sorted(test_ids - all_tumors)
    if unknown:
        raise DataError(f"test tumor ids not found in records: {', '.join(unknown[:10])}")

    tumor_type: dict[str, str] = {}
    for r in records:
        if r.tumor_id in test_ids:
            continue
        if r.cancer_type is None:
            raise DataError(f"training tumor {r.tumor_id!r} has no cancer_type")
        prev = tumor_type.setdefault(r.tumor_id, r.cancer_type)
        if prev != r.cancer_type:
            raise DataError(
                f"tumor {r.tumor_id!r} has conflicting cancer types {prev!r} and {r.cancer_type!r}"
            )

    train_ids = sorted(tumor_type)
    test_sorted = sorted(test_ids)
    tumor_ids = train_ids + test_sorted
    row_of = {t: i for i, t in enumerate(tumor_ids)}

    pairs = {(row_of[r.tumor_id], r.variant_id) for r in records if not r.is_placeholder}
    train_variants = sorted({v for i, v in pairs if i < len(train_ids)})
    test_only = sorted({v for _, v in pairs} - set(train_variants))
    variant_ids = train_variants + test_only
    col_of = {v: j for j, v in enumerate(variant_ids)}

    if pairs:
        rows, cols = zip(*sorted((i, col_of[v]) for i, v in pairs))
    else:
        rows, cols = (), ()
    X = sparse.csr_matrix(
        (np.ones(len(rows), dtype=np.int8), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
        shape=(len(tumor_ids), len(variant_ids)),
    )
    X.sort_indices()

    class_names = sorted(set(tumor_type.values()))
    cls = {c: k for k, c in enumerate(class_names)}
    labels = np.array([cls[tumor_type[t]] for t in train_ids], dtype=np.int64)

    design = VariantDesign(tumor_ids, variant_ids, X, len(train_variants), len(train_ids))
    return design, CohortLabels(tumor_ids, class_names, labels)


def recurrence_table(design: VariantDesign) -> dict[int, int]:
    """Map r -> number of variants present in exactly r tumors (r >= 1)."""
    counts = np.asarray(design.X.sum(axis=0)).ravel().astype(np.int64)
    tab = Counter(int(c) for c in counts if c > 0)
    return dict(sorted(tab.items()))
