"""Fitted model container and its JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .metafeatures import MetaFeatureSpace
from .solver import FitProblem, FitResult

SCHEMA_VERSION = 1


@dataclass
class ModelFit:
    """Coefficients on the original (unscaled) predictor scale.

    ``beta0`` maps screened variant ids to residual effects and ``omega``
    maps meta-feature names to meta effects; each value is a K-vector.
    ``variant_scales`` and ``meta_scales`` hold the training standard
    deviation of every fitted column (0 for dropped constant columns), used
    for one-standard-deviation odds ratios.
    """

    class_names: list[str]
    alpha: np.ndarray
    beta0: dict[str, np.ndarray]
    omega: dict[str, np.ndarray]
    variant_scales: dict[str, float]
    meta_scales: dict[str, float]
    meta_space: MetaFeatureSpace
    lam: float
    method: str = "multilevel"
    dropped_columns: list[str] = field(default_factory=list)
    screening: list[tuple[str, float]] = field(default_factory=list)
    training_variants: list[str] = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    def omega_matrix(self) -> np.ndarray:
        """(p, K) meta effects over the full meta-feature space; unused features are 0."""
        W = np.zeros((self.meta_space.p, self.n_classes))
        col = {name: l for l, name in enumerate(self.meta_space.names)}
        for name, row in self.omega.items():
            W[col[name]] = row
        return W

    def to_dict(self) -> dict:
        def vec(v):
            return [float(x) for x in v]

        return {
            "schema_version": SCHEMA_VERSION,
            "method": self.method,
            "class_names": list(self.class_names),
            "lambda": float(self.lam),
            "alpha": vec(self.alpha),
            "beta0": {k: vec(v) for k, v in self.beta0.items()},
            "omega": {k: vec(v) for k, v in self.omega.items()},
            "column_scales": {
                "variant": {k: float(v) for k, v in self.variant_scales.items()},
                "meta": {k: float(v) for k, v in self.meta_scales.items()},
            },
            "dropped_columns": list(self.dropped_columns),
            "meta_space": self.meta_space.to_dict(),
            "screening": [[v, float(s)] for v, s in self.screening],
            "training_variants": list(self.training_variants),
            "diagnostics": self.diagnostics,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelFit":
        if d.get("schema_version") != SCHEMA_VERSION:
            raise ValueError(f"unsupported model schema_version {d.get('schema_version')!r}")
        return cls(
            class_names=list(d["class_names"]),
            alpha=np.asarray(d["alpha"], dtype=float),
            beta0={k: np.asarray(v, dtype=float) for k, v in d["beta0"].items()},
            omega={k: np.asarray(v, dtype=float) for k, v in d["omega"].items()},
            variant_scales=dict(d["column_scales"]["variant"]),
            meta_scales=dict(d["column_scales"]["meta"]),
            meta_space=MetaFeatureSpace.from_dict(d["meta_space"]),
            lam=float(d["lambda"]),
            method=d.get("method", "multilevel"),
            dropped_columns=list(d.get("dropped_columns", [])),
            screening=[(v, float(s)) for v, s in d.get("screening", [])],
            training_variants=list(d.get("training_variants", [])),
            diagnostics=d.get("diagnostics", {}),
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=1, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ModelFit":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def model_from_fit(
    result: FitResult,
    problem: FitProblem,
    class_names: list[str],
    meta_space: MetaFeatureSpace,
    method: str = "multilevel",
    screening: list[tuple[str, float]] | None = None,
    training_variants: list[str] | None = None,
) -> ModelFit:
    """Map a scaled-problem solution back to named, original-scale coefficients."""
    beta0, omega, vscale, mscale = {}, {}, {}, {}
    for j, (name, kind) in enumerate(zip(problem.column_names, problem.column_kinds)):
        s = float(problem.scales[j])
        coef = result.B[j] / s
        if kind == "variant":
            beta0[name], vscale[name] = coef, s
        else:
            omega[name], mscale[name] = coef, s
    # zero-variance columns were never fitted; they are kept with a zero coefficient
    for name, kind in problem.dropped:
        target, scales = (beta0, vscale) if kind == "variant" else (omega, mscale)
        target[name], scales[name] = np.zeros(len(class_names)), 0.0
    dropped = [name for name, _ in problem.dropped]
    diagnostics = {
        "iterations": int(result.iterations),
        "converged": bool(result.converged),
        "kkt_intercept": float(result.kkt.intercept),
        "kkt_active": float(result.kkt.active),
        "kkt_inactive_excess": float(result.kkt.inactive_excess),
        "objective": float(result.objective),
        "n_active_groups": int(result.n_active),
    }
    return ModelFit(
        class_names=list(class_names),
        alpha=np.array(result.alpha, dtype=float),
        beta0=beta0,
        omega=omega,
        variant_scales=vscale,
        meta_scales=mscale,
        meta_space=meta_space,
        lam=float(result.lam),
        method=method,
        dropped_columns=dropped,
        screening=list(screening or []),
        training_variants=list(training_variants or []),
        diagnostics=diagnostics,
    )
