"""Training pipeline shared by the CLI and the cross-validation experiment.

Three model variants are supported:

``multilevel``
    screened variant indicators plus the full burden matrix (SBS + genes).
``gene``
    gene-burden columns only.
``recorded``
    screened variant indicators only (wider screen, 1000 by default).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse

from .ingest import CohortLabels, VariantDesign
from .metafeatures import MetaFeatureSpace
from .model import ModelFit, model_from_fit
from .screening import NmiRanking, screen_variants
from .solver import (
    ConfigError,
    CVResult,
    FitProblem,
    SolverConfig,
    cross_validate_lambda,
    fit,
    fit_path,
)

METHODS = ("multilevel", "gene", "recorded")
DEFAULT_TOP = {"multilevel": 250, "gene": 0, "recorded": 1000}


@dataclass
class TrainConfig:
    method: str = "multilevel"
    top: int | None = None  # screening cutoff; retains NMI ranks < top
    n_folds: int = 10
    n_lambda: int = 50
    lambda_min_ratio: float = 0.01
    cv_rule: str = "min"
    seed: int = 0
    lam: float | None = None  # fixed penalty; skips cross-validation
    full_path: bool = True  # fit the whole grid on the full data (for the CV report)
    solver: SolverConfig = field(default_factory=SolverConfig)

    def __post_init__(self):
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")

    @property
    def screening_top(self) -> int:
        return self.top if self.top is not None else DEFAULT_TOP[self.method]


def build_problem(
    design: VariantDesign,
    labels: CohortLabels,
    burden: np.ndarray,
    space: MetaFeatureSpace,
    method: str = "multilevel",
    top: int | None = None,
) -> tuple[FitProblem, NmiRanking | None]:
    """Assemble the scaled training matrix for ``method`` from the training rows."""
    if method not in METHODS:
        raise ConfigError(f"unknown method {method!r}")
    top = DEFAULT_TOP[method] if top is None else top
    m = labels.n_train
    blocks, names, kinds = [], [], []
    ranking = None
    if method in ("multilevel", "recorded"):
        ranking = screen_variants(design, labels, top)
        keep = np.flatnonzero(ranking.retained)
        keep = keep[np.argsort(ranking.ranks[keep])]
        blocks.append(design.X[:m][:, keep])
        names += [design.variant_ids[j] for j in keep]
        kinds += ["variant"] * len(keep)
    if method == "multilevel":
        blocks.append(sparse.csr_matrix(burden[:m]))
        names += space.names
        kinds += ["sbs"] * space.n_sbs + ["gene"] * len(space.gene_roster)
    elif method == "gene":
        blocks.append(sparse.csr_matrix(burden[:m, space.n_sbs:]))
        names += list(space.gene_roster)
        kinds += ["gene"] * len(space.gene_roster)
    raw = sparse.hstack(blocks, format="csr") if blocks else sparse.csr_matrix((m, 0))
    problem = FitProblem.from_columns(raw, labels.labels, labels.n_classes, names, kinds)
    return problem, ranking


@dataclass
class Trained:
    model: ModelFit
    problem: FitProblem
    cv: CVResult | None
    ranking: NmiRanking | None


def train(
    design: VariantDesign,
    labels: CohortLabels,
    burden: np.ndarray,
    space: MetaFeatureSpace,
    config: TrainConfig | None = None,
) -> Trained:
    """Screen, choose the penalty by CV (unless fixed) and fit on all training rows."""
    config = config or TrainConfig()
    problem, ranking = build_problem(design, labels, burden, space, config.method, config.screening_top)
    cv = None
    if config.lam is not None:
        result = fit(problem, config.lam, config=config.solver)
    else:
        cv = cross_validate_lambda(
            problem,
            n_folds=config.n_folds,
            n_lambda=config.n_lambda,
            lambda_min_ratio=config.lambda_min_ratio,
            seed=config.seed,
            rule=config.cv_rule,
            config=config.solver,
            full_path=config.full_path,
        )
        if cv.path is not None:
            result = cv.path.fits[cv.chosen_index]
        else:
            prefix = fit_path(problem, lambdas=cv.lambdas[: cv.chosen_index + 1], config=config.solver)
            result = prefix.fits[-1]

    screening = []
    if ranking is not None:
        order = np.argsort(ranking.ranks)
        screening = [(ranking.variant_ids[j], float(ranking.scores[j])) for j in order if ranking.retained[j]]
    model = model_from_fit(
        result,
        problem,
        labels.class_names,
        space,
        method=config.method,
        screening=screening,
        training_variants=design.variant_ids[: design.d1],
    )
    return Trained(model, problem, cv, ranking)
