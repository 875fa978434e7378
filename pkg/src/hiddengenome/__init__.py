"""Tissue-of-origin classification from somatic mutations.

A multinomial logistic model whose variant effects are shrunk toward a
regression on variant meta-features (gene, SBS-96 context), fitted with a
group-lasso penalty. Variants never seen in training still contribute
through their meta-features.
"""

from .evaluation import Cohort, ExperimentConfig, cv_experiment, pr_auc, pr_curve
from .inference import PredictionSet, aggregate_signature_groups, odds_ratios, predict
from .ingest import MutationRecord, build_cohort, parse_mutations, read_mutations, recurrence_table
from .metafeatures import SBS96, MetaFeatureSpace, build_meta_design, burden_matrix, classify_sbs96
from .model import ModelFit
from .pipeline import TrainConfig, train
from .screening import nmi, screen_variants
from .simulate import SimConfig, generate_cohort, generate_truth
from .solver import FitProblem, SolverConfig, cross_validate_lambda, fit, fit_path, lambda_max

__version__ = "0.1.0"

__all__ = [
    "Cohort", "ExperimentConfig", "FitProblem", "ModelFit", "MutationRecord", "MetaFeatureSpace",
    "PredictionSet", "SBS96", "SimConfig", "SolverConfig", "TrainConfig", "aggregate_signature_groups",
    "build_cohort", "build_meta_design", "burden_matrix", "classify_sbs96", "cross_validate_lambda",
    "cv_experiment", "fit", "fit_path", "generate_cohort", "generate_truth", "lambda_max", "nmi",
    "odds_ratios", "parse_mutations", "pr_auc", "pr_curve", "predict", "read_mutations",
    "recurrence_table", "screen_variants", "train",
]
