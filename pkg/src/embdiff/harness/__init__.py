from .classifier import (
    ClassifierConfig,
    ClassifierFeatureExtractor,
    SmallConvNet,
    extract_features,
    predict_scores,
    train_classifier,
)
from .experiment import (
    ExperimentPlan,
    ExperimentRow,
    attach_significance,
    run_experiment,
    select_checkpoint,
)
from .report import emit_report
from .subsets import DataRegime, balanced_subset, kfold, nest_regimes

__all__ = [
    "ClassifierConfig",
    "ClassifierFeatureExtractor",
    "DataRegime",
    "ExperimentPlan",
    "ExperimentRow",
    "SmallConvNet",
    "attach_significance",
    "balanced_subset",
    "emit_report",
    "extract_features",
    "kfold",
    "nest_regimes",
    "predict_scores",
    "run_experiment",
    "select_checkpoint",
    "train_classifier",
]
