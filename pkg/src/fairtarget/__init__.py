"""Fair binary classification by training against per-group target labels.

The observed labels are treated as a biased view of unobserved target
labels. A target acceptance rate (demographic parity) or target TPR/TNR
(equality of opportunity) fixes, per group, how target labels relate to
observed ones; the classifier is fitted to the observed labels through
that relation and predicts the target labels.
"""

from .core import (
    Dataset,
    DebiasingParams,
    GroupRates,
    LabeledExample,
    SensitiveGroup,
    TargetKind,
    TargetSpec,
)
from .debias import build_params, estimate_biased_rates, resolve_target
from .metrics import FairnessReport, aggregate_runs, evaluate
from .model import Model, TrainConfig, predict, predict_labels, train

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "DebiasingParams",
    "FairnessReport",
    "GroupRates",
    "LabeledExample",
    "Model",
    "SensitiveGroup",
    "TargetKind",
    "TargetSpec",
    "TrainConfig",
    "aggregate_runs",
    "build_params",
    "estimate_biased_rates",
    "evaluate",
    "predict",
    "predict_labels",
    "resolve_target",
    "train",
]
