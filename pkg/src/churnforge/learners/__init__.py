"""Tree learners, sampling and cross-validation."""

from .models import (
    BOOSTED,
    ModelKind,
    ModelSchemaError,
    TrainedModel,
    load_model,
    log_loss,
    predict,
    save_model,
    train,
    train_decision_tree,
    train_gbm,
    train_random_forest,
    train_xgb_style,
)
from .sampling import (
    DEFAULT_SAMPLING,
    CvResult,
    LearnerSpec,
    SamplingMode,
    cross_validate,
    expand_grid,
    resample,
    split_train_test,
    stratified_folds,
)
from .tree import BinMapper, GrowParams, Tree, grow_tree

__all__ = [
    "BOOSTED", "BinMapper", "CvResult", "DEFAULT_SAMPLING", "GrowParams", "LearnerSpec",
    "ModelKind", "ModelSchemaError", "SamplingMode", "TrainedModel", "Tree", "cross_validate",
    "expand_grid", "grow_tree", "load_model", "log_loss", "predict", "resample", "save_model",
    "split_train_test", "stratified_folds", "train", "train_decision_tree", "train_gbm",
    "train_random_forest", "train_xgb_style",
]
