"""Per-frame active-EV classifiers and their training machinery."""

from .features import FEATURE_NAMES, FEATURE_SCHEMA_VERSION, N_FEATURES, extract_features
from .models import FeatureClassifier, SyntheticClassifier, objective
from .optim import (PROB_EPS, Adam, PlateauScheduler, TrainConfig, focal_loss, focal_loss_logit_grad,
                    scheduler_step, sigmoid)
from .scoring import (Classifier, fit_records, fit_table, records_features, score_records, score_table,
                      table_features)

__all__ = [
    "Adam", "Classifier", "FEATURE_NAMES", "FEATURE_SCHEMA_VERSION", "FeatureClassifier", "N_FEATURES",
    "PROB_EPS", "PlateauScheduler", "SyntheticClassifier", "TrainConfig", "extract_features", "fit_records",
    "fit_table", "focal_loss", "focal_loss_logit_grad", "objective", "records_features", "scheduler_step",
    "score_records", "score_table", "sigmoid", "table_features",
]
