"""Per-frame classifiers: a label-driven noise model and a trainable linear model."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .. import rand
from ..errors import (DegenerateDatasetError, ModelNotTrainedError, SchemaVersionError)
from ..geometry import ImagePatch
from .features import FEATURE_NAMES, FEATURE_SCHEMA_VERSION, N_FEATURES, extract_features
from .optim import Adam, PlateauScheduler, TrainConfig, focal_loss_logit_grad, sigmoid

log = logging.getLogger(__name__)

MODEL_FORMAT = "evdetect-feature-classifier"
_DECISION_STREAM = 31
_JITTER_STREAM = 32


@dataclass(frozen=True)
class SyntheticClassifier:
    """Noise model over ground truth: fires with probability TPR on positive
    frames and FPR on negative ones.

    When ``far_tpr`` is set the TPR falls linearly from ``tpr`` at crops of
    ``ref_side`` pixels down to ``far_tpr`` at ``min_side``, mimicking harder
    long-range detection. Scores are 1/0 with ``score_jitter=0``; otherwise
    they spread uniformly inside (0.5, 1] / [0, 0.5).
    """

    tpr: float = 0.95
    fpr: float = 0.05
    far_tpr: Optional[float] = None
    ref_side: float = 80.0
    min_side: float = 18.0
    score_jitter: float = 0.0
    seed: int = 0

    def true_positive_rate(self, side) -> np.ndarray:
        side = np.asarray(side, dtype=float)
        if self.far_tpr is None:
            return np.full(side.shape, self.tpr)
        w = np.clip((side - self.min_side) / (self.ref_side - self.min_side), 0.0, 1.0)
        return self.far_tpr + (self.tpr - self.far_tpr) * w

    def score_columns(self, labels, sides, actor_hashes, frames, rng: Optional[np.random.Generator] = None):
        labels = np.asarray(labels, dtype=bool)
        rate = np.where(labels, self.true_positive_rate(sides), self.fpr)
        if rng is None:
            u = rand.uniform(self.seed, actor_hashes, frames, _DECISION_STREAM)
            v = rand.uniform(self.seed, actor_hashes, frames, _JITTER_STREAM)
        else:
            u, v = rng.random(labels.shape), rng.random(labels.shape)
        fire = u < rate
        spread = 0.5 * self.score_jitter * v
        return np.where(fire, 1.0 - spread, spread)

    def classify(self, patch: ImagePatch, rng: Optional[np.random.Generator] = None) -> float:
        if patch.label is None:
            raise ValueError("the noise-model classifier needs a ground-truth label on the patch")
        h = np.array([rand.actor_hash(patch.scene_id, patch.track_id)], dtype=np.uint64)
        return float(self.score_columns([patch.label], [patch.source_region.side], h,
                                        [patch.frame_index or 0], rng)[0])

    def classify_batch(self, patches: Sequence[ImagePatch]) -> np.ndarray:
        return np.array([self.classify(p) for p in patches])

    def to_dict(self) -> dict:
        return {"kind": "synthetic", **asdict(self)}


def objective(params: np.ndarray, features: np.ndarray, labels: np.ndarray,
              alpha: float, gamma: float) -> tuple[float, np.ndarray]:
    """Mean focal loss of the linear-sigmoid model and its gradient.

    ``params`` is the weight vector followed by the bias.
    """
    z = features @ params[:-1] + params[-1]
    loss, dz = focal_loss_logit_grad(z, labels, alpha, gamma)
    n = len(labels)
    grad = np.empty_like(params)
    grad[:-1] = features.T @ dz / n
    grad[-1] = dz.sum() / n
    return float(loss.mean()), grad


class FeatureClassifier:
    """Single linear layer over standardised patch features, sigmoid output."""

    def __init__(self, weights: Optional[np.ndarray] = None, bias: float = 0.0,
                 feature_mean: Optional[np.ndarray] = None, feature_std: Optional[np.ndarray] = None,
                 train_config: Optional[TrainConfig] = None, provenance: Optional[dict] = None,
                 version: str = "untrained", history: Optional[dict] = None):
        self.weights = None if weights is None else np.asarray(weights, dtype=float)
        self.bias = float(bias)
        self.feature_mean = np.zeros(N_FEATURES) if feature_mean is None else np.asarray(feature_mean, float)
        self.feature_std = np.ones(N_FEATURES) if feature_std is None else np.asarray(feature_std, float)
        self.train_config = train_config
        self.provenance = provenance or {}
        self.version = version
        self.history = history or {}

    @property
    def trained(self) -> bool:
        return self.weights is not None

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.weights, [self.bias]])

    def standardize(self, features: np.ndarray) -> np.ndarray:
        return (features - self.feature_mean) / self.feature_std

    def predict_features(self, features: np.ndarray) -> np.ndarray:
        if not self.trained:
            raise ModelNotTrainedError("fit the feature classifier before classifying")
        return sigmoid(self.standardize(features) @ self.weights + self.bias)

    def predict_pixels(self, pixels: np.ndarray) -> np.ndarray:
        return self.predict_features(extract_features(pixels))

    def classify(self, patch: ImagePatch, rng=None) -> float:
        return float(self.predict_pixels(patch.pixels[None])[0])

    def classify_batch(self, patches: Sequence[ImagePatch]) -> np.ndarray:
        if len(patches) == 0:
            return np.zeros(0)
        return self.predict_pixels(np.stack([p.pixels for p in patches]))

    # -- training --------------------------------------------------------------
    @classmethod
    def fit(cls, features: np.ndarray, labels: np.ndarray, cfg: TrainConfig = TrainConfig(),
            provenance: Optional[dict] = None) -> "FeatureClassifier":
        """Minimise mean focal loss with Adam until the plateau schedule stops."""
        features = np.asarray(features, dtype=float)
        labels = np.asarray(labels, dtype=bool)
        if features.ndim != 2 or len(features) != len(labels):
            raise ValueError("features must be (n, k) with one label per row")
        if len(labels) == 0 or labels.all() or not labels.any():
            raise DegenerateDatasetError("training data must contain both classes")
        mean = features.mean(axis=0)
        std = features.std(axis=0)
        std[std < 1e-12] = 1.0
        xs = (features - mean) / std

        rng = np.random.default_rng(cfg.seed)
        params = rng.normal(0.0, 0.01, features.shape[1] + 1)
        params[-1] = 0.0
        opt = Adam(params.shape, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay)
        sched = PlateauScheduler.from_config(cfg)
        n = len(labels)
        order = np.arange(n)
        cursor = n
        loss = float("nan")
        it = 0
        for it in range(1, cfg.max_iterations + 1):
            if cfg.batch_size is None or cfg.batch_size >= n:
                loss, grad = objective(params, xs, labels, cfg.alpha, cfg.gamma)
            else:
                if cursor + cfg.batch_size > n:
                    order = rng.permutation(n)
                    cursor = 0
                idx = order[cursor:cursor + cfg.batch_size]
                cursor += cfg.batch_size
                loss, grad = objective(params, xs[idx], labels[idx], cfg.alpha, cfg.gamma)
            lr, stop = sched.step(loss)
            if stop:
                break
            params = opt.step(params, grad, lr)
        final_loss, _ = objective(params, xs, labels, cfg.alpha, cfg.gamma)
        log.info("fit: %d iterations, %d lr decays, final loss %.6g", it, sched.decays, final_loss)
        history = {"iterations": it, "lr_decays": sched.decays, "final_lr": sched.lr,
                   "final_loss": final_loss, "stopped_by_scheduler": sched.stopped,
                   "n_train": int(n), "n_positive": int(labels.sum())}
        return cls(params[:-1], params[-1], mean, std, cfg, provenance, "v1", history)

    # -- persistence -----------------------------------------------------------
    def to_dict(self) -> dict:
        if not self.trained:
            raise ModelNotTrainedError("cannot persist an untrained model")
        return {
            "format": MODEL_FORMAT,
            "schema_version": FEATURE_SCHEMA_VERSION,
            "feature_names": list(FEATURE_NAMES),
            "version": self.version,
            "weights": self.weights.tolist(),
            "bias": self.bias,
            "feature_mean": self.feature_mean.tolist(),
            "feature_std": self.feature_std.tolist(),
            "train_config": self.train_config.to_dict() if self.train_config else None,
            "provenance": self.provenance,
            "history": self.history,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureClassifier":
        if d.get("format") != MODEL_FORMAT:
            raise SchemaVersionError(f"not a feature-classifier model file (format={d.get('format')!r})")
        if d.get("schema_version") != FEATURE_SCHEMA_VERSION:
            raise SchemaVersionError(
                f"model feature schema v{d.get('schema_version')} != supported v{FEATURE_SCHEMA_VERSION}")
        cfg = TrainConfig(**d["train_config"]) if d.get("train_config") else None
        return cls(d["weights"], d["bias"], d["feature_mean"], d["feature_std"], cfg,
                   d.get("provenance"), d.get("version", "v1"), d.get("history"))

    def save(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path) -> "FeatureClassifier":
        try:
            return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
        except (OSError, ValueError, KeyError, TypeError) as e:
            raise SchemaVersionError(f"{path}: cannot load model ({e})") from e
