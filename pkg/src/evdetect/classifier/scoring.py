"""Batch scoring and training over simulated records."""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from .. import rand
from ..simulator import FrameRecord, FrameTable, PatchRenderer, RenderInputs
from .features import N_FEATURES, extract_features
from .models import FeatureClassifier, SyntheticClassifier
from .optim import TrainConfig

Classifier = Union[FeatureClassifier, SyntheticClassifier]
_CHUNK = 8192


def table_features(table: FrameTable, rows: np.ndarray, renderer: PatchRenderer) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    out = np.zeros((len(rows), N_FEATURES))
    for lo in range(0, len(rows), _CHUNK):
        part = rows[lo:lo + _CHUNK]
        out[lo:lo + len(part)] = extract_features(renderer.render_batch(RenderInputs.from_table(table, part)))
    return out


def records_features(records: Sequence[FrameRecord], renderer: PatchRenderer) -> np.ndarray:
    out = np.zeros((len(records), N_FEATURES))
    for lo in range(0, len(records), _CHUNK):
        part = records[lo:lo + _CHUNK]
        out[lo:lo + len(part)] = extract_features(renderer.render_records(part))
    return out


def score_table(classifier: Classifier, table: FrameTable, renderer: PatchRenderer) -> np.ndarray:
    """Score every row with a valid crop; invalid rows get NaN."""
    scores = np.full(len(table), np.nan)
    rows = np.flatnonzero(table.valid)
    if isinstance(classifier, SyntheticClassifier):
        side = table.crop_columns()["side"][rows]
        scores[rows] = classifier.score_columns(table.labels[rows], side, table.row_hash[rows],
                                                table.frame_index[rows])
    else:
        scores[rows] = classifier.predict_features(table_features(table, rows, renderer))
    return scores


def score_records(classifier: Classifier, records: Sequence[FrameRecord],
                  renderer: PatchRenderer) -> list[FrameRecord]:
    """Copies of ``records`` with ``score`` set (None where the crop is invalid)."""
    idx = [i for i, r in enumerate(records) if r.crop.valid]
    valid = [records[i] for i in idx]
    if isinstance(classifier, SyntheticClassifier):
        hashes = np.array([rand.actor_hash(r.scene_id, r.track_id) for r in valid], dtype=np.uint64)
        s = classifier.score_columns([r.label for r in valid], [r.crop.side for r in valid], hashes,
                                     [r.frame_index for r in valid])
    else:
        s = classifier.predict_features(records_features(valid, renderer)) if valid else np.zeros(0)
    out = [r.replace(score=None) for r in records]
    for i, score in zip(idx, s.tolist()):
        out[i] = records[i].replace(score=score)
    return out


def fit_records(records: Sequence[FrameRecord], renderer: PatchRenderer, cfg: TrainConfig = TrainConfig(),
                provenance: Optional[dict] = None) -> FeatureClassifier:
    """Train the feature classifier on the valid-crop records.

    The label is positive iff the vehicle is an active EV with a lit beacon.
    """
    valid = [r for r in records if r.crop.valid]
    labels = np.array([r.label for r in valid], dtype=bool)
    if provenance is None:
        provenance = {"scenes": sorted({r.scene_id for r in valid})}
    return FeatureClassifier.fit(records_features(valid, renderer), labels, cfg, provenance)


def fit_table(table: FrameTable, renderer: PatchRenderer, cfg: TrainConfig = TrainConfig(),
              rows: Optional[np.ndarray] = None, provenance: Optional[dict] = None) -> FeatureClassifier:
    rows = np.flatnonzero(table.valid) if rows is None else np.asarray(rows)
    rows = rows[table.valid[rows]]
    if provenance is None:
        provenance = {"scenes": sorted({table.actors[a].scene_id for a in np.unique(table.actor_idx[rows])})}
    return FeatureClassifier.fit(table_features(table, rows, renderer), table.labels[rows], cfg, provenance)
