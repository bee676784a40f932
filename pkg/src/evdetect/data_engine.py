"""Mine -> label -> retrain loop over newly simulated logs."""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .augmentation import build_train_set
from .classifier import FeatureClassifier, TrainConfig, fit_records, score_records, score_table
from .errors import DataError, MissingGroundTruthError, ProvenanceError
from .evaluation import EvalReport, actor_columns, frame_report
from .geometry import DEFAULT_MIN_WIDTH, CameraModel
from .simulator import DEFAULT_CAMERA, FrameRecord, FrameTable, PatchRenderer, split_dataset
from .smoother import SmootherConfig, decision_trace

log = logging.getLogger(__name__)

Log = Union[FrameTable, Sequence[FrameRecord]]


@dataclass
class MinedEvent:
    scene_id: str
    track_id: Union[int, str]
    frame_indices: list
    scores: list  # None where the crop was invalid
    decisions: list  # smoothed active-EV state after each frame
    model_version: str
    log_path: Optional[str] = None
    labels: Optional[list] = None  # filled by label_events: [is_active, bulb_on] per frame

    @property
    def key(self) -> tuple:
        return (self.scene_id, self.track_id)

    @property
    def frame_span(self) -> tuple[int, int]:
        return self.frame_indices[0], self.frame_indices[-1]

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "MinedEvent":
        return cls(**d)


def _training_scenes(model) -> set:
    prov = getattr(model, "provenance", None) or {}
    return set(prov.get("scenes", []))


def mine(logs: Sequence[Log], model, cfg: SmootherConfig = SmootherConfig(),
         renderer: Optional[PatchRenderer] = None, per_frame: bool = False,
         log_paths: Optional[Sequence[str]] = None) -> list[MinedEvent]:
    """Every track flagged active by the smoothed model on at least one frame.

    True and false positives are both returned; the model never sees labels
    here (the noise-model classifier aside, which is label-driven by design).
    With ``per_frame=True`` a single frame score above the decision threshold
    is enough.
    """
    renderer = renderer or PatchRenderer()
    version = getattr(model, "version", "synthetic")
    trained_on = _training_scenes(model)
    events, seen = [], set()
    for li, data in enumerate(logs):
        is_table = isinstance(data, FrameTable)
        scenes = {a.scene_id for a in data.actors} if is_table else {r.scene_id for r in data}
        overlap = scenes & trained_on
        if overlap:
            raise ProvenanceError(f"log scenes {sorted(overlap)} were used to train model {version}")
        if is_table:
            scores = score_table(model, data, renderer)
        else:
            scores = np.array([np.nan if r.score is None else r.score
                               for r in score_records(model, data, renderer)])
        cols = actor_columns(data, scores)
        bounds = np.r_[0, np.cumsum(np.bincount(cols.actor_of_row, minlength=len(cols.keys)))]
        for a, key in enumerate(cols.keys):
            sl = slice(bounds[a], bounds[a + 1])
            s, valid = cols.scores[sl], cols.valid[sl]
            trace = decision_trace(s, valid, cfg)
            hit = (valid & (s >= cfg.frame_decision_threshold)).any() if per_frame else trace.any()
            if not hit or key in seen:
                continue
            seen.add(key)
            events.append(MinedEvent(
                key[0], key[1], cols.frame_index[sl].tolist(),
                [float(x) if ok else None for x, ok in zip(s.tolist(), valid.tolist())],
                trace.tolist(), version, None if log_paths is None else str(log_paths[li])))
    log.info("mined %d events from %d logs", len(events), len(logs))
    return events


def _index_ground_truth(ground_truth: Sequence[Log]) -> dict:
    index: dict = {}
    for data in ground_truth:
        if isinstance(data, FrameTable):
            order = np.lexsort((data.frame_index, data.actor_idx))
            a_sorted = data.actor_idx[order]
            starts = np.r_[0, np.flatnonzero(a_sorted[1:] != a_sorted[:-1]) + 1, len(order)]
            for lo, hi in zip(starts[:-1], starts[1:]):
                if hi > lo:
                    p = data.actors[a_sorted[lo]]
                    index[(p.scene_id, p.track_id)] = (data, order[lo:hi])
        else:
            for r in data:
                index.setdefault(r.actor_key, []).append(r)
    return index


def label_events(events: Sequence[MinedEvent], ground_truth: Sequence[Log]) -> list[FrameRecord]:
    """Attach simulator ground truth to every frame of each mined track.

    Returned records carry ``source="mined"`` and the mining model version.
    """
    index = _index_ground_truth(ground_truth)
    out = []
    for ev in events:
        entry = index.get(ev.key)
        if entry is None:
            raise MissingGroundTruthError(f"no ground truth for mined track {ev.key}")
        recs = entry[0].records(entry[1]) if isinstance(entry, tuple) else sorted(entry, key=lambda r: r.frame_index)
        ev.labels = [[r.is_active, r.bulb_on] for r in recs]
        out.extend(r.replace(source="mined", provenance=f"mined-by:{ev.model_version}", score=None, split=None)
                   for r in recs)
    return out


@dataclass
class Dataset:
    """Growing labelled record set with per-actor splits and dedup by (scene, track)."""

    records: list = field(default_factory=list)
    split_ratio: tuple = (3, 1)
    split_seed: int = 0
    history: list = field(default_factory=list)

    def __post_init__(self):
        self.records = split_dataset(list(self.records), self.split_ratio, self.split_seed)
        self._keys = {r.actor_key for r in self.records}

    @property
    def actor_keys(self) -> set:
        return set(self._keys)

    def merge(self, new_records: Sequence[FrameRecord], tag: str = "merge") -> int:
        """Add records of actors not yet present; returns the number of records added."""
        fresh = [r for r in new_records if r.actor_key not in self._keys]
        fresh = split_dataset(fresh, self.split_ratio, self.split_seed)
        self.records.extend(fresh)
        added_keys = {r.actor_key for r in fresh}
        self._keys |= added_keys
        self.history.append({"tag": tag, "records": len(fresh), "actors": len(added_keys),
                             "total_records": len(self.records)})
        return len(fresh)

    def split(self, name: str) -> list[FrameRecord]:
        return [r for r in self.records if r.split == name]

    def check_hygiene(self, train: Sequence[FrameRecord]) -> None:
        test_keys = {r.actor_key for r in self.records if r.split == "test"}
        leaked = {r.actor_key for r in train} & test_keys
        if leaked:
            raise DataError(f"test-split actors leaked into training: {sorted(leaked)[:5]}")


@dataclass(frozen=True)
class EngineConfig:
    positive_ratio: int = 2
    negative_downsample: int = 5
    seed: int = 0
    min_width: float = DEFAULT_MIN_WIDTH


def train_dataset(dataset: Dataset, train_cfg: TrainConfig, renderer: PatchRenderer,
                  engine: EngineConfig = EngineConfig(), camera: CameraModel = DEFAULT_CAMERA) -> FeatureClassifier:
    """Rebalance the train split (augmentation included) and fit a fresh model."""
    train = dataset.split("train")
    train_set, _ = build_train_set(train, engine.positive_ratio, engine.negative_downsample, engine.seed,
                                   camera, engine.min_width)
    dataset.check_hygiene(train_set)
    provenance = {"scenes": sorted({r.scene_id for r in dataset.records}),
                  "n_records": len(dataset.records), "n_train_set": len(train_set),
                  "mined_records": sum(r.source == "mined" for r in dataset.records)}
    return fit_records(train_set, renderer, train_cfg, provenance)


def evaluate_frames(model, test: Log, renderer: PatchRenderer, name: str) -> EvalReport:
    if isinstance(test, FrameTable):
        scored = test.with_scores(score_table(model, test, renderer))
    else:
        scored = score_records(model, test, renderer)
    return frame_report(scored, name=name, include_curve=False)


@dataclass
class CycleResult:
    model: FeatureClassifier
    report: EvalReport
    baseline: EvalReport
    added_records: int


def retrain_cycle(dataset: Dataset, new_records: Sequence[FrameRecord], train_cfg: TrainConfig,
                  renderer: PatchRenderer, previous: FeatureClassifier, test: Optional[Log] = None,
                  engine: EngineConfig = EngineConfig(), camera: CameraModel = DEFAULT_CAMERA) -> CycleResult:
    """Merge labelled mined records, retrain, and compare against ``previous``.

    Metrics are always computed on the same ``test`` set (default: the
    dataset's test split as it stood before the merge).
    """
    if test is None:
        test = dataset.split("test")
    baseline = evaluate_frames(previous, test, renderer, name=previous.version)
    added = dataset.merge(new_records, tag=f"cycle-{len(dataset.history)}")
    model = train_dataset(dataset, train_cfg, renderer, engine, camera)
    model.version = f"{previous.version}+1"
    report = evaluate_frames(model, test, renderer, name=model.version).attach_baseline(baseline)
    return CycleResult(model, report, baseline, added)


class ModelRegistry:
    """Directory of versioned model files plus a ``manifest.json`` of training provenance."""

    def __init__(self, root):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest_path = self.root / "manifest.json"
        self.manifest = (json.loads(self.manifest_path.read_text()) if self.manifest_path.exists()
                         else {"models": []})

    def register(self, model: FeatureClassifier, parent: Optional[str] = None) -> str:
        version = f"v{len(self.manifest['models']) + 1}"
        known = {m["version"] for m in self.manifest["models"]}
        if parent is not None and parent not in known:
            raise DataError(f"unknown parent model {parent}")
        model.version = version
        path = self.root / f"model-{version}.json"
        model.save(path)
        self.manifest["models"].append({"version": version, "file": path.name, "parent": parent,
                                        "provenance": model.provenance})
        self.manifest_path.write_text(json.dumps(self.manifest, sort_keys=True, indent=1) + "\n")
        return version

    def load(self, version: str) -> FeatureClassifier:
        for m in self.manifest["models"]:
            if m["version"] == version:
                return FeatureClassifier.load(self.root / m["file"])
        raise DataError(f"unknown model version {version}")
