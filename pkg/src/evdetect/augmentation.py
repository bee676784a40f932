"""Box-state augmentation for the rare positive class and train-set rebalancing."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import InsufficientDataError, InvalidConfigError, SamplingFailureError
from .geometry import DEFAULT_MIN_WIDTH, CameraModel, TrackState, crop_region
from .simulator import DEFAULT_CAMERA, FrameRecord

STATE_FIELDS = ("center_x", "center_y", "center_z", "length", "width", "height")
DIM_FIELDS = ("length", "width", "height")
MAX_ATTEMPTS = 100


@dataclass(frozen=True)
class StateDistribution:
    """Independent normal per box field."""

    mean: dict
    std: dict
    n: int = 0

    def __post_init__(self):
        for f in STATE_FIELDS:
            if self.std[f] < 0:
                raise InvalidConfigError(f"negative std for {f}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "StateDistribution":
        return cls(dict(d["mean"]), dict(d["std"]), int(d.get("n", 0)))


def fit_state_distribution(tracks: Sequence[TrackState]) -> StateDistribution:
    """Per-field sample mean and standard deviation (n - 1 denominator)."""
    if len(tracks) < 2:
        raise InsufficientDataError("need at least 2 tracks to fit a state distribution")
    data = np.array([[getattr(t, f) for f in STATE_FIELDS] for t in tracks], dtype=float)
    mean = data.mean(axis=0)
    std = data.std(axis=0, ddof=1)
    return StateDistribution(dict(zip(STATE_FIELDS, mean.tolist())), dict(zip(STATE_FIELDS, std.tolist())),
                             len(tracks))


def _draw(dist: StateDistribution, rng: np.random.Generator) -> dict:
    out = {}
    for f in STATE_FIELDS:
        value = rng.normal(dist.mean[f], dist.std[f]) if dist.std[f] > 0 else dist.mean[f]
        if f in DIM_FIELDS:
            for _ in range(MAX_ATTEMPTS - 1):
                if value > 0:
                    break
                value = rng.normal(dist.mean[f], dist.std[f]) if dist.std[f] > 0 else dist.mean[f]
            if value <= 0:
                raise SamplingFailureError(f"{f}: {MAX_ATTEMPTS} non-positive draws (degenerate fit)")
        out[f] = float(value)
    return out


def sample_augmented_box(dist: StateDistribution, seed) -> dict:
    """One box (center_x .. height) drawn field-by-field from ``dist``."""
    return _draw(dist, np.random.default_rng(seed))


def augment_record(rec: FrameRecord, dist: StateDistribution, seed, camera: CameraModel = DEFAULT_CAMERA,
                   min_width: float = DEFAULT_MIN_WIDTH, variant: int = 1) -> FrameRecord:
    """Copy of ``rec`` at a freshly sampled box whose crop passes the filters.

    Labels are kept verbatim; the crop is recomputed for the new box and the
    patch is re-rendered from it downstream.
    """
    rng = np.random.default_rng(seed)
    for _ in range(MAX_ATTEMPTS):
        box = _draw(dist, rng)
        t = rec.track
        track = TrackState(t.track_id, t.timestamp, box["center_x"], box["center_y"], box["center_z"],
                           box["length"], box["width"], box["height"], t.yaw)
        crop = crop_region(camera, track, min_width)
        if crop.valid:
            return rec.replace(track=track, crop=crop, source="augmented", score=None,
                               provenance=f"augmented:{variant}:{rec.source}")
    raise SamplingFailureError(f"no valid crop after {MAX_ATTEMPTS} sampled boxes")


def build_train_set(records: Sequence[FrameRecord], positive_ratio: int = 2, negative_downsample: int = 5,
                    seed: int = 0, camera: CameraModel = DEFAULT_CAMERA, min_width: float = DEFAULT_MIN_WIDTH,
                    dist: Optional[StateDistribution] = None) -> tuple[list[FrameRecord], Optional[StateDistribution]]:
    """Rebalance a training split.

    Every positive (active EV with lit beacon) is kept and joined by
    ``positive_ratio - 1`` augmented copies; exactly ``round(n / negative_downsample)``
    negatives are kept, chosen uniformly. Only valid-crop records take part.
    The fitted distribution (on positive boxes unless ``dist`` is given) is
    returned for audit.
    """
    if positive_ratio < 1 or negative_downsample < 1:
        raise InvalidConfigError("ratios must be >= 1")
    valid = [r for r in records if r.crop.valid]
    positives = [r for r in valid if r.label]
    negatives = [r for r in valid if not r.label]
    if dist is None and positive_ratio > 1 and positives:
        dist = fit_state_distribution([r.track for r in positives])

    out = []
    for i, rec in enumerate(positives):
        out.append(rec)
        for k in range(1, positive_ratio):
            out.append(augment_record(rec, dist, [seed, i, k], camera, min_width, k))
    rng = np.random.default_rng([seed, 1 << 20])
    keep = round(len(negatives) / negative_downsample)
    chosen = np.sort(rng.choice(len(negatives), size=keep, replace=False)) if keep else []
    out.extend(negatives[j] for j in chosen)
    return out, dist
