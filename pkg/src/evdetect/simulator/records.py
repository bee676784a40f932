"""Record types shared by the simulator, training and the data engine."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Union

import numpy as np

from ..errors import DataError, InvalidConfigError
from ..geometry import CropRegion, TrackState

VEHICLE_TYPES = ("non_ev", "police", "fire", "ambulance")
EV_TYPES = VEHICLE_TYPES[1:]
CONFOUNDERS = (None, "brake", "amber")
SPLITS = (None, "train", "test")

MAX_TRACK_DURATION = 25.0


@dataclass(frozen=True)
class FlashPattern:
    """Beacon schedule: each bulb is lit for a contiguous run of frames per period."""

    mode: str = "periodic"
    period: int = 12
    bulbs: tuple = ((0, 0.5), (5, 0.5))
    target_all_off_fraction: float = 0.082

    def __post_init__(self):
        if self.mode not in ("periodic", "bernoulli"):
            raise InvalidConfigError(f"unknown flash mode {self.mode!r}")
        if self.period < 1:
            raise InvalidConfigError("flash period must be >= 1 frame")
        if not 0.0 <= self.target_all_off_fraction <= 1.0:
            raise InvalidConfigError("target_all_off_fraction must lie in [0, 1]")

    @classmethod
    def solve(cls, target: float, period_hint: int = 12, n_bulbs: int = 2,
              mode: str = "periodic", tol: float = 0.005) -> "FlashPattern":
        """Pick the shortest period >= ``period_hint`` whose dark-frame count
        approximates ``target`` within ``tol``, then tile the lit frames across
        ``n_bulbs`` overlapping runs."""
        if not 0.0 <= target <= 1.0:
            raise InvalidConfigError("target all-off fraction must lie in [0, 1]")
        period = period_hint
        for p in range(max(1, period_hint), max(1, period_hint) * 10 + 1):
            if abs(round(target * p) / p - target) <= tol:
                period = p
                break
        lit = period - round(target * period)
        bulbs = []
        seg = lit / n_bulbs
        for b in range(n_bulbs):
            start = round(b * seg)
            end = lit if b == n_bulbs - 1 else min(lit, round((b + 1) * seg) + 1)
            bulbs.append((start, (end - start) / period))
        return cls(mode, period, tuple(bulbs), target)

    @property
    def full_mask(self) -> int:
        return (1 << len(self.bulbs)) - 1

    def mask_at(self, frames: np.ndarray) -> np.ndarray:
        """Bitmask of lit bulbs at the given pattern-local frame numbers (periodic mode)."""
        frames = np.asarray(frames, dtype=np.int64)
        mask = np.zeros(frames.shape, dtype=np.uint8)
        for b, (offset, on_fraction) in enumerate(self.bulbs):
            on_frames = round(on_fraction * self.period)
            mask |= (((frames - offset) % self.period) < on_frames).astype(np.uint8) << b
        return mask

    def all_off_fraction(self) -> float:
        if self.mode == "bernoulli":
            return self.target_all_off_fraction
        return float(np.mean(self.mask_at(np.arange(self.period)) == 0))

    def to_dict(self) -> dict:
        return {"mode": self.mode, "period": self.period, "bulbs": [list(b) for b in self.bulbs],
                "target_all_off_fraction": self.target_all_off_fraction}

    @classmethod
    def from_dict(cls, d: dict) -> "FlashPattern":
        return cls(d["mode"], int(d["period"]), tuple(tuple(b) for b in d["bulbs"]),
                   float(d["target_all_off_fraction"]))


@dataclass(frozen=True)
class ActorProfile:
    """One simulated vehicle moving on a straight line in the camera frame."""

    track_id: Union[int, str]
    scene_id: str
    vehicle_type: str
    is_active: bool
    start_frame: int
    n_frames: int
    frame_rate: float
    start: tuple  # (x, y, z) meters at start_frame
    velocity: tuple  # (vx, vz) meters/second
    dims: tuple  # (length, width, height) meters
    yaw: float
    day: bool = True
    confounder: Optional[str] = None
    flash: Optional[FlashPattern] = None
    flash_phase: int = 0

    def __post_init__(self):
        if self.vehicle_type not in VEHICLE_TYPES:
            raise InvalidConfigError(f"unknown vehicle type {self.vehicle_type!r}")
        if self.vehicle_type == "non_ev" and self.is_active:
            raise InvalidConfigError("non-EV actors cannot be active")
        if self.n_frames / self.frame_rate > MAX_TRACK_DURATION + 1e-9:
            raise InvalidConfigError("track duration exceeds 25 s")

    @property
    def duration(self) -> float:
        return self.n_frames / self.frame_rate

    def state_at(self, frame_index: int) -> TrackState:
        dt = (frame_index - self.start_frame) / self.frame_rate
        x0, y0, z0 = self.start
        vx, vz = self.velocity
        length, width, height = self.dims
        return TrackState(self.track_id, frame_index / self.frame_rate, x0 + vx * dt, y0,
                          z0 + vz * dt, length, width, height, self.yaw)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["start"], d["velocity"], d["dims"] = list(self.start), list(self.velocity), list(self.dims)
        d["flash"] = self.flash.to_dict() if self.flash else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ActorProfile":
        d = dict(d)
        d["start"], d["velocity"], d["dims"] = tuple(d["start"]), tuple(d["velocity"]), tuple(d["dims"])
        d["flash"] = FlashPattern.from_dict(d["flash"]) if d.get("flash") else None
        return cls(**d)


@dataclass(frozen=True)
class FrameRecord:
    """Ground truth and (optionally) a classifier score for one track at one frame.

    JSON Lines schema (one object per line): ``scene_id``, ``track_id``,
    ``frame_index``, ``timestamp`` (s), ``vehicle_type``, ``is_active``,
    ``bulb_on``, ``bulb_mask``, ``day``, ``confounder``, ``crop`` (pixels),
    ``track`` (meters / radians), ``score``, ``split``, ``source``,
    ``provenance``.
    """

    scene_id: str
    track_id: Union[int, str]
    frame_index: int
    timestamp: float
    vehicle_type: str
    is_active: bool
    bulb_on: bool
    crop: CropRegion
    track: TrackState
    score: Optional[float] = None
    split: Optional[str] = None
    bulb_mask: int = 0
    day: bool = True
    confounder: Optional[str] = None
    source: str = "sim"
    provenance: Optional[str] = None

    def __post_init__(self):
        if self.bulb_on and not self.is_active:
            raise DataError(f"track {self.track_id} frame {self.frame_index}: bulb_on without is_active")
        if self.score is not None and not (0.0 <= self.score <= 1.0):
            raise DataError(f"track {self.track_id} frame {self.frame_index}: score outside [0, 1]")
        if self.split not in SPLITS:
            raise DataError(f"unknown split {self.split!r}")

    @property
    def label(self) -> bool:
        """Training label: an EV with its beacon lit in this frame."""
        return self.is_active and self.bulb_on

    @property
    def actor_key(self) -> tuple:
        return (self.scene_id, self.track_id)

    def replace(self, **changes) -> "FrameRecord":
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id, "track_id": self.track_id, "frame_index": self.frame_index,
            "timestamp": self.timestamp, "vehicle_type": self.vehicle_type,
            "is_active": self.is_active, "bulb_on": self.bulb_on, "bulb_mask": self.bulb_mask,
            "day": self.day, "confounder": self.confounder, "crop": self.crop.to_dict(),
            "track": self.track.to_dict(), "score": self.score, "split": self.split,
            "source": self.source, "provenance": self.provenance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FrameRecord":
        d = dict(d)
        d["crop"] = CropRegion.from_dict(d["crop"])
        d["track"] = TrackState.from_dict(d["track"])
        return cls(**d)
