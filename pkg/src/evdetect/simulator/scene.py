"""Synthetic driving scenes with class priors matching the fleet data summary."""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Union

import numpy as np

from .. import rand
from ..errors import InvalidConfigError
from ..geometry import (DEFAULT_MIN_WIDTH, CameraModel, TrackState, crop_arrays,
                        regions_from_arrays)
from .records import (CONFOUNDERS, EV_TYPES, MAX_TRACK_DURATION, SPLITS, VEHICLE_TYPES,
                      ActorProfile, FlashPattern, FrameRecord)

DEFAULT_CAMERA = CameraModel(1000.0, 1000.0, 960.0, 600.0, 1920, 1200)

# hash streams
_BERNOULLI_STREAM = 11
_TOGGLE_STREAM = 12
_SPLIT_STREAM = 13

_DIMS = {
    "car": (4.6, 1.85, 1.5),
    "truck": (9.0, 2.5, 3.2),
    "police": (5.0, 1.95, 1.55),
    "fire": (9.5, 2.5, 3.3),
    "ambulance": (6.5, 2.3, 2.8),
}
_CHUNK = 262_144


@dataclass(frozen=True)
class SceneConfig:
    scene_id: str = "scene-0"
    actor_count: int = 1000
    frame_rate: float = 10.0
    ev_fraction: float = 0.034
    ev_type_fractions: dict = field(default_factory=lambda: {"police": 0.800, "fire": 0.134, "ambulance": 0.066})
    active_fraction: float = 0.900
    all_off_fraction: float = 0.082
    flash_mode: str = "periodic"
    flash_period: int = 12
    n_bulbs: int = 2
    # per-frame probability that an EV flips activeness; 0 keeps it constant
    activeness_switch_prob: float = 0.0
    min_duration: float = 2.0
    max_duration: float = MAX_TRACK_DURATION
    scene_duration: Optional[float] = None
    day_fraction: float = 0.811
    confounder_rate: float = 0.05
    amber_fraction: float = 0.3
    depth_range: tuple = (6.0, 140.0)
    bearing_limit: float = 0.5
    speed_limit: float = 5.0
    camera_height: float = 1.6
    truck_fraction: float = 0.15
    seed: int = 0

    def __post_init__(self):
        if self.actor_count < 0:
            raise InvalidConfigError("actor_count must be >= 0")
        if self.frame_rate <= 0:
            raise InvalidConfigError("frame_rate must be positive")
        priors = {k: getattr(self, k) for k in ("ev_fraction", "active_fraction", "all_off_fraction",
                                                 "day_fraction", "confounder_rate", "amber_fraction",
                                                 "activeness_switch_prob", "truck_fraction")}
        priors.update({f"ev_type_fractions.{k}": v for k, v in self.ev_type_fractions.items()})
        for name, value in priors.items():
            if not 0.0 <= value <= 1.0:
                raise InvalidConfigError(f"{name}={value} outside [0, 1]")
        if set(self.ev_type_fractions) != set(EV_TYPES):
            raise InvalidConfigError(f"ev_type_fractions must cover exactly {EV_TYPES}")
        if abs(sum(self.ev_type_fractions.values()) - 1.0) > 1e-9:
            raise InvalidConfigError("ev_type_fractions must sum to 1")
        if not 0 < self.min_duration <= self.max_duration <= MAX_TRACK_DURATION:
            raise InvalidConfigError("need 0 < min_duration <= max_duration <= 25 s")
        if self.scene_duration is not None and self.scene_duration < self.max_duration:
            raise InvalidConfigError("scene_duration must cover max_duration")
        if self.flash_mode not in ("periodic", "bernoulli"):
            raise InvalidConfigError(f"unknown flash mode {self.flash_mode!r}")

    @property
    def flash_pattern(self) -> FlashPattern:
        if self.flash_mode == "bernoulli":
            return FlashPattern("bernoulli", 1, tuple((0, 1.0) for _ in range(self.n_bulbs)),
                                self.all_off_fraction)
        return FlashPattern.solve(self.all_off_fraction, self.flash_period, self.n_bulbs)

    @property
    def scene_frames(self) -> int:
        return int(round((self.scene_duration or self.max_duration) * self.frame_rate))


class FrameTable(Sequence):
    """Columnar store of FrameRecords for one or more simulated scenes.

    Rows are kept as integer columns (actor index, frame index, bulb mask);
    box states and crops are derived from the actor trajectories on demand,
    so scenes with millions of frames stay cheap. Indexing or iterating
    yields :class:`FrameRecord` objects.
    """

    def __init__(self, actors: list[ActorProfile], actor_idx: np.ndarray, frame_index: np.ndarray,
                 bulb_mask: np.ndarray, row_active: np.ndarray, camera: CameraModel = DEFAULT_CAMERA,
                 min_width: float = DEFAULT_MIN_WIDTH, scores: Optional[np.ndarray] = None,
                 actor_split: Optional[np.ndarray] = None):
        self.actors = actors
        self.actor_idx = np.asarray(actor_idx, dtype=np.int64)
        self.frame_index = np.asarray(frame_index, dtype=np.int64)
        self.bulb_mask = np.asarray(bulb_mask, dtype=np.uint8)
        self.row_active = np.asarray(row_active, dtype=bool)
        self.camera = camera
        self.min_width = min_width
        self.scores = scores
        self.actor_split = (np.zeros(len(actors), dtype=np.int8) if actor_split is None
                            else np.asarray(actor_split, dtype=np.int8))
        self._actor_cols = None
        self._crops = None

    # -- actor-level columns -------------------------------------------------
    @property
    def actor_columns(self) -> dict[str, np.ndarray]:
        if self._actor_cols is None:
            a = self.actors
            self._actor_cols = {
                "hash": np.array([rand.actor_hash(p.scene_id, p.track_id) for p in a], dtype=np.uint64),
                "vehicle": np.array([VEHICLE_TYPES.index(p.vehicle_type) for p in a], dtype=np.int8),
                "is_active": np.array([p.is_active for p in a], dtype=bool),
                "confounder": np.array([CONFOUNDERS.index(p.confounder) for p in a], dtype=np.int8),
                "day": np.array([p.day for p in a], dtype=bool),
                "start_frame": np.array([p.start_frame for p in a], dtype=np.int64),
                "frame_rate": np.array([p.frame_rate for p in a], dtype=float),
                "start": np.array([p.start for p in a], dtype=float).reshape(-1, 3),
                "velocity": np.array([p.velocity for p in a], dtype=float).reshape(-1, 2),
                "dims": np.array([p.dims for p in a], dtype=float).reshape(-1, 3),
                "yaw": np.array([p.yaw for p in a], dtype=float),
            }
        return self._actor_cols

    # -- row-level columns ---------------------------------------------------
    def __len__(self) -> int:
        return len(self.actor_idx)

    @property
    def labels(self) -> np.ndarray:
        return self.row_active & (self.bulb_mask > 0)

    @property
    def bulb_on(self) -> np.ndarray:
        return self.bulb_mask > 0

    @property
    def row_hash(self) -> np.ndarray:
        return self.actor_columns["hash"][self.actor_idx]

    @property
    def split(self) -> np.ndarray:
        return self.actor_split[self.actor_idx]

    def timestamps(self, rows=slice(None)) -> np.ndarray:
        return self.frame_index[rows] / self.actor_columns["frame_rate"][self.actor_idx[rows]]

    def states(self, rows=slice(None)) -> tuple[np.ndarray, ...]:
        """(cx, cy, cz, length, width, height, yaw) columns for the selected rows."""
        c = self.actor_columns
        a = self.actor_idx[rows]
        dt = (self.frame_index[rows] - c["start_frame"][a]) / c["frame_rate"][a]
        start, vel, dims = c["start"][a], c["velocity"][a], c["dims"][a]
        return (start[:, 0] + vel[:, 0] * dt, start[:, 1], start[:, 2] + vel[:, 1] * dt,
                dims[:, 0], dims[:, 1], dims[:, 2], c["yaw"][a])

    def crop_columns(self) -> dict[str, np.ndarray]:
        if self._crops is None:
            parts = []
            for lo in range(0, len(self), _CHUNK):
                rows = slice(lo, min(len(self), lo + _CHUNK))
                parts.append(crop_arrays(self.camera, *self.states(rows), min_width=self.min_width))
            if parts:
                self._crops = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
            else:
                self._crops = crop_arrays(self.camera, *([np.zeros(0)] * 7), min_width=self.min_width)
        return self._crops

    @property
    def valid(self) -> np.ndarray:
        return self.crop_columns()["valid"]

    @property
    def ranges(self) -> np.ndarray:
        cx, _, cz, *_ = self.states()
        return np.hypot(cx, cz)

    # -- record views --------------------------------------------------------
    def records(self, rows: Iterable[int]) -> list[FrameRecord]:
        rows = np.asarray(list(rows) if not isinstance(rows, np.ndarray) else rows, dtype=np.int64)
        if len(rows) == 0:
            return []
        crops = self.crop_columns()
        regions = regions_from_arrays({k: v[rows] for k, v in crops.items()})
        states = [col.tolist() for col in self.states(rows)]
        ts = self.timestamps(rows).tolist()
        out = []
        for j, r in enumerate(rows.tolist()):
            p = self.actors[self.actor_idx[r]]
            track = TrackState(p.track_id, ts[j], states[0][j], states[1][j], states[2][j],
                               states[3][j], states[4][j], states[5][j], states[6][j])
            mask = int(self.bulb_mask[r])
            out.append(FrameRecord(
                p.scene_id, p.track_id, int(self.frame_index[r]), ts[j], p.vehicle_type,
                bool(self.row_active[r]), mask > 0, regions[j], track,
                None if self.scores is None or np.isnan(self.scores[r]) else float(self.scores[r]),
                SPLITS[self.actor_split[self.actor_idx[r]]], mask, p.day, p.confounder))
        return out

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self.records(range(*i.indices(len(self))))
        if i < 0:
            i += len(self)
        if not 0 <= i < len(self):
            raise IndexError(i)
        return self.records([i])[0]

    def __iter__(self) -> Iterator[FrameRecord]:
        for lo in range(0, len(self), 4096):
            yield from self.records(range(lo, min(len(self), lo + 4096)))

    # -- derived tables ------------------------------------------------------
    def _derive(self, rows=None, **overrides) -> "FrameTable":
        rows = slice(None) if rows is None else rows
        kw = dict(actors=self.actors, actor_idx=self.actor_idx[rows], frame_index=self.frame_index[rows],
                  bulb_mask=self.bulb_mask[rows], row_active=self.row_active[rows], camera=self.camera,
                  min_width=self.min_width, scores=None if self.scores is None else self.scores[rows],
                  actor_split=self.actor_split)
        kw.update(overrides)
        t = FrameTable(**kw)
        t._actor_cols = self._actor_cols
        if self._crops is not None and "camera" not in overrides and "min_width" not in overrides:
            t._crops = {k: v[rows] for k, v in self._crops.items()}
        return t

    def with_scores(self, scores: np.ndarray) -> "FrameTable":
        scores = np.asarray(scores, dtype=float)
        if scores.shape != (len(self),):
            raise ValueError("one score per row required")
        return self._derive(scores=scores)

    def with_split(self, actor_split: np.ndarray) -> "FrameTable":
        return self._derive(actor_split=actor_split)

    def select(self, rows: np.ndarray) -> "FrameTable":
        return self._derive(rows=np.asarray(rows))

    def frame_order(self) -> np.ndarray:
        """Row indices sorted by (frame_index, actor order)."""
        return np.lexsort((self.actor_idx, self.frame_index))


def _wrap_angle(a: np.ndarray) -> np.ndarray:
    return (a + np.pi) % (2 * np.pi) - np.pi


def generate_scene(cfg: SceneConfig, camera: CameraModel = DEFAULT_CAMERA,
                   min_width: float = DEFAULT_MIN_WIDTH) -> tuple[list[ActorProfile], FrameTable]:
    """Draw actors and their per-frame ground truth; deterministic in ``cfg.seed``."""
    rng = np.random.default_rng(cfg.seed)
    n = cfg.actor_count
    pattern = cfg.flash_pattern

    is_ev = rng.random(n) < cfg.ev_fraction
    ev_names = list(EV_TYPES)
    ev_probs = np.array([cfg.ev_type_fractions[t] for t in ev_names])
    ev_kind = rng.choice(len(ev_names), size=n, p=ev_probs)
    is_active = is_ev & (rng.random(n) < cfg.active_fraction)
    is_truck = rng.random(n) < cfg.truck_fraction
    dim_jitter = np.clip(rng.normal(1.0, 0.05, size=(n, 3)), 0.8, 1.2)
    durations = rng.uniform(cfg.min_duration, cfg.max_duration, size=n)
    n_frames = np.maximum(1, np.floor(durations * cfg.frame_rate + 1e-9).astype(np.int64))
    start_frame = np.floor(rng.random(n) * (cfg.scene_frames - n_frames + 1)).astype(np.int64)
    depth = rng.uniform(*cfg.depth_range, size=n)
    bearing = rng.uniform(-cfg.bearing_limit, cfg.bearing_limit, size=n)
    vz = rng.uniform(-cfg.speed_limit, cfg.speed_limit, size=n)
    vx = rng.normal(0.0, 0.2, size=n)
    yaw = _wrap_angle(np.pi / 2 + rng.normal(0.0, 0.1, size=n))
    day = rng.random(n) < cfg.day_fraction
    has_conf = ~is_ev & (rng.random(n) < cfg.confounder_rate)
    amber = rng.random(n) < cfg.amber_fraction
    phase = rng.integers(0, pattern.period, size=n)

    actors = []
    for i in range(n):
        if is_ev[i]:
            vtype = ev_names[ev_kind[i]]
            base = _DIMS[vtype]
        else:
            vtype = "non_ev"
            base = _DIMS["truck" if is_truck[i] else "car"]
        dims = tuple(float(b * j) for b, j in zip(base, dim_jitter[i]))
        conf = ("amber" if amber[i] else "brake") if has_conf[i] else None
        actors.append(ActorProfile(
            track_id=i, scene_id=cfg.scene_id, vehicle_type=vtype, is_active=bool(is_active[i]),
            start_frame=int(start_frame[i]), n_frames=int(n_frames[i]), frame_rate=cfg.frame_rate,
            start=(float(depth[i] * math.tan(bearing[i])), cfg.camera_height - dims[2] / 2, float(depth[i])),
            velocity=(float(vx[i]), float(vz[i])), dims=dims, yaw=float(yaw[i]), day=bool(day[i]),
            confounder=conf, flash=pattern if is_ev[i] else None, flash_phase=int(phase[i])))

    actor_idx = np.repeat(np.arange(n), n_frames)
    seg_start = np.concatenate([[0], np.cumsum(n_frames)[:-1]]).astype(np.int64)
    local = np.arange(len(actor_idx)) - np.repeat(seg_start, n_frames)
    frame_index = start_frame[actor_idx] + local

    row_active = is_active[actor_idx]
    if cfg.activeness_switch_prob > 0:
        hashes = np.array([rand.actor_hash(cfg.scene_id, i) for i in range(n)], dtype=np.uint64)
        flips = (rand.uniform(cfg.seed, hashes[actor_idx], frame_index, _TOGGLE_STREAM)
                 < cfg.activeness_switch_prob) & is_ev[actor_idx] & (local > 0)
        cum = np.cumsum(flips)
        within = cum - np.repeat(cum[seg_start] - flips[seg_start], n_frames)
        row_active = row_active ^ (within % 2 == 1)
        row_active &= is_ev[actor_idx]

    bulb_mask = np.zeros(len(actor_idx), dtype=np.uint8)
    rows = np.flatnonzero(row_active)
    if len(rows):
        if pattern.mode == "periodic":
            bulb_mask[rows] = pattern.mask_at(local[rows] + phase[actor_idx[rows]])
        else:
            hashes = np.array([rand.actor_hash(cfg.scene_id, i) for i in range(n)], dtype=np.uint64)
            u = rand.uniform(cfg.seed, hashes[actor_idx[rows]], frame_index[rows], _BERNOULLI_STREAM)
            bulb_mask[rows] = np.where(u >= pattern.target_all_off_fraction, pattern.full_mask, 0)

    table = FrameTable(actors, actor_idx, frame_index, bulb_mask, row_active, camera, min_width)
    return actors, table


def _split_codes(hashes: np.ndarray, ratio: tuple[int, int], seed: int) -> np.ndarray:
    train, test = ratio
    if train < 0 or test < 0 or train + test == 0:
        raise InvalidConfigError(f"invalid split ratio {ratio}")
    u = rand.uniform(seed, hashes, np.zeros(len(hashes), dtype=np.int64), _SPLIT_STREAM)
    return np.where(u < train / (train + test), 1, 2).astype(np.int8)


def split_dataset(records: Union[FrameTable, Sequence[FrameRecord]], ratio: tuple[int, int] = (3, 1),
                  seed: int = 0):
    """Assign train/test per actor at ``train:test`` odds.

    Each actor's split depends only on (seed, scene id, track id), so the
    same actor lands in the same split wherever it appears.
    """
    if isinstance(records, FrameTable):
        return records.with_split(_split_codes(records.actor_columns["hash"], ratio, seed))
    keys = sorted({r.actor_key for r in records}, key=lambda k: (k[0], str(k[1])))
    hashes = np.array([rand.actor_hash(*k) for k in keys], dtype=np.uint64)
    codes = dict(zip(keys, _split_codes(hashes, ratio, seed).tolist()))
    return [r.replace(split=SPLITS[codes[r.actor_key]]) for r in records]
