"""Synthetic crop renderer: clutter background plus beacon or confounder blobs."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Sequence

import numpy as np

from .. import rand
from ..errors import InvalidConfigError, InvalidRegionError
from ..geometry import ImagePatch
from .records import CONFOUNDERS, VEHICLE_TYPES, FrameRecord

_RENDER_STREAM = 21

RED = (1.0, 0.15, 0.1)
BLUE = (0.15, 0.35, 1.0)
WHITE = (1.0, 1.0, 1.0)
BRAKE_RED = (1.0, 0.1, 0.05)
AMBER = (1.0, 0.6, 0.0)

# bulb colours by vehicle type (bulb 0, bulb 1)
BULB_COLORS = {"police": (RED, BLUE), "fire": (RED, RED), "ambulance": (RED, WHITE)}


@dataclass(frozen=True)
class RenderConfig:
    patch_size: int = 32
    background_ceiling: float = 0.6
    noise_amplitude: float = 0.2
    night_scale: float = 0.5
    blob_sigma: float = 0.06  # fraction of patch_size
    near_range: float = 20.0  # meters; beacons are at full brightness inside this range
    far_floor: float = 0.62  # beacon peak intensity as range -> infinity
    confounder_gain: float = 0.95
    bank_size: int = 64

    def __post_init__(self):
        if self.patch_size < 4:
            raise InvalidConfigError("patch_size must be >= 4")
        if not 0 < self.noise_amplitude < self.background_ceiling <= 1.0:
            raise InvalidConfigError("need 0 < noise_amplitude < background_ceiling <= 1")

    def peak(self, ranges: np.ndarray) -> np.ndarray:
        """Beacon peak intensity, falling off inversely with range."""
        ranges = np.maximum(np.asarray(ranges, dtype=float), 1e-6)
        return self.far_floor + (1.0 - self.far_floor) * np.minimum(1.0, self.near_range / ranges)


class RenderInputs(NamedTuple):
    actor_hash: np.ndarray
    frame_index: np.ndarray
    bulb_mask: np.ndarray
    vehicle: np.ndarray  # index into VEHICLE_TYPES
    confounder: np.ndarray  # index into CONFOUNDERS
    day: np.ndarray
    range_m: np.ndarray

    @classmethod
    def from_records(cls, records: Sequence[FrameRecord]) -> "RenderInputs":
        return cls(
            np.array([rand.actor_hash(r.scene_id, r.track_id) for r in records], dtype=np.uint64),
            np.array([r.frame_index for r in records], dtype=np.int64),
            np.array([r.bulb_mask if r.bulb_on else 0 for r in records], dtype=np.uint8),
            np.array([VEHICLE_TYPES.index(r.vehicle_type) for r in records], dtype=np.int8),
            np.array([CONFOUNDERS.index(r.confounder) for r in records], dtype=np.int8),
            np.array([r.day for r in records], dtype=bool),
            np.array([np.hypot(r.track.center_x, r.track.center_z) for r in records], dtype=float),
        )

    @classmethod
    def from_table(cls, table, rows) -> "RenderInputs":
        rows = np.asarray(rows, dtype=np.int64)
        c = table.actor_columns
        a = table.actor_idx[rows]
        cx, _, cz, *_ = table.states(rows)
        mask = np.where(table.row_active[rows], table.bulb_mask[rows], 0).astype(np.uint8)
        return cls(c["hash"][a], table.frame_index[rows], mask, c["vehicle"][a], c["confounder"][a],
                   c["day"][a], np.hypot(cx, cz))


@lru_cache(maxsize=8)
def _noise_bank(seed: int, patch_size: int, bank_size: int) -> np.ndarray:
    bank = np.random.default_rng([seed, patch_size, 7]).random((bank_size, patch_size, patch_size, 3))
    # tiled 2x2 so every cyclic shift is a contiguous window
    bank = np.tile(bank.astype(np.float32), (1, 2, 2, 1))
    bank.setflags(write=False)
    return bank


class PatchRenderer:
    """Deterministic renderer; each patch depends only on (seed, actor, frame)."""

    def __init__(self, cfg: RenderConfig = RenderConfig(), seed: int = 0):
        self.cfg = cfg
        self.seed = seed
        p = cfg.patch_size
        noise = _noise_bank(seed, p, cfg.bank_size)
        # day tiles first, then night tiles, both pre-scaled by the noise amplitude
        amp = np.float32(cfg.noise_amplitude)
        self._bank = np.concatenate([noise * amp, noise * (amp * np.float32(cfg.night_scale))])
        self._windows = np.lib.stride_tricks.sliding_window_view(self._bank, (p, p, 3), axis=(1, 2, 3))
        p = cfg.patch_size
        self._sigma2 = np.float32(2 * (cfg.blob_sigma * p) ** 2)
        self._half = int(np.ceil(3 * cfg.blob_sigma * p))

    def _blend(self, out, rows, cu, cv, color, peak):
        """Blend a Gaussian blob into ``out[rows]`` inside a +-3 sigma window."""
        if len(rows) == 0:
            return
        p = self.cfg.patch_size
        k = min(p, 2 * self._half + 1)
        u0 = np.clip(cu.astype(np.int64) - self._half, 0, p - k)
        v0 = np.clip(cv.astype(np.int64) - self._half, 0, p - k)
        win = np.arange(k)
        uu = u0[:, None] + win[None, :]
        vv = v0[:, None] + win[None, :]
        gx = np.exp(-((uu.astype(np.float32) - cu[:, None]) ** 2) / self._sigma2)
        gy = np.exp(-((vv.astype(np.float32) - cv[:, None]) ** 2) / self._sigma2)
        g = (gy[:, :, None] * gx[:, None, :])[..., None]
        target = np.asarray(color, dtype=np.float32)[None, None, None, :] * peak[:, None, None, None]
        idx = (rows[:, None, None], vv[:, :, None], uu[:, None, :])
        out[idx] = np.minimum(out[idx] * (1 - g) + target * g, np.float32(1.0))

    def render_batch(self, inp: RenderInputs) -> np.ndarray:
        """Pixels for N rows as a float32 (N, P, P, 3) array in [0, 1]."""
        cfg = self.cfg
        p = cfg.patch_size
        n = len(inp.actor_hash)
        if n == 0:
            return np.zeros((0, p, p, 3), dtype=np.float32)
        h = rand.hash_u64(self.seed, inp.actor_hash, inp.frame_index, _RENDER_STREAM)
        tile = (h % np.uint64(cfg.bank_size)).astype(np.int64)
        dy = ((h >> np.uint64(8)) % np.uint64(p)).astype(np.int64)
        dx = ((h >> np.uint64(16)) % np.uint64(p)).astype(np.int64)
        base_u = ((h >> np.uint64(24)) & np.uint64(0xFFFF)).astype(np.float32) / np.float32(65535)
        jit_u = ((h >> np.uint64(40)) % np.uint64(3)).astype(np.float32) - 1
        jit_v = ((h >> np.uint64(44)) % np.uint64(3)).astype(np.float32) - 1

        base_max = cfg.background_ceiling - cfg.noise_amplitude
        base = np.float32(0.15) + (np.float32(base_max) - np.float32(0.15)) * base_u
        scale = np.where(inp.day, np.float32(1.0), np.float32(cfg.night_scale)).astype(np.float32)
        tile = np.where(inp.day, tile, tile + cfg.bank_size)
        out = self._windows[tile, dy, dx, 0]
        out += (base * scale)[:, None, None, None]

        peak = cfg.peak(inp.range_m).astype(np.float32)
        lit = np.flatnonzero(inp.bulb_mask)
        for vcode, vname in enumerate(VEHICLE_TYPES):
            if vname not in BULB_COLORS:
                continue
            for b, (bu, color) in enumerate(zip((0.38, 0.62), BULB_COLORS[vname])):
                rows = lit[(inp.vehicle[lit] == vcode) & ((inp.bulb_mask[lit] >> b) & 1 == 1)]
                self._blend(out, rows, np.round(bu * p) + jit_u[rows], np.round(0.22 * p) + jit_v[rows],
                            color, peak[rows])
        cpeak = peak * np.float32(cfg.confounder_gain)
        brake = np.flatnonzero(inp.confounder == CONFOUNDERS.index("brake"))
        for bu in (0.25, 0.75):
            self._blend(out, brake, np.round(bu * p) + jit_u[brake], np.round(0.62 * p) + jit_v[brake],
                        BRAKE_RED, cpeak[brake])
        amber = np.flatnonzero(inp.confounder == CONFOUNDERS.index("amber"))
        self._blend(out, amber, np.round(0.5 * p) + jit_u[amber], np.round(0.2 * p) + jit_v[amber],
                    AMBER, cpeak[amber])
        return out

    def render_records(self, records: Sequence[FrameRecord]) -> np.ndarray:
        for r in records:
            if not r.crop.valid:
                raise InvalidRegionError(f"track {r.track_id} frame {r.frame_index}: crop is invalid")
        return self.render_batch(RenderInputs.from_records(records))

    def render(self, rec: FrameRecord) -> ImagePatch:
        pixels = self.render_records([rec])[0]
        return ImagePatch(pixels, rec.crop, rec.scene_id, rec.track_id, rec.frame_index, rec.label)


def render_patch(rec: FrameRecord, rng_seed: int, cfg: RenderConfig = RenderConfig()) -> ImagePatch:
    return PatchRenderer(cfg, rng_seed).render(rec)
