"""Per-track cyclic-buffer smoothing of per-frame active-EV outputs."""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import InvalidConfigError


@dataclass(frozen=True)
class SmootherConfig:
    buffer_capacity: int = 25
    min_frames: int = 6
    threshold_T: float = 0.5
    frame_decision_threshold: float = 0.5
    # None keeps history across any number of invalid frames
    reset_after_invalid: Optional[int] = None

    def __post_init__(self):
        if not (0 < self.min_frames <= self.buffer_capacity):
            raise InvalidConfigError("need 0 < min_frames <= buffer_capacity")
        if not (0.0 <= self.threshold_T <= 1.0):
            raise InvalidConfigError("threshold_T must lie in [0, 1]")
        if not (0.0 <= self.frame_decision_threshold <= 1.0):
            raise InvalidConfigError("frame_decision_threshold must lie in [0, 1]")
        if self.reset_after_invalid is not None and self.reset_after_invalid < 1:
            raise InvalidConfigError("reset_after_invalid must be >= 1")


@dataclass
class SmootherState:
    capacity: int = 25
    buffer: deque = field(default_factory=deque)
    positive_count: int = 0
    invalid_streak: int = 0

    @property
    def valid_count(self) -> int:
        return len(self.buffer)

    def push(self, score: float, crop_valid: bool, cfg: SmootherConfig) -> "SmootherState":
        if not crop_valid:
            if cfg.reset_after_invalid is not None:
                self.invalid_streak += 1
                if self.invalid_streak >= cfg.reset_after_invalid:
                    self.buffer.clear()
                    self.positive_count = 0
            return self
        self.invalid_streak = 0
        positive = bool(score >= cfg.frame_decision_threshold)
        if len(self.buffer) == cfg.buffer_capacity:
            self.positive_count -= self.buffer.popleft()
        self.buffer.append(positive)
        self.positive_count += positive
        return self

    def decide(self, cfg: SmootherConfig) -> bool:
        n = len(self.buffer)
        return n >= cfg.min_frames and self.positive_count / n > cfg.threshold_T

    def snapshot(self) -> tuple:
        return tuple(self.buffer), self.positive_count, self.invalid_streak


def new_state(cfg: SmootherConfig) -> SmootherState:
    return SmootherState(capacity=cfg.buffer_capacity)


def push(state: SmootherState, score: float, crop_valid: bool, cfg: SmootherConfig) -> SmootherState:
    return state.push(score, crop_valid, cfg)


def decide(state: SmootherState, cfg: SmootherConfig) -> bool:
    return state.decide(cfg)


def buffer_fractions(scores: np.ndarray, valid: np.ndarray, cfg: SmootherConfig) -> np.ndarray:
    """Positive fraction held in the buffer after each frame of one track.

    Entries are NaN where the buffer holds fewer than ``min_frames`` outputs,
    so ``fractions > T`` reproduces :meth:`SmootherState.decide` frame by frame.
    """
    scores = np.asarray(scores, dtype=float)
    valid = np.asarray(valid, dtype=bool)
    if cfg.reset_after_invalid is not None:
        state = new_state(cfg)
        out = np.full(len(scores), np.nan)
        for i, (s, ok) in enumerate(zip(scores, valid)):
            state.push(s, ok, cfg)
            if state.valid_count >= cfg.min_frames:
                out[i] = state.positive_count / state.valid_count
        return out
    positives = (scores[valid] >= cfg.frame_decision_threshold).astype(np.int64)
    cum = np.concatenate([[0], np.cumsum(positives)])
    k = np.arange(1, len(positives) + 1)
    count = np.minimum(k, cfg.buffer_capacity)
    frac = (cum[k] - cum[k - count]) / count
    frac[count < cfg.min_frames] = np.nan
    out = np.full(len(scores), np.nan)
    # invalid frames leave the state untouched: carry the last value forward
    idx = np.cumsum(valid) - 1
    has = idx >= 0
    out[has] = frac[idx[has]]
    return out


def decision_trace(scores: np.ndarray, valid: np.ndarray, cfg: SmootherConfig) -> np.ndarray:
    """Smoothed active-EV decision after every frame of one track."""
    frac = buffer_fractions(scores, valid, cfg)
    with np.errstate(invalid="ignore"):
        return np.nan_to_num(frac, nan=-1.0) > cfg.threshold_T
