"""Focal loss, adaptive-moment optimizer and plateau learning-rate schedule."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..errors import InvalidConfigError

PROB_EPS = 1e-7


@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.25
    gamma: float = 2.0
    initial_lr: float = 1e-4
    weight_decay: float = 0.0
    plateau_patience: int = 200
    lr_decay_factor: float = 0.5
    stop_lr: float = 1e-6
    # a loss must beat the running best by this much to count as improvement
    min_improvement: float = 1e-6
    max_iterations: int = 20_000
    batch_size: Optional[int] = None  # None: full batch
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidConfigError("alpha must lie in [0, 1]")
        if self.gamma < 0:
            raise InvalidConfigError("gamma must be >= 0")
        if not (self.initial_lr > 0 and self.stop_lr > 0 and self.stop_lr < self.initial_lr):
            raise InvalidConfigError("need 0 < stop_lr < initial_lr")
        if not 0.0 < self.lr_decay_factor < 1.0:
            raise InvalidConfigError("lr_decay_factor must lie in (0, 1)")
        if self.plateau_patience < 1:
            raise InvalidConfigError("plateau_patience must be >= 1")
        if self.batch_size is not None and self.batch_size < 1:
            raise InvalidConfigError("batch_size must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


def focal_loss(p, y, alpha: float = 0.25, gamma: float = 2.0):
    """Per-example focal loss ``-a_t (1 - p_t)**gamma * log(p_t)``.

    ``p`` is clamped to [1e-7, 1 - 1e-7]. Scalars in, scalar out.
    """
    p = np.clip(np.asarray(p, dtype=float), PROB_EPS, 1 - PROB_EPS)
    y = np.asarray(y).astype(bool)
    pt = np.where(y, p, 1 - p)
    at = np.where(y, alpha, 1 - alpha)
    loss = -at * (1 - pt) ** gamma * np.log(pt)
    return float(loss) if loss.ndim == 0 else loss


def sigmoid(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    ez = np.exp(-np.abs(z))
    return np.where(z >= 0, 1 / (1 + ez), ez / (1 + ez))


def focal_loss_logit_grad(z: np.ndarray, y: np.ndarray, alpha: float, gamma: float):
    """Focal loss and its derivative with respect to the logit ``z``."""
    p = sigmoid(z)
    clamped = (p < PROB_EPS) | (p > 1 - PROB_EPS)
    p = np.clip(p, PROB_EPS, 1 - PROB_EPS)
    y = np.asarray(y).astype(bool)
    pt = np.where(y, p, 1 - p)
    at = np.where(y, alpha, 1 - alpha)
    log_pt = np.log(pt)
    mod = (1 - pt) ** gamma
    loss = -at * mod * log_pt
    # dp_t/dz = +/- p_t (1 - p_t)
    dz = np.where(y, 1.0, -1.0) * at * mod * (gamma * pt * log_pt - (1 - pt))
    dz[clamped] = 0.0
    return loss, dz


class PlateauScheduler:
    """Decays the learning rate after ``patience`` steps without improvement.

    The first observed loss always counts as an improvement, and so does the
    first loss after each decay: a decay re-baselines the best loss, giving
    the new rate a full patience window. On a constant loss with patience 3
    the rate therefore drops at steps 4, 8, 12, ... ``stop`` turns true once
    the rate falls below ``stop_lr`` and stays true.
    """

    def __init__(self, initial_lr: float, patience: int, factor: float, stop_lr: float,
                 min_improvement: float = 1e-6):
        self.lr = initial_lr
        self.patience = patience
        self.factor = factor
        self.stop_lr = stop_lr
        self.min_improvement = min_improvement
        self.best = math.inf
        self.bad_steps = 0
        self.steps = 0
        self.decays = 0
        self.stopped = False

    @classmethod
    def from_config(cls, cfg: TrainConfig) -> "PlateauScheduler":
        return cls(cfg.initial_lr, cfg.plateau_patience, cfg.lr_decay_factor, cfg.stop_lr,
                   cfg.min_improvement)

    def step(self, loss: float) -> tuple[float, bool]:
        if not math.isfinite(loss):
            raise ValueError(f"loss must be finite, got {loss}")
        self.steps += 1
        if loss < self.best - self.min_improvement:
            self.best = loss
            self.bad_steps = 0
        else:
            self.bad_steps += 1
            if self.bad_steps >= self.patience:
                self.lr *= self.factor
                self.decays += 1
                self.bad_steps = 0
                self.best = math.inf
        self.stopped = self.stopped or self.lr < self.stop_lr
        return self.lr, self.stopped


def scheduler_step(state: PlateauScheduler, current_loss: float) -> tuple[float, bool]:
    return state.step(current_loss)


class Adam:
    """Adam with L2 weight decay folded into the gradient."""

    def __init__(self, shape, beta1=0.9, beta2=0.999, eps=1e-8, weight_decay=0.0):
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.weight_decay = weight_decay

    def step(self, params: np.ndarray, grad: np.ndarray, lr: float) -> np.ndarray:
        if self.weight_decay:
            grad = grad + self.weight_decay * params
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1 ** self.t)
        v_hat = self.v / (1 - self.beta2 ** self.t)
        return params - lr * m_hat / (np.sqrt(v_hat) + self.eps)
