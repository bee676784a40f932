"""Fixed-length patch statistics used by the desk-scale classifier.

Every feature is invariant to mirroring the patch left-right.
"""

from __future__ import annotations

import numpy as np

FEATURE_SCHEMA_VERSION = 1
FEATURE_NAMES = (
    "max_brightness",
    "mean_r", "mean_g", "mean_b",
    "bright_fraction",
    "top_max", "bottom_max",
    "bright_r", "bright_g", "bright_b",
    "excess_mass",
    "radial_moment_1", "radial_moment_2",
    "vertical_moment",
)
N_FEATURES = len(FEATURE_NAMES)
# brightness above this counts as light-source excess
BRIGHT_LEVEL = 0.6


def extract_features(pixels: np.ndarray) -> np.ndarray:
    """Features for a batch of patches, (N, P, P, 3) -> (N, N_FEATURES) float64.

    A single (P, P, 3) patch yields a 1-D vector.
    """
    single = pixels.ndim == 3
    x = np.asarray(pixels, dtype=np.float32)
    if single:
        x = x[None]
    n, p = x.shape[0], x.shape[1]
    out = np.zeros((n, N_FEATURES))
    if n == 0:
        return out[0] if single else out
    flat = x.reshape(n, p * p, 3)
    bright = np.maximum(np.maximum(flat[..., 0], flat[..., 1]), flat[..., 2])
    half = p // 2
    out[:, 0] = bright.max(axis=1)
    out[:, 1:4] = np.matmul(np.ones((1, p * p), np.float32), flat)[:, 0, :] / (p * p)
    out[:, 4] = np.count_nonzero(bright > BRIGHT_LEVEL, axis=1) / (p * p)
    out[:, 5] = bright[:, :half * p].max(axis=1)
    out[:, 6] = bright[:, (p - half) * p:].max(axis=1)

    # float32 products keep this on the BLAS path; results are stored as float64
    excess = np.maximum(bright - np.float32(BRIGHT_LEVEL), 0)
    moments = excess @ _moment_basis(p)
    mass = moments[:, 0].astype(np.float64)
    safe = np.where(mass > 0, mass, 1.0)
    out[:, 7:10] = np.matmul(excess[:, None, :], flat)[:, 0, :] / safe[:, None]
    out[:, 10] = mass / (p * p)
    out[:, 11:14] = moments[:, 1:] / safe[:, None]
    return out[0] if single else out


_BASIS: dict = {}


def _moment_basis(p: int) -> np.ndarray:
    """Columns: unit weight, radius, squared radius, vertical offset (coords scaled by p/2)."""
    if p not in _BASIS:
        coord = (np.arange(p) - (p - 1) / 2) / (p / 2)
        r2 = coord[:, None] ** 2 + coord[None, :] ** 2
        vert = np.repeat(coord[:, None], p, axis=1)
        basis = [np.ones(p * p), np.sqrt(r2).ravel(), r2.ravel(), vert.ravel()]
        _BASIS[p] = np.stack(basis, axis=1).astype(np.float32)
    return _BASIS[p]
