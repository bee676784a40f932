"""Counter-based hashing for reproducible per-record random draws.

Draws keyed by (seed, actor, frame, stream) do not depend on processing
order, which keeps batched, threaded and sequential runs bit-identical.
"""

from __future__ import annotations

import hashlib
from functools import lru_cache

import numpy as np

_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)


@lru_cache(maxsize=1 << 16)
def actor_hash(scene_id: str, track_id) -> int:
    digest = hashlib.blake2b(f"{scene_id}\x1f{track_id}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "little")


def _splitmix(x: np.ndarray) -> np.ndarray:
    with np.errstate(over="ignore"):
        x = x + _GOLDEN
        x = (x ^ (x >> np.uint64(30))) * _M1
        x = (x ^ (x >> np.uint64(27))) * _M2
        return x ^ (x >> np.uint64(31))


def hash_u64(seed: int, actor: np.ndarray, frame: np.ndarray, stream: int) -> np.ndarray:
    actor = np.asarray(actor, dtype=np.uint64)
    frame = np.asarray(frame, dtype=np.int64).astype(np.uint64)
    h = _splitmix(np.uint64(seed & 0xFFFFFFFFFFFFFFFF) ^ np.uint64(stream * 0x632BE59BD9B4E019 & 0xFFFFFFFFFFFFFFFF))
    h = _splitmix(h ^ actor)
    return _splitmix(h ^ frame)


def uniform(seed: int, actor, frame, stream: int) -> np.ndarray:
    """U[0, 1) draws with 53-bit resolution."""
    return (hash_u64(seed, actor, frame, stream) >> np.uint64(11)).astype(np.float64) * 2.0 ** -53
