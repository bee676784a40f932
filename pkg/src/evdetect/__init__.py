"""Active emergency-vehicle detection from tracked 3D boxes.

Subpackages and modules: ``geometry`` (box -> crop), ``simulator`` (scenes,
ground truth, patch rendering), ``classifier`` (focal loss, schedule, models),
``smoother`` (per-track cyclic buffer), ``augmentation``, ``data_engine``,
``evaluation`` and ``pipeline`` (per-frame orchestration, replay, bench).
"""

__version__ = "0.1.0"
