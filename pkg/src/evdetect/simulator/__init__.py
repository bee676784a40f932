"""Synthetic scene simulation: actors, per-frame ground truth and rendered crops."""

from .records import (CONFOUNDERS, EV_TYPES, MAX_TRACK_DURATION, VEHICLE_TYPES, ActorProfile,
                      FlashPattern, FrameRecord)
from .render import PatchRenderer, RenderConfig, RenderInputs, render_patch
from .scene import DEFAULT_CAMERA, FrameTable, SceneConfig, generate_scene, split_dataset

__all__ = [
    "ActorProfile", "CONFOUNDERS", "DEFAULT_CAMERA", "EV_TYPES", "FlashPattern", "FrameRecord",
    "FrameTable", "MAX_TRACK_DURATION", "PatchRenderer", "RenderConfig", "RenderInputs",
    "SceneConfig", "VEHICLE_TYPES", "generate_scene", "render_patch", "split_dataset",
]
