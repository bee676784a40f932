"""Sectioned TOML configuration shared by the pipeline and the CLI.

Grammar (every section and key optional; unknown keys are rejected)::

    seed = 0                      # global seed, copied into every section without its own

    [camera]                      # CameraModel plus crop/patch settings
    focal_u = 1000.0              # px
    focal_v = 1000.0
    principal_u = 960.0
    principal_v = 600.0
    image_width = 1920
    image_height = 1200
    min_projected_width = 18.0    # px, crops narrower than this are skipped
    patch_size = 32               # side of the rendered/resized patch, px

    [render]                      # RenderConfig fields except patch_size

    [scene]                       # SceneConfig fields, e.g. actor_count, ev_fraction
    [scene.ev_type_fractions]     # police / fire / ambulance

    [smoother]                    # SmootherConfig fields
    [classifier]
    kind = "feature"              # feature | synthetic | oracle
    model_path = "model.json"     # must exist when given
    tpr = 0.95                    # synthetic only
    fpr = 0.05
    far_tpr = 0.6                 # optional
    score_jitter = 0.0

    [train]                       # TrainConfig fields
    [augment]
    positive_ratio = 2
    negative_downsample = 5

    [pipeline]
    workers = 1                   # >1 fans crop/classify out over threads
    latency_budget_ms = 10.0
    bench_tracks = 200
    bench_frames = 1000

    [output]
    dir = "runs"

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

import dataclasses
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .classifier import SyntheticClassifier, TrainConfig
from .errors import InvalidConfigError
from .geometry import DEFAULT_MIN_WIDTH, CameraModel
from .simulator import DEFAULT_CAMERA, RenderConfig, SceneConfig
from .smoother import SmootherConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CLASSIFIER_KINDS = ("feature", "synthetic", "oracle")


@dataclass(frozen=True)
class ClassifierConfig:
    kind: str = "feature"
    model_path: Optional[str] = None
    tpr: float = 0.95
    fpr: float = 0.05
    far_tpr: Optional[float] = None
    score_jitter: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in CLASSIFIER_KINDS:
            raise InvalidConfigError(f"classifier.kind must be one of {CLASSIFIER_KINDS}, got {self.kind!r}")
        for name in ("tpr", "fpr", "score_jitter"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise InvalidConfigError(f"classifier.{name} outside [0, 1]")
        if self.far_tpr is not None and not 0.0 <= self.far_tpr <= 1.0:
            raise InvalidConfigError("classifier.far_tpr outside [0, 1]")

    def synthetic(self) -> SyntheticClassifier:
        if self.kind == "oracle":
            return SyntheticClassifier(tpr=1.0, fpr=0.0, seed=self.seed)
        return SyntheticClassifier(self.tpr, self.fpr, self.far_tpr, score_jitter=self.score_jitter,
                                   seed=self.seed)


@dataclass(frozen=True)
class AugmentConfig:
    positive_ratio: int = 2
    negative_downsample: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.positive_ratio < 1 or self.negative_downsample < 1:
            raise InvalidConfigError("augment ratios must be >= 1")


@dataclass(frozen=True)
class RuntimeConfig:
    workers: int = 1
    latency_budget_ms: float = 10.0
    bench_tracks: int = 200
    bench_frames: int = 1000

    def __post_init__(self):
        if self.workers < 1:
            raise InvalidConfigError("pipeline.workers must be >= 1")
        if self.latency_budget_ms <= 0 or self.bench_tracks < 0 or self.bench_frames < 1:
            raise InvalidConfigError("pipeline latency/bench settings must be positive")


@dataclass(frozen=True)
class PipelineConfig:
    camera: CameraModel = DEFAULT_CAMERA
    min_width: float = DEFAULT_MIN_WIDTH
    render: RenderConfig = RenderConfig()
    scene: SceneConfig = field(default_factory=SceneConfig)
    smoother: SmootherConfig = SmootherConfig()
    classifier: ClassifierConfig = ClassifierConfig()
    train: TrainConfig = TrainConfig()
    augment: AugmentConfig = AugmentConfig()
    runtime: RuntimeConfig = RuntimeConfig()
    output_dir: str = "runs"
    seed: int = 0

    def __post_init__(self):
        if self.min_width < 0:
            raise InvalidConfigError("camera.min_projected_width must be >= 0")

    def with_seed(self, seed: int) -> "PipelineConfig":
        """Same config with every section's seed replaced by ``seed``."""
        return dataclasses.replace(
            self, seed=seed,
            scene=dataclasses.replace(self.scene, seed=seed),
            classifier=dataclasses.replace(self.classifier, seed=seed),
            train=dataclasses.replace(self.train, seed=seed),
            augment=dataclasses.replace(self.augment, seed=seed))

    @property
    def patch_size(self) -> int:
        return self.render.patch_size


_CAMERA_KEYS = {"focal_u", "focal_v", "principal_u", "principal_v", "image_width", "image_height"}


def _build(cls, section: str, values: dict, **extra):
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise InvalidConfigError(f"[{section}] unknown keys: {sorted(unknown)}")
    try:
        return cls(**{**extra, **values})
    except (TypeError, ValueError) as e:
        raise InvalidConfigError(f"[{section}] {e}") from e


def config_from_dict(doc: dict, base_dir: Path = Path(".")) -> PipelineConfig:
    doc = dict(doc)
    seed = doc.pop("seed", 0)
    if not isinstance(seed, int):
        raise InvalidConfigError("seed must be an integer")
    known = {"camera", "render", "scene", "smoother", "classifier", "train", "augment", "pipeline", "output"}
    unknown = set(doc) - known
    if unknown:
        raise InvalidConfigError(f"unknown sections: {sorted(unknown)}")

    cam = dict(doc.get("camera", {}))
    min_width = float(cam.pop("min_projected_width", DEFAULT_MIN_WIDTH))
    patch_size = cam.pop("patch_size", None)
    camera = _build(CameraModel, "camera", {k: cam[k] for k in cam if k in _CAMERA_KEYS},
                    **{k: getattr(DEFAULT_CAMERA, k) for k in _CAMERA_KEYS})
    if set(cam) - _CAMERA_KEYS:
        raise InvalidConfigError(f"[camera] unknown keys: {sorted(set(cam) - _CAMERA_KEYS)}")

    render = dict(doc.get("render", {}))
    if patch_size is not None:
        render["patch_size"] = patch_size
    scene = dict(doc.get("scene", {}))
    for key in ("depth_range",):
        if key in scene:
            scene[key] = tuple(scene[key])
    classifier = dict(doc.get("classifier", {}))
    if classifier.get("model_path"):
        path = Path(classifier["model_path"])
        path = path if path.is_absolute() else base_dir / path
        if not path.exists():
            raise InvalidConfigError(f"[classifier] model_path {path} does not exist")
        classifier["model_path"] = str(path)
    output = dict(doc.get("output", {}))
    if set(output) - {"dir"}:
        raise InvalidConfigError(f"[output] unknown keys: {sorted(set(output) - {'dir'})}")

    return PipelineConfig(
        camera=camera, min_width=min_width,
        render=_build(RenderConfig, "render", render),
        scene=_build(SceneConfig, "scene", scene, seed=seed),
        smoother=_build(SmootherConfig, "smoother", dict(doc.get("smoother", {}))),
        classifier=_build(ClassifierConfig, "classifier", classifier, seed=seed),
        train=_build(TrainConfig, "train", dict(doc.get("train", {})), seed=seed),
        augment=_build(AugmentConfig, "augment", dict(doc.get("augment", {})), seed=seed),
        runtime=_build(RuntimeConfig, "pipeline", dict(doc.get("pipeline", {}))),
        output_dir=str(output.get("dir", "runs")), seed=seed)


def load_config(path) -> PipelineConfig:
    path = Path(path)
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise InvalidConfigError(f"cannot read config {path}: {e}") from e
    except tomllib.TOMLDecodeError as e:
        raise InvalidConfigError(f"{path}: {e}") from e
    return config_from_dict(doc, path.parent)
