"""Pinhole projection of 3D track boxes and square crop extraction.

Camera frame convention: x right, y down, z forward (meters). Image
coordinates: u right, v down (pixels), origin at the top-left corner.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import asdict, dataclass
from enum import Enum
from typing import Optional, Sequence, Union

import numpy as np

from .errors import BehindCameraError, InvalidConfigError, InvalidRegionError

EPSILON_Z = 0.1
DEFAULT_MIN_WIDTH = 18.0
DEFAULT_PATCH_SIZE = 224

# (length, width, height) sign pattern of the 8 box corners
_CORNER_SIGNS = np.array(list(itertools.product((-1.0, 1.0), repeat=3)))


class InvalidReason(str, Enum):
    BEHIND_CAMERA = "behind_camera"
    CENTROID_OUT_OF_FOV = "centroid_out_of_fov"
    BELOW_MIN_WIDTH = "below_min_width"


@dataclass(frozen=True)
class CameraModel:
    focal_u: float
    focal_v: float
    principal_u: float
    principal_v: float
    image_width: int
    image_height: int

    def __post_init__(self):
        if not (self.focal_u > 0 and self.focal_v > 0):
            raise InvalidConfigError("focal lengths must be positive")
        if not (self.image_width > 0 and self.image_height > 0):
            raise InvalidConfigError("image dimensions must be positive")
        if not (0 <= self.principal_u <= self.image_width and 0 <= self.principal_v <= self.image_height):
            raise InvalidConfigError("principal point must lie inside the image")

    def in_bounds(self, u: float, v: float) -> bool:
        return 0.0 <= u < self.image_width and 0.0 <= v < self.image_height


@dataclass(frozen=True)
class TrackState:
    track_id: Union[int, str]
    timestamp: float
    center_x: float
    center_y: float
    center_z: float
    length: float
    width: float
    height: float
    yaw: float = 0.0

    def __post_init__(self):
        if not (self.length > 0 and self.width > 0 and self.height > 0):
            raise InvalidConfigError(f"track {self.track_id}: box dimensions must be positive")
        if not (-math.pi <= self.yaw < math.pi):
            raise InvalidConfigError(f"track {self.track_id}: yaw must lie in [-pi, pi)")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrackState":
        return cls(**d)


@dataclass(frozen=True)
class CropRegion:
    center_u: float
    center_v: float
    side: float
    valid: bool
    invalid_reason: Optional[InvalidReason] = None
    # mean of the projected corners; drives the field-of-view filter
    centroid_u: float = 0.0
    centroid_v: float = 0.0
    # u-axis extent of the projected corners; drives the width filter
    projected_width: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["invalid_reason"] = self.invalid_reason.value if self.invalid_reason else None
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "CropRegion":
        d = dict(d)
        if d.get("invalid_reason") is not None:
            d["invalid_reason"] = InvalidReason(d["invalid_reason"])
        return cls(**d)


@dataclass
class ImagePatch:
    """Fixed-size RGB crop fed to a classifier.

    ``scene_id``, ``track_id``, ``frame_index`` and ``label`` are optional
    metadata attached by the simulator's renderer; only the noise-model
    classifier reads them.
    """

    pixels: np.ndarray
    source_region: CropRegion
    scene_id: Optional[str] = None
    track_id: Union[int, str, None] = None
    frame_index: Optional[int] = None
    label: Optional[bool] = None

    @property
    def patch_size(self) -> int:
        return self.pixels.shape[0]


def project_point(cam: CameraModel, p: Sequence[float]) -> tuple[float, float]:
    x, y, z = (float(c) for c in p)
    if z <= EPSILON_Z:
        raise BehindCameraError(f"point depth {z} is not in front of the camera")
    return cam.focal_u * x / z + cam.principal_u, cam.focal_v * y / z + cam.principal_v


def _corners_batch(cx, cy, cz, length, width, height, yaw) -> np.ndarray:
    """Corners for N boxes as an (N, 8, 3) array."""
    cx, cy, cz = (np.asarray(a, dtype=float)[:, None] for a in (cx, cy, cz))
    # math.cos per box keeps results independent of array length
    cos = np.array([math.cos(a) for a in np.asarray(yaw, dtype=float)])[:, None]
    sin = np.array([math.sin(a) for a in np.asarray(yaw, dtype=float)])[:, None]
    dl = _CORNER_SIGNS[None, :, 0] * (np.asarray(length, dtype=float)[:, None] / 2)
    dw = _CORNER_SIGNS[None, :, 1] * (np.asarray(width, dtype=float)[:, None] / 2)
    dh = _CORNER_SIGNS[None, :, 2] * (np.asarray(height, dtype=float)[:, None] / 2)
    x = cx + (cos * dl - sin * dw)
    y = cy + dh
    z = cz + (sin * dl + cos * dw)
    return np.stack([x, y, z], axis=-1)


def box_corners(t: TrackState) -> np.ndarray:
    """The 8 corners of the yaw-rotated box, shape (8, 3).

    Yaw rotates the length axis (x at yaw=0) towards z in the ground plane;
    height is along the camera y axis.
    """
    return _corners_batch([t.center_x], [t.center_y], [t.center_z],
                          [t.length], [t.width], [t.height], [t.yaw])[0]


def _states_to_columns(tracks: Sequence[TrackState]):
    cols = np.array([[t.center_x, t.center_y, t.center_z, t.length, t.width, t.height, t.yaw]
                     for t in tracks], dtype=float).reshape(-1, 7)
    return cols.T


REASON_CODES = (None, InvalidReason.BEHIND_CAMERA, InvalidReason.CENTROID_OUT_OF_FOV,
                InvalidReason.BELOW_MIN_WIDTH)


def crop_arrays(cam: CameraModel, cx, cy, cz, length, width, height, yaw,
                min_width: float = DEFAULT_MIN_WIDTH) -> dict[str, np.ndarray]:
    """Columnar crop computation for N boxes.

    Returns arrays ``center_u, center_v, side, centroid_u, centroid_v,
    projected_width, valid`` and ``reason`` (index into ``REASON_CODES``).
    Behind-camera rows carry zeros in the geometric columns.
    """
    if min_width <= 0:
        raise InvalidConfigError("min_width must be positive")
    corners = _corners_batch(cx, cy, cz, length, width, height, yaw)
    x, y, z = corners[..., 0], corners[..., 1], corners[..., 2]
    behind = (z <= EPSILON_Z).any(axis=1)
    safe_z = np.where(z <= EPSILON_Z, 1.0, z)
    u = cam.focal_u * x / safe_z + cam.principal_u
    v = cam.focal_v * y / safe_z + cam.principal_v
    umin, umax = u.min(axis=1), u.max(axis=1)
    vmin, vmax = v.min(axis=1), v.max(axis=1)
    out = {
        "center_u": (umin + umax) / 2,
        "center_v": (vmin + vmax) / 2,
        "side": np.maximum(umax - umin, vmax - vmin),
        "centroid_u": u.sum(axis=1) / 8,
        "centroid_v": v.sum(axis=1) / 8,
        "projected_width": umax - umin,
    }
    for key in out:
        out[key][behind] = 0.0
    in_fov = ((out["centroid_u"] >= 0) & (out["centroid_u"] < cam.image_width)
              & (out["centroid_v"] >= 0) & (out["centroid_v"] < cam.image_height))
    reason = np.zeros(len(behind), dtype=np.int8)
    reason[out["projected_width"] < min_width] = 3
    reason[~in_fov] = 2
    reason[behind] = 1
    out["reason"] = reason
    out["valid"] = reason == 0
    return out


def regions_from_arrays(arr: dict[str, np.ndarray], rows=None) -> list[CropRegion]:
    rows = range(len(arr["valid"])) if rows is None else rows
    cols = [arr[k].tolist() for k in ("center_u", "center_v", "side", "valid", "reason",
                                       "centroid_u", "centroid_v", "projected_width")]
    return [CropRegion(cols[0][i], cols[1][i], cols[2][i], cols[3][i], REASON_CODES[cols[4][i]],
                       cols[5][i], cols[6][i], cols[7][i]) for i in rows]


def crop_regions(cam: CameraModel, tracks: Sequence[TrackState],
                 min_width: float = DEFAULT_MIN_WIDTH) -> list[CropRegion]:
    """Vectorised :func:`crop_region` over many tracks; results are identical."""
    if min_width <= 0:
        raise InvalidConfigError("min_width must be positive")
    if len(tracks) == 0:
        return []
    return regions_from_arrays(crop_arrays(cam, *_states_to_columns(tracks), min_width=min_width))


def crop_region(cam: CameraModel, t: TrackState, min_width: float = DEFAULT_MIN_WIDTH) -> CropRegion:
    """Smallest axis-aligned square enclosing the projected box corners.

    Invalidity is encoded in the result: any corner at depth <= EPSILON_Z
    marks ``behind_camera``; a corner centroid outside the image marks
    ``centroid_out_of_fov``; a u-extent below ``min_width`` marks
    ``below_min_width``. Checks apply in that order.
    """
    return crop_regions(cam, [t], min_width)[0]


def _bilinear_axis(start: float, side: float, size: int, limit: int):
    # pixel k covers [k, k+1); output sample j sits at the centre of its cell
    coords = start + ((np.arange(size) + 0.5) * (side / size) - 0.5)
    lo = np.floor(coords)
    frac = coords - lo
    lo = lo.astype(np.int64)
    hi = lo + 1
    w_lo = np.where((lo >= 0) & (lo < limit), 1.0 - frac, 0.0)
    w_hi = np.where((hi >= 0) & (hi < limit), frac, 0.0)
    return np.clip(lo, 0, limit - 1), np.clip(hi, 0, limit - 1), w_lo, w_hi


def extract_patch(image: np.ndarray, r: CropRegion, patch_size: int = DEFAULT_PATCH_SIZE) -> ImagePatch:
    """Crop the square region and resize it bilinearly to ``patch_size``.

    Pixels outside the image read as zero. ``uint8`` images are rescaled to
    [0, 1].
    """
    if not r.valid:
        raise InvalidRegionError(f"cannot extract an invalid region ({r.invalid_reason})")
    img = np.asarray(image)
    if img.dtype == np.uint8:
        img = img.astype(np.float64) / 255.0
    if img.ndim == 2:
        img = np.repeat(img[..., None], 3, axis=2)
    h, w = img.shape[:2]
    left = r.center_u - r.side / 2
    top = r.center_v - r.side / 2
    x0, x1, wx0, wx1 = _bilinear_axis(left, r.side, patch_size, w)
    y0, y1, wy0, wy1 = _bilinear_axis(top, r.side, patch_size, h)
    out = (wy0[:, None, None] * (wx0[None, :, None] * img[y0][:, x0] + wx1[None, :, None] * img[y0][:, x1])
           + wy1[:, None, None] * (wx0[None, :, None] * img[y1][:, x0] + wx1[None, :, None] * img[y1][:, x1]))
    return ImagePatch(np.clip(out, 0.0, 1.0), r)
