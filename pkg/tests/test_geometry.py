import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from evdetect.errors import BehindCameraError, InvalidConfigError, InvalidRegionError
from evdetect.geometry import (CameraModel, CropRegion, InvalidReason, TrackState, box_corners, crop_region,
                               crop_regions, extract_patch, project_point)


def box(x=0.0, y=0.0, z=20.0, l=4.5, w=1.8, h=1.5, yaw=0.0, track_id=0):
    return TrackState(track_id, 0.0, x, y, z, l, w, h, yaw)


# -- projection -------------------------------------------------------------------

def test_optical_axis_hits_principal_point(camera):
    assert project_point(camera, (0, 0, 20)) == (960.0, 600.0)


def test_pinhole_formula(camera):
    # 1000 * 2 / 20 + 960, 1000 * 1 / 20 + 600
    assert project_point(camera, (2, 1, 20)) == pytest.approx((1060.0, 650.0), abs=1e-12)


def test_point_behind_camera_raises(camera):
    with pytest.raises(BehindCameraError):
        project_point(camera, (1, 1, -5))


@pytest.mark.parametrize("kwargs", [dict(focal_u=0), dict(image_width=0), dict(principal_u=-1.0)])
def test_camera_validation(kwargs):
    base = dict(focal_u=1000.0, focal_v=1000.0, principal_u=960.0, principal_v=600.0,
                image_width=1920, image_height=1200)
    with pytest.raises(InvalidConfigError):
        CameraModel(**{**base, **kwargs})


# -- corners ----------------------------------------------------------------------

def test_unit_cube_corners():
    c = box_corners(box(0, 0, 0, 1, 1, 1))
    assert sorted(map(tuple, c)) == sorted((sx * .5, sy * .5, sz * .5)
                                           for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1))


def test_quarter_turn_swaps_extents():
    c = box_corners(box(0, 0, 0, l=2, w=1, h=1, yaw=math.pi / 2))
    assert c[:, 0].min() == pytest.approx(-0.5) and c[:, 0].max() == pytest.approx(0.5)
    assert c[:, 2].min() == pytest.approx(-1.0) and c[:, 2].max() == pytest.approx(1.0)


finite = st.floats(-50, 50, allow_nan=False)
dims = st.floats(0.1, 20, allow_nan=False)
yaws = st.floats(-math.pi, math.pi, exclude_max=True, allow_nan=False)


@given(finite, finite, finite, dims, dims, dims, yaws)
def test_corner_centroid_is_box_center(x, y, z, l, w, h, yaw):
    c = box_corners(box(x, y, z, l, w, h, yaw))
    assert np.allclose(c.mean(axis=0), (x, y, z), atol=1e-9)


@given(finite, finite, finite, dims, dims, dims, yaws)
def test_corners_match_oracle(x, y, z, l, w, h, yaw):
    ours = sorted(map(tuple, box_corners(box(x, y, z, l, w, h, yaw))))
    assert ours == sorted(oracles.corners(x, y, z, l, w, h, yaw))


def test_track_state_validation():
    with pytest.raises(InvalidConfigError):
        box(l=0)
    with pytest.raises(InvalidConfigError):
        box(yaw=math.pi)


# -- crop regions -----------------------------------------------------------------

def test_crop_from_known_extents(camera):
    # flat box at z=20: u spans [100, 140], v spans [100, 120]
    t = box(x=-16.8, y=-9.8, z=20.0, l=0.8, w=1e-9, h=0.4)
    r = crop_region(camera, t)
    assert r.valid
    assert (r.center_u, r.center_v, r.side) == pytest.approx((120.0, 110.0, 40.0), abs=1e-5)


def test_narrow_crop_rejected(camera):
    t = box(x=0.0, y=0.0, z=20.0, l=0.34, w=1e-9, h=1.0)  # 17 px wide
    r = crop_region(camera, t, min_width=18)
    assert r.projected_width == pytest.approx(17.0)
    assert not r.valid and r.invalid_reason is InvalidReason.BELOW_MIN_WIDTH


def test_centroid_outside_image(camera):
    t = box(x=19.3, y=0.0, z=20.0, w=1e-9)  # flat box, centroid u = 1925
    r = crop_region(camera, t)
    assert r.centroid_u == pytest.approx(1925.0)
    assert r.invalid_reason is InvalidReason.CENTROID_OUT_OF_FOV


def test_behind_camera_takes_precedence(camera):
    r = crop_region(camera, box(x=500.0, z=0.5, w=2.0))
    assert r.invalid_reason is InvalidReason.BEHIND_CAMERA


def test_min_width_must_be_positive(camera):
    with pytest.raises(InvalidConfigError):
        crop_region(camera, box(), min_width=0)


@st.composite
def cameras(draw):
    w = draw(st.integers(64, 4000))
    h = draw(st.integers(64, 3000))
    return CameraModel(draw(st.floats(100, 3000)), draw(st.floats(100, 3000)),
                       draw(st.floats(0, w)), draw(st.floats(0, h)), w, h)


@given(cameras(), st.floats(-40, 40), st.floats(-5, 5), st.floats(-5, 150), dims, dims, dims, yaws,
       st.floats(1, 40))
def test_crop_matches_bruteforce_oracle(cam, x, y, z, l, w, h, yaw, min_width):
    r = crop_region(cam, box(x, y, z, l, w, h, yaw), min_width)
    cu, cv, side, gu, gv, reason = oracles.crop(
        (cam.focal_u, cam.focal_v, cam.principal_u, cam.principal_v, cam.image_width, cam.image_height),
        (x, y, z, l, w, h, yaw), min_width)
    if reason == "behind_camera":
        assert r.invalid_reason is InvalidReason.BEHIND_CAMERA
        return
    # bitwise on the square; the centroid sum order differs, so compare it loosely
    assert (r.center_u, r.center_v, r.side) == (cu, cv, side)
    assert r.centroid_u == pytest.approx(gu, rel=1e-12, abs=1e-9)
    assert r.centroid_v == pytest.approx(gv, rel=1e-12, abs=1e-9)
    near_edge = min(abs(gu), abs(gu - cam.image_width), abs(gv), abs(gv - cam.image_height)) < 1e-6
    if not near_edge:
        assert (r.invalid_reason.value if r.invalid_reason else None) == reason
        assert r.valid == (reason is None)


@given(cameras(), st.lists(st.tuples(st.floats(-40, 40), st.floats(-5, 5), st.floats(1, 150), dims, dims, dims,
                                     yaws), min_size=1, max_size=20))
def test_batched_crops_equal_single(cam, boxes):
    tracks = [box(*b, track_id=i) for i, b in enumerate(boxes)]
    assert crop_regions(cam, tracks) == [crop_region(cam, t) for t in tracks]


@given(st.floats(-20, 20), st.floats(1, 100), dims, dims, dims, yaws)
def test_valid_crop_contains_all_corners(x, z, l, w, h, yaw):
    cam = CameraModel(1000.0, 1000.0, 960.0, 600.0, 1920, 1200)
    t = box(x, 0.0, z, l, w, h, yaw)
    r = crop_region(cam, t)
    if not r.valid:
        return
    for p in box_corners(t):
        u, v = project_point(cam, p)
        assert abs(u - r.center_u) <= r.side / 2 + 1e-9
        assert abs(v - r.center_v) <= r.side / 2 + 1e-9


def test_crop_region_roundtrip(camera):
    r = crop_region(camera, box(x=500.0, z=0.5, w=2.0))
    assert CropRegion.from_dict(r.to_dict()) == r


# -- patch extraction -------------------------------------------------------------

def region(cu, cv, side):
    return CropRegion(cu, cv, side, True)


@given(st.floats(0, 1), st.floats(20, 50), st.floats(20, 50), st.floats(2, 30))  # region stays inside
def test_constant_image_gives_constant_patch(value, cu, cv, side):
    img = np.full((70, 70, 3), value)
    patch = extract_patch(img, region(cu, cv, side), 8)
    assert np.allclose(patch.pixels, value)


def test_aligned_region_copies_pixels():
    rng = np.random.default_rng(0)
    img = rng.random((40, 50, 3))
    patch = extract_patch(img, region(10 + 8, 5 + 8, 16), 16)
    assert np.allclose(patch.pixels, img[5:21, 10:26])


def test_checkerboard_upsample_matches_hand_bilinear():
    board = [[0.0, 1.0], [1.0, 0.0]]
    img = np.repeat(np.array(board)[..., None], 3, axis=2)
    patch = extract_patch(img, region(1.0, 1.0, 2.0), 4).pixels[..., 0]
    # sample coords 0.25 / 0.75 in each axis: 0.75*0.25 + 0.25*0.75 and 0.75**2 + 0.25**2
    assert np.allclose(patch[1:3, 1:3], [[0.375, 0.625], [0.625, 0.375]])
    assert np.allclose(patch, oracles.resize_square(board, 0.0, 0.0, 2.0, 4))


@given(st.floats(-10, 30), st.floats(-10, 30), st.floats(1, 25), st.integers(1, 9))
def test_extract_matches_oracle(cu, cv, side, size):
    rng = np.random.default_rng(1)
    gray = rng.random((20, 20))
    img = np.repeat(gray[..., None], 3, axis=2)
    ours = extract_patch(img, region(cu, cv, side), size).pixels[..., 0]
    ref = oracles.resize_square(gray.tolist(), cu - side / 2, cv - side / 2, side, size)
    assert np.allclose(ours, np.clip(ref, 0, 1), atol=1e-12)


def test_uint8_images_are_rescaled():
    img = np.full((10, 10, 3), 255, dtype=np.uint8)
    assert np.allclose(extract_patch(img, region(5, 5, 4), 4).pixels, 1.0)


def test_invalid_region_cannot_be_extracted():
    with pytest.raises(InvalidRegionError):
        extract_patch(np.zeros((4, 4, 3)), CropRegion(0, 0, 0, False, InvalidReason.BEHIND_CAMERA))
