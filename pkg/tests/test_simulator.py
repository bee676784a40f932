import json
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from evdetect.errors import DataError, InvalidConfigError
from evdetect.geometry import CropRegion, TrackState, crop_region
from evdetect.simulator import (ActorProfile, FlashPattern, FrameRecord, PatchRenderer, RenderConfig, RenderInputs,
                                SceneConfig, generate_scene, render_patch, split_dataset)


@pytest.fixture(scope="module")
def scene():
    return generate_scene(SceneConfig(scene_id="sim-test", actor_count=3000, ev_fraction=0.3, seed=5))


def test_no_evs_when_prior_is_zero():
    actors, table = generate_scene(SceneConfig(actor_count=100, ev_fraction=0.0))
    assert all(a.vehicle_type == "non_ev" for a in actors)
    assert not any(r.is_active for r in table)


def test_non_ev_never_active(scene):
    actors, table = scene
    vehicle = np.array([a.vehicle_type for a in actors])
    assert not table.row_active[vehicle[table.actor_idx] == "non_ev"].any()


def test_durations_within_25s(scene):
    actors, _ = scene
    assert max(a.duration for a in actors) <= 25.0
    with pytest.raises(InvalidConfigError):
        ActorProfile(0, "s", "non_ev", False, 0, 300, 10.0, (0, 0, 10), (0, 0), (4, 2, 1.5), 0.0)


def test_non_ev_profile_cannot_be_active():
    with pytest.raises(InvalidConfigError):
        ActorProfile(0, "s", "non_ev", True, 0, 10, 10.0, (0, 0, 10), (0, 0), (4, 2, 1.5), 0.0)


def test_scene_is_deterministic():
    cfg = SceneConfig(actor_count=200, seed=9)
    a, b = generate_scene(cfg)[1], generate_scene(cfg)[1]
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]


def test_prior_statistics_at_moderate_scale():
    actors, table = generate_scene(SceneConfig(actor_count=20_000, seed=1))
    is_ev = np.array([a.vehicle_type != "non_ev" for a in actors])
    assert abs(is_ev.mean() - 0.034) < 0.004  # 3 sigma at n = 20k is ~0.0038
    active = np.array([a.is_active for a in actors])
    assert abs(active[is_ev].mean() - 0.90) < 0.05
    off = (table.bulb_mask[table.row_active] == 0).mean()
    assert abs(off - 0.082) < 0.01


def test_ev_type_mix():
    actors, _ = generate_scene(SceneConfig(actor_count=20_000, ev_fraction=1.0, active_fraction=0.0, seed=2))
    kinds = np.array([a.vehicle_type for a in actors])
    for name, p in {"police": 0.8, "fire": 0.134, "ambulance": 0.066}.items():
        assert abs((kinds == name).mean() - p) < 0.015


@pytest.mark.parametrize("target", [0.0, 0.05, 0.082, 0.2, 0.5])
def test_periodic_pattern_all_off_fraction(target):
    pattern = FlashPattern.solve(target, 12, 2)
    masks = pattern.mask_at(np.arange(pattern.period))
    assert abs((masks == 0).mean() - target) <= 1 / 24 + 1e-9  # nearest whole frame out of 12
    assert pattern.all_off_fraction() == (masks == 0).mean()


def test_default_pattern_within_one_point_of_8_2_percent():
    pattern = SceneConfig().flash_pattern
    assert abs(pattern.all_off_fraction() - 0.082) <= 0.01


@given(st.integers(0, 50))
def test_pattern_is_periodic(offset):
    p = SceneConfig().flash_pattern
    f = np.arange(48)
    assert np.array_equal(p.mask_at(f), p.mask_at(f + offset * p.period))


def test_bernoulli_mode_rate():
    _, table = generate_scene(SceneConfig(actor_count=3000, ev_fraction=0.5, flash_mode="bernoulli", seed=4))
    off = (table.bulb_mask[table.row_active] == 0).mean()
    assert abs(off - 0.082) < 0.01


def test_activeness_switching_only_touches_evs():
    actors, table = generate_scene(SceneConfig(actor_count=2000, ev_fraction=0.3, activeness_switch_prob=0.05,
                                               seed=3))
    vehicle = np.array([a.vehicle_type for a in actors])
    ev_rows = vehicle[table.actor_idx] != "non_ev"
    assert not table.row_active[~ev_rows].any()
    toggles = (table.row_active[1:] != table.row_active[:-1]) & (table.actor_idx[1:] == table.actor_idx[:-1])
    assert toggles.any()


def test_records_follow_crop_geometry(scene):
    _, table = scene
    rec = table[123]
    assert crop_region(table.camera, rec.track, table.min_width) == rec.crop


def test_record_json_roundtrip(scene):
    _, table = scene
    for i in (0, 17, len(table) - 1):
        rec = table[i]
        again = FrameRecord.from_dict(json.loads(json.dumps(rec.to_dict())))
        assert again == rec


def test_record_invariants():
    crop = CropRegion(0, 0, 10, True)
    track = TrackState(1, 0.0, 0, 0, 10, 4, 2, 1.5)
    with pytest.raises(DataError):
        FrameRecord("s", 1, 0, 0.0, "non_ev", False, True, crop, track)
    with pytest.raises(DataError):
        FrameRecord("s", 1, 0, 0.0, "police", True, True, crop, track, score=1.5)


# -- renderer -----------------------------------------------------------------------

def rows_where(table, mask, n=200):
    rows = np.flatnonzero(mask)
    return rows[:n]


def test_near_lit_beacon_is_bright(scene):
    _, table = scene
    near = table.ranges < 20
    rows = rows_where(table, table.valid & table.bulb_on & near)
    assert len(rows) > 0
    px = PatchRenderer().render_batch(RenderInputs.from_table(table, rows))
    assert (px.reshape(len(rows), -1).max(axis=1) >= 0.9).all()


def test_unlit_clean_patch_stays_under_background_ceiling(scene):
    actors, table = scene
    conf = np.array([a.confounder is not None for a in actors])[table.actor_idx]
    rows = rows_where(table, table.valid & ~table.bulb_on & ~conf, 2000)
    px = PatchRenderer().render_batch(RenderInputs.from_table(table, rows))
    assert px.max() <= RenderConfig().background_ceiling


def test_rendering_is_deterministic(scene):
    _, table = scene
    rec = table[np.flatnonzero(table.valid & table.bulb_on)[0]]
    a, b = render_patch(rec, 3), render_patch(rec, 3)
    assert np.array_equal(a.pixels, b.pixels)
    assert a.label is True and a.track_id == rec.track_id


def test_render_independent_of_batch_composition(scene):
    _, table = scene
    rows = np.flatnonzero(table.valid)[:300]
    r = PatchRenderer()
    full = r.render_batch(RenderInputs.from_table(table, rows))
    part = r.render_batch(RenderInputs.from_table(table, rows[::-7]))
    assert np.array_equal(full[::-7], part)


def test_render_table_matches_records(scene):
    _, table = scene
    rows = np.flatnonzero(table.valid)[:50]
    r = PatchRenderer()
    assert np.array_equal(r.render_batch(RenderInputs.from_table(table, rows)),
                          r.render_records(table.records(rows)))


def test_invalid_crop_is_not_rendered(scene):
    _, table = scene
    rec = table[np.flatnonzero(~table.valid)[0]]
    with pytest.raises(Exception):
        render_patch(rec, 0)


# -- splits -----------------------------------------------------------------------

def test_split_ratio_on_12k_actors():
    _, table = generate_scene(SceneConfig(actor_count=12_000, min_duration=0.1, max_duration=0.1, seed=8))
    keys = {r.actor_key: r.split for r in split_dataset(table, (3, 1), seed=0)}
    assert len(keys) == 12_000
    n_train = sum(v == "train" for v in keys.values())
    assert abs(n_train - 9000) <= 4 * math.sqrt(12_000 * 0.75 * 0.25)  # 4 sigma, ~190


def test_split_keeps_actor_frames_together(scene):
    _, table = scene
    split = split_dataset(table.records(range(0, len(table), 7)), seed=3)
    seen = {}
    for r in split:
        assert seen.setdefault(r.actor_key, r.split) == r.split


def test_split_is_reproducible_and_degenerate_ratio():
    _, table = generate_scene(SceneConfig(actor_count=4, seed=1))
    recs = table.records(range(len(table)))
    assert split_dataset(recs, seed=5) == split_dataset(recs, seed=5)
    assert all(r.split == "train" for r in split_dataset(recs, (1, 0)))
    with pytest.raises(InvalidConfigError):
        split_dataset(recs, (0, 0))
