import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from evdetect.augmentation import (STATE_FIELDS, StateDistribution, augment_record, build_train_set,
                                   fit_state_distribution, sample_augmented_box)
from evdetect.errors import InsufficientDataError, InvalidConfigError, SamplingFailureError
from evdetect.geometry import TrackState
from evdetect.simulator import SceneConfig, generate_scene


def track(x=0.0, y=0.7, z=30.0, l=4.5, w=1.9, h=1.5):
    return TrackState(0, 0.0, x, y, z, l, w, h, 0.0)


@pytest.fixture(scope="module")
def pools():
    _, table = generate_scene(SceneConfig(actor_count=1500, ev_fraction=0.3, seed=11))
    pos = table.records(np.flatnonzero(table.valid & table.labels)[::37])
    neg = table.records(np.flatnonzero(table.valid & ~table.labels)[::11])
    return pos, neg


def test_two_point_std():
    d = fit_state_distribution([track(x=2.0), track(x=4.0)])
    assert d.mean["center_x"] == 3.0
    assert d.std["center_x"] == pytest.approx(1.41421, abs=1e-5)
    assert d.std["length"] == 0.0


@given(st.lists(st.floats(-100, 100), min_size=2, max_size=30))
def test_fit_matches_oracle_std(xs):
    d = fit_state_distribution([track(x=x) for x in xs])
    assert d.std["center_x"] == pytest.approx(oracles.sample_std(xs), rel=1e-9, abs=1e-9)


def test_fit_needs_two_tracks():
    with pytest.raises(InsufficientDataError):
        fit_state_distribution([track()])


def test_negative_std_rejected():
    std = dict.fromkeys(STATE_FIELDS, 1.0)
    std["width"] = -1.0
    with pytest.raises(InvalidConfigError):
        StateDistribution(dict.fromkeys(STATE_FIELDS, 1.0), std)


def test_ten_positives_and_hundred_negatives_give_20_20(pools):
    pos, neg = pools
    out, dist = build_train_set(pos[:10] + neg[:100], seed=0)
    labels = [r.label for r in out]
    assert sum(labels) == 20 and len(labels) - sum(labels) == 20
    assert sum(r.source == "augmented" for r in out) == 10
    assert dist.n == 10


def test_thousand_to_one_imbalance(pools):
    pos, neg = pools
    negs = (neg * 20)[:1000]
    out, _ = build_train_set(pos[:10] + negs, seed=1)
    n_pos = sum(r.label for r in out)
    assert (n_pos, len(out) - n_pos) == (20, 200)  # 10:1000 becomes 20:200, i.e. 1:10


def test_no_positives(pools):
    _, neg = pools
    out, dist = build_train_set(neg[:50])
    assert dist is None and len(out) == 10 and not any(r.label for r in out)


def test_invalid_crops_are_dropped(pools):
    pos, neg = pools
    bad = neg[0].replace(crop=neg[0].crop.__class__(0, 0, 0, False))
    out, _ = build_train_set(pos[:4] + [bad] * 5 + neg[:10])
    assert all(r.crop.valid for r in out)


def test_build_is_deterministic(pools):
    pos, neg = pools
    a, _ = build_train_set(pos[:10] + neg[:100], seed=3)
    b, _ = build_train_set(pos[:10] + neg[:100], seed=3)
    assert [r.to_dict() for r in a] == [r.to_dict() for r in b]


def test_augmented_copies_keep_labels_and_pass_filters(pools):
    pos, _ = pools
    dist = fit_state_distribution([r.track for r in pos])
    for i, rec in enumerate(pos[:20]):
        aug = augment_record(rec, dist, i)
        assert aug.crop.valid and aug.label == rec.label and aug.bulb_mask == rec.bulb_mask
        assert aug.track.yaw == rec.track.yaw and aug.track_id == rec.track_id
        assert aug.provenance.startswith("augmented:")


def test_unreachable_crop_raises(pools):
    pos, _ = pools
    far = StateDistribution({**dict.fromkeys(STATE_FIELDS, 1.0), "center_z": 5000.0},
                            dict.fromkeys(STATE_FIELDS, 0.0))
    with pytest.raises(SamplingFailureError):
        augment_record(pos[0], far, 0)


def test_degenerate_dimensions_raise():
    d = StateDistribution({**dict.fromkeys(STATE_FIELDS, 1.0), "width": -5.0},
                          dict.fromkeys(STATE_FIELDS, 0.0))
    with pytest.raises(SamplingFailureError):
        sample_augmented_box(d, 0)


def test_sampled_dimensions_are_positive():
    d = StateDistribution(dict.fromkeys(STATE_FIELDS, 0.2), dict.fromkeys(STATE_FIELDS, 1.0))
    boxes = [sample_augmented_box(d, i) for i in range(500)]
    assert min(min(b["length"], b["width"], b["height"]) for b in boxes) > 0


@settings(max_examples=20)
@given(st.integers(0, 2**31))
def test_refit_recovers_means(seed):
    d = StateDistribution({"center_x": 3.0, "center_y": 0.7, "center_z": 60.0, "length": 5.0,
                           "width": 2.0, "height": 1.7},
                          {"center_x": 0.3, "center_y": 0.05, "center_z": 6.0, "length": 0.5,
                           "width": 0.2, "height": 0.17})
    rng = np.random.default_rng(seed)
    boxes = [sample_augmented_box(d, rng.integers(2**63)) for _ in range(2000)]
    refit = fit_state_distribution([track(b["center_x"], b["center_y"], b["center_z"], b["length"],
                                          b["width"], b["height"]) for b in boxes])
    for f in STATE_FIELDS:
        # 2000 draws, std/mean = 0.1: standard error of the mean is ~0.22% of it
        assert refit.mean[f] == pytest.approx(d.mean[f], rel=0.01)


def test_distribution_roundtrip():
    d = fit_state_distribution([track(x=1.0), track(x=5.0, z=80.0)])
    assert StateDistribution.from_dict(d.to_dict()) == d
