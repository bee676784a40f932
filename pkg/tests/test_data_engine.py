import numpy as np
import pytest

from evdetect.classifier import FeatureClassifier, SyntheticClassifier, TrainConfig
from evdetect.data_engine import (Dataset, MinedEvent, ModelRegistry, label_events, mine, retrain_cycle,
                                  train_dataset)
from evdetect.errors import DataError, MissingGroundTruthError, ProvenanceError
from evdetect.simulator import PatchRenderer, SceneConfig, generate_scene

ORACLE = SyntheticClassifier(tpr=1.0, fpr=0.0)
QUICK = TrainConfig(initial_lr=0.02, plateau_patience=50, max_iterations=300)


def scene(scene_id, n=300, ev=0.2, conf=0.2, seed=0, stride=5):
    _, table = generate_scene(SceneConfig(scene_id=scene_id, actor_count=n, ev_fraction=ev,
                                          confounder_rate=conf, seed=seed))
    return table.select(np.flatnonzero(table.frame_index % stride == 0)) if stride > 1 else table


@pytest.fixture(scope="module")
def renderer():
    return PatchRenderer()


def test_no_evs_and_no_false_positives_mines_nothing():
    assert mine([scene("empty", ev=0.0, stride=1)], ORACLE) == []


def test_noisy_classifier_on_ev_free_log_mines_only_false_positives():
    log = scene("fp", n=400, ev=0.0, stride=1)
    events = mine([log], SyntheticClassifier(tpr=1.0, fpr=0.3, seed=1))
    assert events
    label_events(events, [log])
    assert all(not any(active for active, _ in ev.labels) for ev in events)


def test_all_active_evs_are_mined():
    _, table = generate_scene(SceneConfig(scene_id="ten", actor_count=10, ev_fraction=1.0, active_fraction=1.0,
                                          min_duration=5.0, max_duration=5.0, seed=2))
    events = mine([table], ORACLE)
    long_enough = {a.track_id for a in table.actors}
    assert {ev.track_id for ev in events} == long_enough
    assert all(ev.model_version == "synthetic" for ev in events)


def test_each_track_is_mined_once():
    log = scene("dup", ev=0.5)
    once = mine([log], ORACLE)
    twice = mine([log, log], ORACLE)
    assert [e.key for e in once] == [e.key for e in twice]


def test_per_frame_mode_is_looser():
    log = scene("pf", n=400, ev=0.0, stride=1)
    noisy = SyntheticClassifier(tpr=1.0, fpr=0.05, seed=3)
    assert len(mine([log], noisy, per_frame=True)) > len(mine([log], noisy))


def test_labels_attach_ground_truth():
    log = scene("gt", ev=0.5)
    events = mine([log], ORACLE)
    recs = label_events(events, [log])
    assert all(r.source == "mined" and r.provenance == "mined-by:synthetic" for r in recs)
    assert sum(len(e.frame_indices) for e in events) == len(recs)
    with pytest.raises(MissingGroundTruthError):
        label_events(events, [scene("other", ev=0.5, seed=9)])


def test_event_roundtrip():
    ev = MinedEvent("s", 4, [1, 2], [0.9, None], [False, True], "v1")
    assert MinedEvent.from_dict(ev.to_dict()) == ev
    assert ev.frame_span == (1, 2)


def test_dataset_dedups_by_actor():
    base = scene("ds", ev=0.3)
    records = base.records(range(len(base)))
    ds = Dataset(records)
    assert ds.merge(records) == 0
    extra = scene("ds2", ev=0.3, seed=4)
    added = ds.merge(extra.records(range(len(extra))))
    assert added == len(extra) and ds.history[-1]["records"] == added
    assert ds.split("train") and ds.split("test")


def test_hygiene_check_catches_leaks():
    base = scene("leak", ev=0.3)
    ds = Dataset(base.records(range(len(base))))
    with pytest.raises(DataError):
        ds.check_hygiene(ds.split("test"))


@pytest.fixture(scope="module")
def trained(renderer):
    base = scene("train", n=400, ev=0.3, conf=0.0)
    ds = Dataset(base.records(range(len(base))))
    return ds, train_dataset(ds, QUICK, renderer)


def test_mining_training_scenes_is_refused(trained, renderer):
    ds, model = trained
    assert "train" in model.provenance["scenes"]
    with pytest.raises(ProvenanceError):
        mine([scene("train", n=400, ev=0.3, conf=0.0)], model, renderer=renderer)


def test_zero_event_cycle_keeps_the_dataset(trained, renderer):
    ds, model = trained
    before = len(ds.records)
    res = retrain_cycle(ds, [], QUICK, renderer, model)
    assert res.added_records == 0 and len(ds.records) == before
    assert res.report.max_f1 == pytest.approx(res.baseline.max_f1, abs=1e-6)


def test_cycle_is_deterministic(renderer):
    def run():
        base = scene("det", n=300, ev=0.3, conf=0.0)
        ds = Dataset(base.records(range(len(base))))
        m0 = train_dataset(ds, QUICK, renderer)
        log = scene("det-log", n=300, ev=0.1, conf=0.4, seed=5)
        mined = label_events(mine([log], m0, renderer=renderer), [log])
        res = retrain_cycle(ds, mined, QUICK, renderer, m0)
        return res.model.to_dict(), res.report.to_dict()
    assert run() == run()


def test_registry(tmp_path, trained):
    _, model = trained
    reg = ModelRegistry(tmp_path / "models")
    v1 = reg.register(model)
    v2 = reg.register(FeatureClassifier.from_dict(model.to_dict()), parent=v1)
    assert (v1, v2) == ("v1", "v2")
    again = ModelRegistry(tmp_path / "models")
    assert again.manifest["models"][1]["parent"] == "v1"
    assert np.array_equal(again.load("v1").weights, model.weights)
    with pytest.raises(DataError):
        reg.register(model, parent="v9")
    with pytest.raises(DataError):
        reg.load("v9")
