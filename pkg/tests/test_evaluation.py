import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from evdetect.classifier import SyntheticClassifier, score_table
from evdetect.errors import DegenerateLabelsError, UnreachableRecallError
from evdetect.evaluation import (EvalReport, actor_columns, actor_max_fractions, format_frame_table,
                                 format_sweep_table, frame_report, max_f1, pct_change, per_actor_metrics,
                                 pr_curve, pr_curve_arrays, precision_at_recall, sweep_threshold)
from evdetect.simulator import SceneConfig, generate_scene
from evdetect.smoother import SmootherConfig, decision_trace


def test_worked_example():
    curve = pr_curve_arrays([0.9, 0.8, 0.7, 0.6], [1, 1, 0, 1])
    best = max_f1(curve)
    assert best.f1 == pytest.approx(6 / 7) and best.threshold == 0.6
    assert precision_at_recall(curve, 0.8) == pytest.approx(0.75)


def test_equal_scores_form_one_operating_point():
    curve = pr_curve_arrays([0.5, 0.5, 0.5, 0.2], [1, 0, 1, 0])
    assert [p.threshold for p in curve] == [0.2, 0.5]
    assert (curve[1].tp, curve[1].fp) == (2, 1)


def test_unreachable_recall():
    # the lowest threshold always reaches recall 1, so only a target above 1 is unreachable
    with pytest.raises(UnreachableRecallError):
        precision_at_recall(pr_curve_arrays([0.9, 0.1], [1, 0]), 1.01)


def test_degenerate_labels():
    with pytest.raises(DegenerateLabelsError):
        pr_curve_arrays([0.1, 0.2], [1, 1])


@given(st.lists(st.tuples(st.sampled_from([0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0]), st.booleans()),
                min_size=2, max_size=60))
def test_curve_matches_oracle(pairs):
    scores = [s for s, _ in pairs]
    labels = [y for _, y in pairs]
    if all(labels) or not any(labels):
        return
    ours = [(p.threshold, p.precision, p.recall) for p in pr_curve_arrays(scores, labels)]
    assert ours == pytest.approx(oracles.pr_points(scores, labels))
    best = max(oracles.f1(p, r) for _, p, r in oracles.pr_points(scores, labels))
    assert max_f1(pr_curve_arrays(scores, labels)).f1 == pytest.approx(best)


def test_pct_change():
    assert pct_change(1.1, 1.0) == pytest.approx(10.0)
    assert pct_change(0.0, 0.0) == 0.0
    assert pct_change(0.5, 0.0) is None


@pytest.fixture(scope="module")
def scored_scene():
    _, table = generate_scene(SceneConfig(actor_count=600, ev_fraction=0.3, seed=21))
    clf = SyntheticClassifier(tpr=0.9, fpr=0.1, score_jitter=1.0, seed=2)
    return table.with_scores(score_table(clf, table, None))


def test_records_and_table_agree(scored_scene):
    table = scored_scene
    rows = np.flatnonzero(table.frame_index % 9 == 0)
    sub = table.select(rows)
    recs = sub.records(range(len(sub)))
    a, b = frame_report(sub), frame_report(recs)
    assert (a.max_f1, a.precision_at_recall) == pytest.approx((b.max_f1, b.precision_at_recall))
    assert per_actor_metrics(sub) == per_actor_metrics(recs)


def test_actor_fractions_agree_with_streaming_smoother(scored_scene):
    cfg = SmootherConfig()
    cols = actor_columns(scored_scene)
    best = actor_max_fractions(cols, cfg)
    bounds = np.r_[0, np.cumsum(np.bincount(cols.actor_of_row, minlength=len(cols.keys)))]
    for T in (0.0, 0.3, 0.5, 0.7):
        c = SmootherConfig(threshold_T=T)
        for a in range(len(cols.keys)):
            sl = slice(bounds[a], bounds[a + 1])
            assert decision_trace(cols.scores[sl], cols.valid[sl], c).any() == (best[a] > T)


def test_sweep_layout_and_directions(scored_scene):
    rep = sweep_threshold(scored_scene)
    ts = [r["threshold_T"] for r in rep.actor_rows]
    assert ts == [0.0, 0.3, 0.5, 0.7]
    p = [r["precision"] for r in rep.actor_rows]
    r = [r["recall"] for r in rep.actor_rows]
    assert p == sorted(p) and r == sorted(r, reverse=True)
    assert rep.actor_rows[0]["pct_change_f1"] == 0.0
    text = format_sweep_table(rep)
    assert "Smoother threshold T" in text and "30%" in text


def test_report_roundtrip_and_table(scored_scene):
    rep = frame_report(scored_scene, name="m1")
    base = frame_report(scored_scene, name="m0")
    rep.attach_baseline(base)
    assert rep.pct_change_max_f1 == 0.0
    again = EvalReport.from_dict(rep.to_dict())
    assert again == rep
    assert "m1" in format_frame_table([base, rep])


def test_unscored_frames_are_skipped(scored_scene):
    t = scored_scene
    rows = np.r_[np.flatnonzero(t.valid & t.labels)[:100], np.flatnonzero(t.valid & ~t.labels)[:100]]
    recs = t.records(rows[::-1])
    blank = [r.replace(score=None) for r in recs[:50]] + list(recs[50:])
    assert len(pr_curve(blank)) == len(pr_curve(recs[50:]))
