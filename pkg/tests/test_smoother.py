import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from evdetect.errors import InvalidConfigError
from evdetect.smoother import (SmootherConfig, buffer_fractions, decide, decision_trace, new_state, push)

CFG = SmootherConfig()


def filled(n_pos, n_neg, cfg=CFG):
    state = new_state(cfg)
    for _ in range(n_pos):
        push(state, 1.0, True, cfg)
    for _ in range(n_neg):
        push(state, 0.0, True, cfg)
    return state


def test_buffer_keeps_last_25():
    state = new_state(CFG)
    for i in range(30):
        push(state, 1.0 if i < 5 else 0.0, True, CFG)
    assert state.valid_count == 25
    assert state.positive_count == 0  # the 5 positives were the oldest


def test_invalid_push_is_a_noop():
    state = filled(7, 3)
    before = state.snapshot()
    push(state, 1.0, False, CFG)
    assert state.snapshot() == before


def test_threshold_score_counts_as_positive():
    state = filled(0, 0)
    push(state, 0.5, True, CFG)
    assert state.positive_count == 1


def test_five_positives_are_not_enough():
    assert not decide(filled(5, 0), CFG)


def test_six_positives_are():
    assert decide(filled(6, 0), CFG)


def test_majority_is_strict():
    assert decide(filled(13, 12), CFG)  # 0.52 > 0.5
    assert not decide(filled(5, 5), CFG)  # 0.5 is not > 0.5


def test_five_of_25_is_inactive():
    assert not decide(filled(5, 20), CFG)


def test_empty_state_is_inactive():
    assert not decide(new_state(CFG), CFG)


@pytest.mark.parametrize("kwargs", [dict(min_frames=0), dict(min_frames=26), dict(threshold_T=1.5),
                                    dict(frame_decision_threshold=-0.1), dict(reset_after_invalid=0)])
def test_config_validation(kwargs):
    with pytest.raises(InvalidConfigError):
        SmootherConfig(**kwargs)


def test_threshold_one_is_unreachable():
    cfg = SmootherConfig(threshold_T=1.0)
    assert not decide(filled(25, 0, cfg), cfg)


pushes = st.lists(st.tuples(st.floats(0, 1), st.booleans()), max_size=200)


@given(pushes, st.floats(0, 1))
def test_decide_matches_recount_oracle(seq, T):
    cfg = SmootherConfig(threshold_T=T)
    state = new_state(cfg)
    got = [decide(push(state, s, v, cfg), cfg) for s, v in seq]
    assert got == oracles.smoother_decisions(seq, T=T)


@given(pushes)
def test_positive_count_never_exceeds_valid_count(seq):
    state = new_state(CFG)
    for s, v in seq:
        push(state, s, v, CFG)
        assert 0 <= state.positive_count <= state.valid_count <= CFG.buffer_capacity


@given(pushes, st.floats(0, 1))
def test_vectorised_trace_matches_streaming(seq, T):
    cfg = SmootherConfig(threshold_T=T)
    scores = np.array([s for s, _ in seq], dtype=float)
    valid = np.array([v for _, v in seq], dtype=bool)
    assert decision_trace(scores, valid, cfg).tolist() == oracles.smoother_decisions(seq, T=T)


def test_buffer_fractions_carry_over_invalid_frames():
    scores = np.array([1, 1, 1, 1, 1, 0, 0, 1], dtype=float)
    valid = np.array([1, 1, 1, 1, 1, 1, 0, 1], dtype=bool)
    frac = buffer_fractions(scores, valid, CFG)
    assert np.isnan(frac[:5]).all()
    assert frac[5] == pytest.approx(5 / 6)
    assert frac[6] == frac[5]
    assert frac[7] == pytest.approx(6 / 7)


def test_reset_after_invalid_clears_history():
    cfg = SmootherConfig(reset_after_invalid=3)
    state = filled(10, 0, cfg)
    for _ in range(2):
        push(state, 0.0, False, cfg)
    assert state.valid_count == 10
    push(state, 0.0, False, cfg)
    assert state.valid_count == 0 and not decide(state, cfg)
