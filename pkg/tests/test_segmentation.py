import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eegdistract.data import DataError, LabelMap, State
from eegdistract.dsp import N_FEATURES, FeatureSeries
from eegdistract.segmentation import (
    WindowSegmenter,
    build_sequences,
    majority_state,
    read_windows,
    segment_series,
    stack_sequences,
    window_count,
    window_span_seconds,
    write_windows,
)


def series(n_frames, tasks=None, pid=1):
    r = np.random.default_rng(n_frames)
    tasks = np.zeros(n_frames, dtype=np.int64) if tasks is None else np.asarray(tasks)
    return FeatureSeries(pid, np.arange(n_frames) * 0.25, r.normal(size=(n_frames, N_FEATURES)), tasks)


@pytest.mark.parametrize("frames,expected", [(40, 1), (59, 1), (60, 2), (100, 4), (9593, 478)])
def test_window_counts(frames, expected):
    assert window_count(frames) == expected
    assert len(segment_series(series(frames), LabelMap.default())) == expected


def test_too_few_frames_warns():
    with pytest.warns(UserWarning):
        assert segment_series(series(39), LabelMap.default()) == []
    assert window_count(39) == 0


def test_overlap_and_span():
    ws = segment_series(series(100), LabelMap.default())
    for a, b in zip(ws, ws[1:]):
        assert np.array_equal(a.values[20:], b.values[:20])
    assert window_span_seconds() == 11.75


def test_majority_ties_go_to_distracted():
    assert majority_state([0] * 20 + [1] * 20) is State.DISTRACTED
    assert majority_state([0] * 21 + [1] * 19) is State.FOCUSED


def test_window_label_from_frames():
    tasks = [0] * 25 + [3] * 15
    (w,) = segment_series(series(40, tasks), LabelMap.default())
    assert w.state is State.FOCUSED
    (w,) = segment_series(series(40, [0] * 20 + [3] * 20), LabelMap.default())
    assert w.state is State.DISTRACTED


def test_sequences_labelled_by_last_window():
    tasks = [0] * 80 + [5] * 40
    ws = segment_series(series(120, tasks), LabelMap.default())
    seqs = build_sequences(ws)
    assert len(seqs) == len(ws) - 3
    assert seqs[-1].windows[-1] is ws[-1]
    assert seqs[-1].state is ws[-1].state
    X, y = stack_sequences(seqs)
    assert X.shape == (len(seqs), 4, 40, N_FEATURES)


def test_sequences_reject_gaps():
    ws = segment_series(series(120), LabelMap.default())
    with pytest.raises(DataError):
        build_sequences([ws[0], ws[2], ws[3], ws[4]])


def test_windows_roundtrip(tmp_path):
    ws = segment_series(series(100, pid=4), LabelMap.default())
    write_windows(ws, tmp_path / "w.edw")
    back = read_windows(tmp_path / "w.edw")
    assert back == ws


def test_segmenter_params():
    seg = WindowSegmenter(hop=10)
    assert seg.get_params()["hop"] == 10
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        out = seg.fit_transform([series(60)])
    assert len(out) == 3


@given(st.integers(40, 3000))
def test_window_count_formula(frames):
    assert window_count(frames) == (frames - 40) // 20 + 1
