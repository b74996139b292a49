import numpy as np
import pytest

from eegdistract.data import (
    RAW_HEADER,
    ChannelLayout,
    DataError,
    LabelMap,
    RawSession,
    State,
    frames_in,
    load_label_map,
    load_raw_csv,
    load_split,
    majority,
    map_task_to_state,
    split_by_participant,
    write_label_map,
    write_raw_csv,
    write_split,
)


def test_state_names():
    assert State.parse("driving") is State.FOCUSED
    assert State.parse("DISTRACTED") is State.DISTRACTED
    assert State.DISTRACTED.report_name == "distracted"
    assert State.FOCUSED.report_name == "driving"
    with pytest.raises(ValueError):
        State.parse("asleep")


def test_layout_membership_counts():
    m = ChannelLayout().membership()
    assert m.shape == (7, 14)
    assert m.sum(axis=1).tolist() == [4, 4, 7, 7, 2, 2, 2]


def test_raw_csv_roundtrip(tmp_path, rng):
    s = RawSession(3, rng.normal(size=(300, 14)), rng.integers(0, 16, 300))
    path = tmp_path / "p03.csv"
    write_raw_csv(s, path)
    back = load_raw_csv(path)
    assert back.participant_id == 3
    assert np.array_equal(back.samples, s.samples)
    assert np.array_equal(back.tasks, s.tasks)


def _write_rows(path, rows, header=RAW_HEADER):
    path.write_text(",".join(header) + "\n" + "".join(",".join(map(str, r)) + "\n" for r in rows))


def test_raw_csv_errors(tmp_path):
    good = [[i / 128, *([0.0] * 14), 0] for i in range(300)]
    p = tmp_path / "p1.csv"

    bad = [r[:-2] + [r[-1]] for r in good]
    _write_rows(p, bad, RAW_HEADER[:-2] + RAW_HEADER[-1:])
    with pytest.raises(DataError, match="channel count"):
        load_raw_csv(p)

    swapped = [list(r) for r in good]
    swapped[5][0], swapped[6][0] = swapped[6][0], swapped[5][0]
    _write_rows(p, swapped)
    with pytest.raises(DataError, match="non-monotonic"):
        load_raw_csv(p)

    _write_rows(p, good[:100])
    with pytest.raises(DataError, match="too short"):
        load_raw_csv(p)

    task_bad = [list(r) for r in good]
    task_bad[0][-1] = 16
    _write_rows(p, task_bad)
    with pytest.raises(DataError):
        load_raw_csv(p)


def test_label_map_total_and_roundtrip(tmp_path):
    lm = LabelMap.default()
    assert map_task_to_state(0, lm) is State.FOCUSED
    assert all(map_task_to_state(t, lm) is State.DISTRACTED for t in range(1, 16))
    path = tmp_path / "labels.txt"
    write_label_map(lm, path)
    assert load_label_map(path) == lm
    with pytest.raises(Exception):
        LabelMap({t: State.FOCUSED for t in range(15)})


def test_split_disjoint_deterministic(tmp_path):
    a = split_by_participant(range(1, 19), (12, 2, 4), seed=5)
    b = split_by_participant(range(1, 19), (12, 2, 4), seed=5)
    assert a == b
    assert len(a.train) == 12 and len(a.validation) == 2 and len(a.test) == 4
    assert not (a.train & a.test) and not (a.train & a.validation)
    write_split(a, tmp_path / "split.csv")
    assert load_split(tmp_path / "split.csv").test == a.test
    with pytest.raises(ValueError):
        split_by_participant(range(5), (3, 1, 2), seed=0)


def test_majority_and_frame_count():
    assert majority([0, 0, 1]) == 0
    assert majority([0, 1, 1, 0]) in (0, 1)
    assert frames_in(38400, 256, 32) == 1193
    assert frames_in(256, 256, 32) == 1
