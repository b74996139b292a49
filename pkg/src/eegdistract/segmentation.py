"""Overlapping fixed-length windows with majority weak labels, and LRCN sequences."""
from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .data import DataError, LabelMap, State
from .dsp import FeatureSeries, N_FEATURES

WIN = 40
HOP = 20
SEQ_LEN = 4
FRAME_SECONDS = 2.0
FRAME_STEP_SECONDS = 0.25


@dataclass(frozen=True, eq=False)
class Window:
    values: np.ndarray
    state: State
    participant_id: int
    start_frame: int

    def __post_init__(self):
        if self.values.ndim != 2:
            raise DataError("window values must be 2-D (frames x features)")

    @property
    def key(self) -> tuple[int, int]:
        return (self.participant_id, self.start_frame)

    def __eq__(self, other):
        if not isinstance(other, Window):
            return NotImplemented
        return (self.key == other.key and self.state == other.state
                and np.array_equal(self.values, other.values))

    __hash__ = None


@dataclass(frozen=True)
class WindowSequence:
    windows: tuple[Window, ...]

    def __post_init__(self):
        ws = self.windows
        if len({w.participant_id for w in ws}) != 1:
            raise DataError("sequence windows must share a participant")
        deltas = {b.start_frame - a.start_frame for a, b in zip(ws, ws[1:])}
        if len(ws) > 1 and len(deltas) != 1:
            raise DataError("sequence windows must be evenly spaced")

    @property
    def state(self) -> State:
        return self.windows[-1].state

    @property
    def values(self) -> np.ndarray:
        return np.stack([w.values for w in self.windows])


def window_count(n_frames: int, win: int = WIN, hop: int = HOP) -> int:
    return 0 if n_frames < win else (n_frames - win) // hop + 1


def window_span_seconds(win: int = WIN) -> float:
    """Raw-signal time covered by ``win`` consecutive spectral frames."""
    return FRAME_SECONDS + (win - 1) * FRAME_STEP_SECONDS


def majority_state(frame_states: Sequence[int]) -> State:
    n_distracted = int(np.count_nonzero(np.asarray(frame_states) == State.DISTRACTED))
    # ties resolve to DISTRACTED
    return State.DISTRACTED if 2 * n_distracted >= len(frame_states) else State.FOCUSED


def segment_series(series: FeatureSeries, label_map: LabelMap, win: int = WIN,
                   hop: int = HOP) -> list[Window]:
    n = len(series)
    if n < win:
        warnings.warn(f"participant {series.participant_id}: {n} frames < window length {win}; "
                      "no windows produced", stacklevel=2)
        return []
    frame_states = label_map.as_array()[series.tasks]
    out = []
    for start in range(0, n - win + 1, hop):
        out.append(Window(
            values=series.values[start:start + win],
            state=majority_state(frame_states[start:start + win]),
            participant_id=series.participant_id,
            start_frame=start,
        ))
    return out


def build_sequences(windows: Sequence[Window], length: int = SEQ_LEN,
                    hop: int = HOP) -> list[WindowSequence]:
    """Every run of ``length`` consecutive windows, labelled by its last window."""
    windows = list(windows)
    for a, b in zip(windows, windows[1:]):
        if b.participant_id != a.participant_id or b.start_frame - a.start_frame != hop:
            raise DataError(f"non-uniform hop between windows at frames {a.start_frame} and {b.start_frame}")
    return [WindowSequence(tuple(windows[i - length + 1:i + 1]))
            for i in range(length - 1, len(windows))]


def group_by_participant(windows: Iterable[Window]) -> dict[int, list[Window]]:
    groups: dict[int, list[Window]] = {}
    for w in windows:
        groups.setdefault(w.participant_id, []).append(w)
    for ws in groups.values():
        ws.sort(key=lambda w: w.start_frame)
    return groups


def stack_windows(windows: Sequence[Window]) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([w.values for w in windows]) if windows else np.zeros((0, WIN, N_FEATURES))
    y = np.array([int(w.state) for w in windows], dtype=np.int64)
    return X, y


def stack_sequences(seqs: Sequence[WindowSequence]) -> tuple[np.ndarray, np.ndarray]:
    X = np.stack([s.values for s in seqs]) if seqs else np.zeros((0, SEQ_LEN, WIN, N_FEATURES))
    y = np.array([int(s.state) for s in seqs], dtype=np.int64)
    return X, y


class WindowSegmenter(BaseEstimator, TransformerMixin):
    """Transformer from a list of :class:`FeatureSeries` to a flat list of windows."""

    def __init__(self, label_map=None, win=WIN, hop=HOP):
        self.label_map = label_map
        self.win = win
        self.hop = hop

    def fit(self, series=None, y=None):
        return self

    def transform(self, series) -> list[Window]:
        label_map = self.label_map or LabelMap.default()
        if isinstance(series, FeatureSeries):
            series = [series]
        out = []
        for s in series:
            out.extend(segment_series(s, label_map, self.win, self.hop))
        return out


# ---------------------------------------------------------------- EDW1 file

_MAGIC = b"EDW1"
_HEADER = struct.Struct("<4sIII")
_RECORD = struct.Struct("<IIB")


def write_windows(windows: Sequence[Window], path) -> None:
    if windows:
        win, dim = windows[0].values.shape
    else:
        win, dim = WIN, N_FEATURES
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(_MAGIC, dim, win, len(windows)))
        for w in windows:
            if w.values.shape != (win, dim):
                raise DataError("all windows in a file must share one shape")
            fh.write(_RECORD.pack(w.participant_id, w.start_frame, int(w.state)))
            fh.write(np.ascontiguousarray(w.values, dtype="<f8").tobytes())


def read_windows(path) -> list[Window]:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size or data[:4] != _MAGIC:
        raise DataError(f"{path}: not an EDW1 windows file")
    _, dim, win, count = _HEADER.unpack_from(data, 0)
    payload = win * dim * 8
    if len(data) != _HEADER.size + count * (_RECORD.size + payload):
        raise DataError(f"{path}: truncated or oversized windows file")
    out = []
    off = _HEADER.size
    for _ in range(count):
        pid, start, state = _RECORD.unpack_from(data, off)
        off += _RECORD.size
        values = np.frombuffer(data, dtype="<f8", count=win * dim, offset=off).reshape(win, dim).astype(np.float64)
        off += payload
        out.append(Window(values, State(state), pid, start))
    return out
