"""Raw EEG -> 4 Hz band-power feature stream.

Pipeline per session: causal 4-40 Hz Butterworth band-pass on every channel,
2 s frames every 0.25 s, one-sided power spectrum per frame, then per-band
statistics and regional accumulations (266 values per frame).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import signal as sps
from sklearn.base import BaseEstimator, TransformerMixin

from .data import (
    CHANNEL_NAMES,
    DEFAULT_LAYOUT,
    MIN_SAMPLES,
    SAMPLE_RATE,
    ChannelLayout,
    DataError,
    RawSession,
    frames_in,
    majority,
)

FRAME_LEN = 256
FRAME_STRIDE = 32
N_FEATURES = 266
STATS = ("avg_power", "peak_power", "peak_freq")
MAIN_BANDS = ("low-beta", "high-beta", "gamma")
# accumulations over the main processing bands, as index tuples into MAIN_BANDS
MAIN_ACCUMULATIONS = (
    ("beta", (0, 1)),
    ("high-beta+gamma", (1, 2)),
    ("beta+gamma", (0, 1, 2)),
)


@dataclass(frozen=True)
class BandDefinition:
    name: str
    lo: float
    hi: float

    def __post_init__(self):
        if not (4 <= self.lo < self.hi <= 40.5):
            raise ValueError(f"band {self.name}: need 4 <= lo < hi <= 40.5, got [{self.lo}, {self.hi})")

    def contains(self, freq):
        return (freq >= self.lo) & (freq < self.hi)


DEFAULT_BANDS = (
    BandDefinition("theta", 4.0, 8.0),
    BandDefinition("alpha", 8.0, 12.0),
    BandDefinition("low-beta", 12.0, 16.0),
    BandDefinition("high-beta", 16.0, 25.0),
    BandDefinition("gamma", 25.0, 40.5),
)


def check_bands(bands: Sequence[BandDefinition]) -> tuple[BandDefinition, ...]:
    bands = tuple(bands)
    if [b.name for b in bands] != [b.name for b in DEFAULT_BANDS]:
        raise ValueError("bands must be theta, alpha, low-beta, high-beta, gamma in that order")
    for a, b in zip(bands, bands[1:]):
        if a.hi > b.lo:
            raise ValueError(f"bands {a.name} and {b.name} overlap")
    return bands


# ---------------------------------------------------------------- filtering

def butterworth_sos(lo: float, hi: float, fs: float) -> np.ndarray:
    """Second-order sections: 2nd-order high-pass at ``lo`` then low-pass at ``hi``.

    Bilinear transform with frequency pre-warping, Q = 1/sqrt(2).
    """
    if not (0 < lo < hi < fs / 2):
        raise ValueError(f"invalid cutoffs: need 0 < lo < hi < fs/2, got lo={lo}, hi={hi}, fs={fs}")
    q = 1 / math.sqrt(2)
    sections = []
    for fc, kind in ((lo, "high"), (hi, "low")):
        w0 = 2 * math.pi * fc / fs
        cs, alpha = math.cos(w0), math.sin(w0) / (2 * q)
        if kind == "high":
            b = [(1 + cs) / 2, -(1 + cs), (1 + cs) / 2]
        else:
            b = [(1 - cs) / 2, 1 - cs, (1 - cs) / 2]
        a = [1 + alpha, -2 * cs, 1 - alpha]
        sections.append([*(v / a[0] for v in b), 1.0, a[1] / a[0], a[2] / a[0]])
    return np.array(sections)


def bandpass_filter(x, lo: float = 4.0, hi: float = 40.0, fs: float = SAMPLE_RATE) -> np.ndarray:
    """Causal band-pass along the first axis, starting from zero state."""
    sos = butterworth_sos(lo, hi, fs)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] < 1:
        raise ValueError("signal must have at least one sample")
    return sps.sosfilt(sos, x, axis=0)


class StreamingBandpass:
    """Band-pass that can be fed in chunks; carries biquad state between calls."""

    def __init__(self, n_channels: int, lo: float = 4.0, hi: float = 40.0, fs: float = SAMPLE_RATE):
        self.sos = butterworth_sos(lo, hi, fs)
        self.zi = np.zeros((self.sos.shape[0], 2, n_channels))

    def process(self, chunk) -> np.ndarray:
        out, self.zi = sps.sosfilt(self.sos, np.asarray(chunk, dtype=np.float64), axis=0, zi=self.zi)
        return out


# ---------------------------------------------------------------- spectra

@lru_cache(maxsize=8)
def _fft_plan(n: int):
    bits = n.bit_length() - 1
    rev = np.zeros(n, dtype=np.intp)
    for i in range(n):
        rev[i] = int(format(i, f"0{bits}b")[::-1], 2) if bits else 0
    twiddles = np.exp(-2j * np.pi * np.arange(n // 2) / n)
    return rev, twiddles


def fft_radix2(x) -> np.ndarray:
    """Iterative Cooley-Tukey DFT over the last axis (length must be a power of two)."""
    x = np.asarray(x)
    n = x.shape[-1]
    if n < 1 or n & (n - 1):
        raise ValueError(f"length must be a power of two, got {n}")
    rev, tw = _fft_plan(n)
    a = np.ascontiguousarray(x[..., rev], dtype=np.complex128)
    lead = a.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        blocks = a.reshape(*lead, n // size, size)
        odd = blocks[..., half:] * tw[:: n // size][:half]
        even = blocks[..., :half]
        blocks[..., half:] = even - odd
        even += odd
        size *= 2
    return a


def window_function(name: str, n: int = FRAME_LEN) -> np.ndarray | None:
    if name == "rectangular":
        return None
    if name == "hann":
        return np.hanning(n + 1)[:-1]
    raise ValueError(f"unknown window function {name!r}")


def power_spectrum(frame, window: str = "rectangular") -> np.ndarray:
    """One-sided powers |X_k|^2 / N^2 for k = 0..N/2; batches over leading axes."""
    frame = np.asarray(frame, dtype=np.float64)
    n = frame.shape[-1]
    if n != FRAME_LEN:
        raise ValueError(f"frame must have {FRAME_LEN} samples, got {n}")
    w = window_function(window, n)
    if w is not None:
        frame = frame * w
    spec = fft_radix2(frame)[..., : n // 2 + 1]
    return (spec.real ** 2 + spec.imag ** 2) / (n * n)


def bin_frequencies(n: int = FRAME_LEN, fs: float = SAMPLE_RATE) -> np.ndarray:
    return np.arange(n // 2 + 1) * (fs / n)


def band_features(spec, band: BandDefinition, fs: float = SAMPLE_RATE):
    """(avg_power, peak_power, peak_freq) of the bins whose centre lies in the band."""
    spec = np.asarray(spec, dtype=np.float64)
    freqs = bin_frequencies(2 * (spec.shape[-1] - 1), fs)
    mask = band.contains(freqs)
    if not mask.any():
        raise ValueError(f"band {band.name} contains no bins")
    sub = spec[..., mask]
    peak_idx = np.argmax(sub, axis=-1)
    peak_power = np.take_along_axis(sub, peak_idx[..., None], axis=-1)[..., 0]
    peak_freq = np.where(peak_power > 0, freqs[mask][peak_idx], band.lo)
    return sub.mean(axis=-1), peak_power, peak_freq


def regional_aggregate(channel_band_avg, layout: ChannelLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """56 regional values from a (..., 14, 5) matrix of per-channel band average powers.

    First 35: region x band sums.  Last 21: region x main-band accumulation.
    """
    m = np.asarray(channel_band_avg, dtype=np.float64)
    if m.shape[-2:] != (layout.n_channels, len(DEFAULT_BANDS)):
        raise ValueError(f"expected (..., 14, 5) matrix, got {m.shape}")
    regional = np.einsum("rc,...cb->...rb", layout.membership(), m)
    main = regional[..., 2:5]
    acc = np.stack([main[..., list(idx)].sum(axis=-1) for _, idx in MAIN_ACCUMULATIONS], axis=-1)
    lead = m.shape[:-2]
    return np.concatenate((regional.reshape(*lead, -1), acc.reshape(*lead, -1)), axis=-1)


def frame_features(spectra, bands=DEFAULT_BANDS, layout: ChannelLayout = DEFAULT_LAYOUT,
                   fs: float = SAMPLE_RATE) -> np.ndarray:
    """(..., 14, 129) spectra -> (..., 266) feature vectors."""
    stats = [band_features(spectra, b, fs) for b in bands]
    per_channel = np.stack([np.stack(s, axis=-1) for s in stats], axis=-2)  # (..., 14, 5, 3)
    lead = per_channel.shape[:-3]
    regional = regional_aggregate(per_channel[..., 0], layout)
    return np.concatenate((per_channel.reshape(*lead, -1), regional), axis=-1)


def feature_names(bands=DEFAULT_BANDS, layout: ChannelLayout = DEFAULT_LAYOUT) -> list[tuple[str, str, str]]:
    """(source, band, statistic) for every feature index."""
    names = [(ch, b.name, s) for ch in layout.names for b in bands for s in STATS]
    names += [(r, b.name, "sum_avg_power") for r in layout.regions for b in bands]
    names += [(r, acc, "sum_avg_power") for r in layout.regions for acc, _ in MAIN_ACCUMULATIONS]
    return names


def peak_freq_columns() -> np.ndarray:
    return np.array([i for i, (_, _, s) in enumerate(feature_names()) if s == "peak_freq"])


def power_columns() -> np.ndarray:
    return np.array([i for i, (_, _, s) in enumerate(feature_names()) if s != "peak_freq"])


def write_feature_map(path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "column", "source", "band", "statistic"])
        for i, (src, band, stat) in enumerate(feature_names()):
            w.writerow([i, f"f{i:03d}", src, band, stat])


# ---------------------------------------------------------------- series

@dataclass(frozen=True, eq=False)
class FeatureFrame:
    t: float
    values: np.ndarray
    task: int


@dataclass(frozen=True, eq=False)
class FeatureSeries:
    """Frames at 0.25 s spacing, stored column-wise."""

    participant_id: int
    times: np.ndarray
    values: np.ndarray
    tasks: np.ndarray

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] != N_FEATURES:
            raise DataError(f"feature frames must have {N_FEATURES} values, got shape {self.values.shape}")
        if not (len(self.times) == len(self.values) == len(self.tasks)):
            raise DataError("times, values and tasks lengths differ")

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i) -> FeatureFrame:
        return FeatureFrame(float(self.times[i]), self.values[i], int(self.tasks[i]))

    def __eq__(self, other):
        if not isinstance(other, FeatureSeries):
            return NotImplemented
        return (self.participant_id == other.participant_id
                and np.array_equal(self.times, other.times)
                and np.array_equal(self.values, other.values)
                and np.array_equal(self.tasks, other.tasks))

    __hash__ = None


def _frame_tasks(tasks: np.ndarray, starts: np.ndarray, frame_len: int) -> np.ndarray:
    out = np.empty(len(starts), dtype=np.int64)
    for i, s in enumerate(starts):
        seg = tasks[s:s + frame_len]
        # fast path: a frame inside one task block
        out[i] = seg[0] if seg[0] == seg[-1] and np.all(seg == seg[0]) else majority(seg.tolist())
    return out


def features_from_filtered(filtered: np.ndarray, tasks: np.ndarray, starts: np.ndarray,
                           bands=DEFAULT_BANDS, layout=DEFAULT_LAYOUT, window="rectangular",
                           frame_len: int = FRAME_LEN, fs: float = SAMPLE_RATE) -> np.ndarray:
    idx = starts[:, None] + np.arange(frame_len)
    frames = filtered[idx]  # (F, frame_len, 14)
    spectra = power_spectrum(np.swapaxes(frames, 1, 2), window)
    return frame_features(spectra, bands, layout, fs)


def extract_feature_series(session: RawSession, bands=DEFAULT_BANDS, layout=DEFAULT_LAYOUT, *,
                           window: str = "rectangular", lo: float = 4.0, hi: float = 40.0,
                           frame_len: int = FRAME_LEN, stride: int = FRAME_STRIDE) -> FeatureSeries:
    if session.n_samples < max(frame_len, MIN_SAMPLES):
        raise DataError(f"session too short: {session.n_samples} samples")
    bands = check_bands(bands)
    filtered = bandpass_filter(session.samples, lo, hi, session.sample_rate)
    n_frames = frames_in(session.n_samples, frame_len, stride)
    starts = np.arange(n_frames) * stride
    values = features_from_filtered(filtered, session.tasks, starts, bands, layout, window,
                                    frame_len, session.sample_rate)
    return FeatureSeries(
        participant_id=session.participant_id,
        times=starts / session.sample_rate,
        values=values,
        tasks=_frame_tasks(session.tasks, starts, frame_len),
    )


class StreamingFeatureExtractor:
    """Incremental counterpart of :func:`extract_feature_series`.

    Feed raw chunks with :meth:`push`; each call returns the frames that became
    complete.  Output is bit-identical to batch extraction of the concatenation.
    """

    def __init__(self, participant_id: int = 0, bands=DEFAULT_BANDS, layout=DEFAULT_LAYOUT, *,
                 window: str = "rectangular", lo: float = 4.0, hi: float = 40.0,
                 frame_len: int = FRAME_LEN, stride: int = FRAME_STRIDE, fs: int = SAMPLE_RATE):
        self.participant_id = participant_id
        self.bands = check_bands(bands)
        self.layout = layout
        self.window = window
        self.frame_len = frame_len
        self.stride = stride
        self.fs = fs
        self._filter = StreamingBandpass(layout.n_channels, lo, hi, fs)
        self._buf = np.zeros((0, layout.n_channels))
        self._tasks = np.zeros(0, dtype=np.int64)
        self._offset = 0  # absolute sample index of _buf[0]
        self._next_start = 0

    def push(self, samples, tasks) -> list[FeatureFrame]:
        samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
        tasks = np.atleast_1d(np.asarray(tasks, dtype=np.int64))
        self._buf = np.concatenate((self._buf, self._filter.process(samples)))
        self._tasks = np.concatenate((self._tasks, tasks))
        end = self._offset + len(self._buf)
        starts = []
        while self._next_start + self.frame_len <= end:
            starts.append(self._next_start - self._offset)
            self._next_start += self.stride
        frames = []
        if starts:
            starts = np.array(starts)
            values = features_from_filtered(self._buf, self._tasks, starts, self.bands, self.layout,
                                            self.window, self.frame_len, self.fs)
            labels = _frame_tasks(self._tasks, starts, self.frame_len)
            for s, v, lab in zip(starts, values, labels):
                frames.append(FeatureFrame(float((s + self._offset) / self.fs), v, int(lab)))
        drop = self._next_start - self._offset
        if drop > 0:
            self._buf = self._buf[drop:]
            self._tasks = self._tasks[drop:]
            self._offset += drop
        return frames


class FeatureExtractor(BaseEstimator, TransformerMixin):
    """Transformer from :class:`RawSession` objects to :class:`FeatureSeries`.

    Stateless; ``fit`` exists for pipeline compatibility.
    """

    def __init__(self, bands=DEFAULT_BANDS, window="rectangular", lo=4.0, hi=40.0,
                 frame_len=FRAME_LEN, stride=FRAME_STRIDE):
        self.bands = bands
        self.window = window
        self.lo = lo
        self.hi = hi
        self.frame_len = frame_len
        self.stride = stride

    def fit(self, sessions=None, y=None):
        check_bands(self.bands)
        window_function(self.window)
        butterworth_sos(self.lo, self.hi, SAMPLE_RATE)
        return self

    def transform(self, sessions) -> list[FeatureSeries]:
        if isinstance(sessions, RawSession):
            sessions = [sessions]
        return [extract_feature_series(s, self.bands, window=self.window, lo=self.lo, hi=self.hi,
                                       frame_len=self.frame_len, stride=self.stride)
                for s in sessions]


FEATURE_HEADER = ["t", *(f"f{i:03d}" for i in range(N_FEATURES)), "task"]


def write_feature_csv(series: FeatureSeries, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FEATURE_HEADER)
        for t, row, task in zip(series.times.tolist(), series.values.tolist(), series.tasks.tolist()):
            w.writerow([repr(t), *map(repr, row), task])


def load_feature_csv(path, participant_id: int | None = None) -> FeatureSeries:
    from .data import _id_from_stem

    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != FEATURE_HEADER:
            raise DataError(f"{path}: not a feature CSV (bad header)")
        rows = [r for r in reader if r]
    if not rows:
        raise DataError(f"{path}: no frames")
    try:
        arr = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if participant_id is None:
        participant_id = _id_from_stem(path.stem)
    return FeatureSeries(participant_id, arr[:, 0], arr[:, 1:-1], arr[:, -1].astype(np.int64))


__all__ = [
    "BandDefinition", "DEFAULT_BANDS", "FeatureExtractor", "FeatureFrame", "FeatureSeries",
    "StreamingBandpass", "StreamingFeatureExtractor", "band_features", "bandpass_filter",
    "butterworth_sos", "extract_feature_series", "feature_names", "fft_radix2", "power_spectrum",
    "regional_aggregate", "CHANNEL_NAMES",
]
