"""Domain types, raw-session ingestion, label mapping and participant splits."""
from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

SAMPLE_RATE = 128
N_TASKS = 16
MIN_SAMPLES = 256

CHANNEL_NAMES = (
    "AF3", "F7", "F3", "FC5", "T7", "P7", "O1",
    "O2", "P8", "T8", "FC6", "F4", "F8", "AF4",
)

REGION_NAMES = (
    "left-frontal",
    "right-frontal",
    "left-hemisphere",
    "right-hemisphere",
    "left-temporal-parietal",
    "right-temporal-parietal",
    "occipital",
)


class DataError(ValueError):
    """Malformed input data (files, sessions, label maps)."""


class ConfigError(ValueError):
    """Invalid configuration value or mapping."""


class State(enum.IntEnum):
    FOCUSED = 0
    DISTRACTED = 1

    @classmethod
    def parse(cls, text: str) -> "State":
        key = text.strip().upper()
        if key == "DRIVING":
            return cls.FOCUSED
        try:
            return cls[key]
        except KeyError:
            raise ConfigError(f"unknown state {text!r}") from None

    @property
    def report_name(self) -> str:
        # "driving" is how per-class focused metrics are labelled in reports
        return "distracted" if self is State.DISTRACTED else "driving"


@dataclass(frozen=True)
class ChannelLayout:
    names: tuple[str, ...] = CHANNEL_NAMES
    regions: Mapping[str, tuple[int, ...]] = field(default_factory=lambda: {
        "left-frontal": (0, 1, 2, 3),
        "right-frontal": (10, 11, 12, 13),
        "left-hemisphere": (0, 1, 2, 3, 4, 5, 6),
        "right-hemisphere": (7, 8, 9, 10, 11, 12, 13),
        "left-temporal-parietal": (4, 5),
        "right-temporal-parietal": (8, 9),
        "occipital": (6, 7),
    })

    def __post_init__(self):
        if len(self.names) != 14:
            raise ConfigError(f"channel layout needs 14 channels, got {len(self.names)}")
        if len(self.regions) != 7:
            raise ConfigError(f"channel layout needs 7 regions, got {len(self.regions)}")
        for name, members in self.regions.items():
            if not members:
                raise ConfigError(f"region {name!r} is empty")
            if any(not 0 <= i < 14 for i in members):
                raise ConfigError(f"region {name!r} has channel index outside 0..13")

    @property
    def n_channels(self) -> int:
        return len(self.names)

    def membership(self) -> np.ndarray:
        """Region x channel 0/1 matrix, rows in region insertion order."""
        m = np.zeros((len(self.regions), self.n_channels))
        for r, members in enumerate(self.regions.values()):
            m[r, list(members)] = 1.0
        return m


DEFAULT_LAYOUT = ChannelLayout()


@dataclass(frozen=True, eq=False)
class RawSession:
    participant_id: int
    samples: np.ndarray
    tasks: np.ndarray
    sample_rate: int = SAMPLE_RATE

    def __post_init__(self):
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        tasks = np.ascontiguousarray(self.tasks, dtype=np.int64)
        if samples.ndim != 2 or samples.shape[1] != len(CHANNEL_NAMES):
            raise DataError(f"channel count mismatch: samples shape {samples.shape}")
        if samples.shape[0] < MIN_SAMPLES:
            raise DataError(f"session too short: {samples.shape[0]} < {MIN_SAMPLES} samples")
        if tasks.shape != (samples.shape[0],):
            raise DataError("tasks length must equal sample count")
        if tasks.min() < 0 or tasks.max() >= N_TASKS:
            raise DataError("task id outside 0..15")
        if self.sample_rate != SAMPLE_RATE:
            raise DataError(f"sample rate must be {SAMPLE_RATE} Hz")
        samples.setflags(write=False)
        tasks.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "tasks", tasks)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.n_samples) / self.sample_rate

    def __eq__(self, other):
        if not isinstance(other, RawSession):
            return NotImplemented
        return (self.participant_id == other.participant_id
                and np.array_equal(self.samples, other.samples)
                and np.array_equal(self.tasks, other.tasks))

    __hash__ = None


RAW_HEADER = ["t", *CHANNEL_NAMES, "task"]


def load_raw_csv(path, participant_id: int | None = None) -> RawSession:
    """Read a Raw CSV file into a :class:`RawSession`.

    ``participant_id`` defaults to the trailing integer in the file stem
    (``p07.csv`` -> 7), or 0 when the stem carries none.
    """
    path = Path(path)
    if participant_id is None:
        participant_id = _id_from_stem(path.stem)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise DataError(f"{path}: empty file") from None
        if header != RAW_HEADER:
            n_chan = len(header) - 2
            if n_chan != len(CHANNEL_NAMES):
                raise DataError(f"{path}: channel count mismatch ({n_chan} channel columns)")
            raise DataError(f"{path}: unexpected header {header}")
        rows = [r for r in reader if r]
    if not rows:
        raise DataError(f"{path}: no data rows")
    try:
        arr = np.array([[float(v) for v in r] for r in rows])
    except ValueError as exc:
        raise DataError(f"{path}: {exc}") from None
    if arr.shape[1] != len(RAW_HEADER):
        raise DataError(f"{path}: ragged rows")
    t = arr[:, 0]
    bad = np.flatnonzero(np.diff(t) <= 0)
    if bad.size:
        raise DataError(f"{path}: non-monotonic time at data row {bad[0] + 2}")
    task = arr[:, -1]
    if np.any(task != np.round(task)) or task.min() < 0 or task.max() >= N_TASKS:
        raise DataError(f"{path}: task id outside 0..15")
    if arr.shape[0] < MIN_SAMPLES:
        raise DataError(f"{path}: session too short ({arr.shape[0]} rows)")
    return RawSession(participant_id, arr[:, 1:-1], task.astype(np.int64))


def write_raw_csv(session: RawSession, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_HEADER)
        t = session.times
        for i in range(session.n_samples):
            w.writerow([repr(float(t[i])), *map(repr, session.samples[i].tolist()),
                        int(session.tasks[i])])


def _id_from_stem(stem: str) -> int:
    digits = ""
    for ch in reversed(stem):
        if not ch.isdigit():
            break
        digits = ch + digits
    return int(digits) if digits else 0


@dataclass(frozen=True)
class LabelMap:
    entries: Mapping[int, State]

    def __post_init__(self):
        missing = sorted(set(range(N_TASKS)) - set(self.entries))
        if missing:
            raise ConfigError(f"label map missing task ids {missing}")
        extra = sorted(set(self.entries) - set(range(N_TASKS)))
        if extra:
            raise ConfigError(f"label map has task ids outside 0..15: {extra}")

    @classmethod
    def default(cls) -> "LabelMap":
        return cls({k: State.FOCUSED if k == 0 else State.DISTRACTED for k in range(N_TASKS)})

    def as_array(self) -> np.ndarray:
        return np.array([int(self.entries[k]) for k in range(N_TASKS)], dtype=np.int64)


def map_task_to_state(task: int, label_map: LabelMap) -> State:
    try:
        return label_map.entries[int(task)]
    except KeyError:
        raise ConfigError(f"task {task} absent from label map") from None


def load_label_map(path) -> LabelMap:
    entries = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected task_id=STATE")
        key, value = (s.strip() for s in line.split("=", 1))
        try:
            task = int(key)
        except ValueError:
            raise ConfigError(f"{path}:{lineno}: bad task id {key!r}") from None
        if task in entries:
            raise ConfigError(f"{path}:{lineno}: duplicate task id {task}")
        try:
            entries[task] = State.parse(value)
        except ConfigError as exc:
            raise ConfigError(f"{path}:{lineno}: {exc}") from None
    return LabelMap(entries)


def write_label_map(label_map: LabelMap, path) -> None:
    lines = [f"{k}={label_map.entries[k].name}" for k in range(N_TASKS)]
    Path(path).write_text("\n".join(lines) + "\n")


ROLES = ("train", "val", "test")


@dataclass(frozen=True)
class DatasetSplit:
    train: frozenset
    validation: frozenset
    test: frozenset
    seed: int = 0

    def __post_init__(self):
        for name in ("train", "validation", "test"):
            object.__setattr__(self, name, frozenset(getattr(self, name)))
        if (self.train & self.validation) or (self.train & self.test) or (self.validation & self.test):
            raise DataError("split sets must be pairwise disjoint")

    def role_of(self, participant_id) -> str:
        if participant_id in self.train:
            return "train"
        if participant_id in self.validation:
            return "val"
        if participant_id in self.test:
            return "test"
        raise KeyError(participant_id)

    @property
    def participants(self) -> frozenset:
        return self.train | self.validation | self.test


def split_by_participant(participants: Sequence, counts: tuple[int, int, int],
                         seed: int) -> DatasetSplit:
    n_train, n_val, n_test = counts
    participants = list(participants)
    if len(set(participants)) != len(participants):
        raise DataError("duplicate participant ids")
    if min(counts) < 0 or n_train + n_val + n_test != len(participants):
        raise ConfigError(f"split counts {tuple(counts)} do not sum to {len(participants)} participants")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(participants))
    shuffled = [participants[i] for i in order]
    return DatasetSplit(
        train=frozenset(shuffled[:n_train]),
        validation=frozenset(shuffled[n_train:n_train + n_val]),
        test=frozenset(shuffled[n_train + n_val:]),
        seed=seed,
    )


def write_split(split: DatasetSplit, path) -> None:
    rows = sorted((pid, split.role_of(pid)) for pid in split.participants)
    Path(path).write_text("".join(f"{pid},{role}\n" for pid, role in rows))


def load_split(path) -> DatasetSplit:
    sets = {role: set() for role in ROLES}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 2 or parts[1] not in sets:
            raise DataError(f"{path}:{lineno}: expected participant_id,role")
        try:
            pid = int(parts[0])
        except ValueError:
            raise DataError(f"{path}:{lineno}: bad participant id {parts[0]!r}") from None
        sets[parts[1]].add(pid)
    return DatasetSplit(sets["train"], sets["val"], sets["test"])


def majority(values: Iterable[int]) -> int:
    """Most frequent value; ties go to the tied value seen latest."""
    values = list(values)
    counts: dict[int, int] = {}
    last: dict[int, int] = {}
    for i, v in enumerate(values):
        counts[v] = counts.get(v, 0) + 1
        last[v] = i
    best = max(counts.values())
    return max((v for v, c in counts.items() if c == best), key=last.__getitem__)


def frames_in(n_samples: int, frame_len: int, stride: int) -> int:
    if n_samples < frame_len:
        return 0
    return math.floor((n_samples - frame_len) / stride) + 1
