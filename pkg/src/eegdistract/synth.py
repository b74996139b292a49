"""Seeded synthetic EEG sessions with state-dependent band power.

Each channel is a sum of one sinusoid per band plus white noise.  Amplitudes
switch with the task schedule, so band-power ground truth is known exactly.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .data import (
    DEFAULT_LAYOUT,
    SAMPLE_RATE,
    ChannelLayout,
    LabelMap,
    RawSession,
    State,
    write_raw_csv,
)
from .dsp import DEFAULT_BANDS

BASE_AMPLITUDES = {"theta": 10.0, "alpha": 8.0, "low-beta": 5.0, "high-beta": 4.0, "gamma": 2.5}


def default_multipliers(theta=1.8, alpha=1.4) -> dict:
    out = {}
    for region in ("left-frontal", "right-frontal"):
        out[(State.DISTRACTED, region, "theta")] = theta
        out[(State.DISTRACTED, region, "alpha")] = alpha
    return out


@dataclass(frozen=True)
class GeneratorProfile:
    """Knobs of the synthetic corpus.

    ``multipliers`` maps (state, region, band) to an amplitude factor; missing
    entries mean 1.  A channel in several regions gets the product.
    """

    multipliers: Mapping = field(default_factory=default_multipliers)
    base_amplitudes: Mapping = field(default_factory=lambda: dict(BASE_AMPLITUDES))
    noise_sigma: float = 2.0
    block_range_s: tuple = (30.0, 60.0)
    distracted_fraction: float = 0.36
    duration_s: float = 2400.0
    participants: int = 18
    focused_tasks: tuple = (0,)
    distracted_tasks: tuple = tuple(range(1, 16))

    def __post_init__(self):
        if any(v <= 0 for v in self.multipliers.values()):
            raise ValueError("multipliers must be > 0")
        if self.duration_s < 4:
            raise ValueError("duration must be >= 4 s")
        if not 0 < self.distracted_fraction < 1:
            raise ValueError("distracted fraction must be in (0, 1)")
        lo, hi = self.block_range_s
        if not 0 < lo <= hi:
            raise ValueError("block range must satisfy 0 < min <= max")
        if self.noise_sigma < 0:
            raise ValueError("noise sigma must be >= 0")
        if set(self.base_amplitudes) != {b.name for b in DEFAULT_BANDS}:
            raise ValueError("base amplitudes needed for every band")

    @classmethod
    def desk(cls, **kw) -> "GeneratorProfile":
        kw.setdefault("duration_s", 300.0)
        kw.setdefault("participants", 6)
        return cls(**kw)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration_s * SAMPLE_RATE))

    def label_map(self) -> LabelMap:
        entries = {t: State.FOCUSED for t in self.focused_tasks}
        entries.update({t: State.DISTRACTED for t in self.distracted_tasks})
        return LabelMap(entries)


def task_schedule(profile: GeneratorProfile, rng) -> np.ndarray:
    """Per-sample task ids: alternating focused/distracted blocks.

    Block lengths are drawn from ``block_range_s`` and each state's blocks are
    then rescaled so the distracted share of time equals the target.
    """
    n = profile.n_samples
    lo, hi = profile.block_range_s
    state = State(int(rng.integers(0, 2)))
    states, lengths = [], []
    total = 0.0
    while total < profile.duration_s or len(set(states)) < 2:
        d = float(rng.uniform(lo, hi))
        states.append(state)
        lengths.append(d)
        total += d
        state = State(1 - state)
    lengths = np.array(lengths)
    is_d = np.array([s == State.DISTRACTED for s in states])
    p = profile.distracted_fraction
    lengths[is_d] *= p * profile.duration_s / lengths[is_d].sum()
    lengths[~is_d] *= (1 - p) * profile.duration_s / lengths[~is_d].sum()
    bounds = np.round(np.concatenate(([0.0], np.cumsum(lengths))) * SAMPLE_RATE).astype(np.int64)
    bounds[-1] = n
    tasks = np.empty(n, dtype=np.int64)
    for s, a, b in zip(states, bounds[:-1], bounds[1:]):
        pool = profile.distracted_tasks if s == State.DISTRACTED else profile.focused_tasks
        tasks[a:b] = pool[int(rng.integers(0, len(pool)))]
    return tasks


def channel_gains(profile: GeneratorProfile, layout: ChannelLayout = DEFAULT_LAYOUT) -> np.ndarray:
    """(2 states, 14 channels, 5 bands) amplitude multipliers."""
    g = np.ones((2, layout.n_channels, len(DEFAULT_BANDS)))
    band_idx = {b.name: i for i, b in enumerate(DEFAULT_BANDS)}
    for (state, region, band), m in profile.multipliers.items():
        g[int(state), list(layout.regions[region]), band_idx[band]] *= m
    return g


def generate_session(profile: GeneratorProfile, participant_id: int, seed: int,
                     layout: ChannelLayout = DEFAULT_LAYOUT) -> RawSession:
    rng = np.random.default_rng([seed, participant_id])
    tasks = task_schedule(profile, rng)
    states = profile.label_map().as_array()[tasks]
    n, n_ch = len(tasks), layout.n_channels
    t = np.arange(n) / SAMPLE_RATE
    gains = channel_gains(profile, layout)[states]  # (n, 14, 5)
    # frequencies and phases are redrawn at every task-block boundary; frequencies
    # stay in the central half of each band, clear of the band edges and filter skirts
    edges = np.flatnonzero(np.diff(tasks)) + 1
    block = np.zeros(n, dtype=np.int64)
    block[edges] = 1
    block = np.cumsum(block)
    n_blocks = block[-1] + 1
    x = np.zeros((n, n_ch))
    for bi, band in enumerate(DEFAULT_BANDS):
        lo, hi = band.lo, min(band.hi, 40.0)
        q = (hi - lo) / 4
        freqs = rng.uniform(lo + q, hi - q, size=(n_blocks, n_ch))
        phases = rng.uniform(0, 2 * np.pi, size=(n_blocks, n_ch))
        amp = profile.base_amplitudes[band.name] * gains[:, :, bi]
        x += amp * np.sin(2 * np.pi * t[:, None] * freqs[block] + phases[block])
    x += rng.normal(0.0, profile.noise_sigma, size=x.shape)
    return RawSession(participant_id, x, tasks)


def participant_seed(seed: int, participant_id: int) -> int:
    return int(np.random.SeedSequence([seed, participant_id]).generate_state(1, np.uint32)[0])


def generate_corpus(profile: GeneratorProfile, seed: int) -> list[RawSession]:
    if profile.participants < 3:
        raise ValueError("need at least 3 participants")
    return [generate_session(profile, pid, participant_seed(seed, pid))
            for pid in range(1, profile.participants + 1)]


def write_corpus(sessions, out_dir, seed: int, profile: GeneratorProfile) -> Path:
    """Raw CSV per participant plus ``corpus.csv``; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = out_dir / "corpus.csv"
    with manifest.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["participant_id", "path", "seed", "duration_s"])
        for s in sessions:
            name = f"p{s.participant_id:02d}.csv"
            write_raw_csv(s, out_dir / name)
            w.writerow([s.participant_id, name, participant_seed(seed, s.participant_id),
                        repr(s.n_samples / SAMPLE_RATE)])
    return manifest


def read_manifest(path) -> list[tuple[int, Path]]:
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [(int(r["participant_id"]), path.parent / r["path"]) for r in rows]
