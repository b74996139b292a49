import numpy as np
import pytest

from eegdistract.data import DatasetSplit, State, load_raw_csv
from eegdistract.dsp import extract_feature_series
from eegdistract.synth import GeneratorProfile, default_multipliers, generate_corpus, generate_session, read_manifest, write_corpus


def test_distracted_fraction_exact(short_profile):
    s = generate_session(short_profile, 1, seed=0)
    states = short_profile.label_map().as_array()[s.tasks]
    assert np.mean(states == State.DISTRACTED) == pytest.approx(0.36, abs=1e-3)


def test_session_is_seeded(short_profile):
    a = generate_session(short_profile, 2, seed=9)
    b = generate_session(short_profile, 2, seed=9)
    c = generate_session(short_profile, 2, seed=10)
    assert a == b
    assert not np.array_equal(a.samples, c.samples)


def test_frontal_theta_rises_when_distracted(short_profile):
    s = generate_session(short_profile, 3, seed=0)
    f = extract_feature_series(s)
    states = short_profile.label_map().as_array()[f.tasks]
    lf_theta = f.values[:, 210]
    occ_theta = f.values[:, 210 + 6 * 5]
    ratio = lf_theta[states == 1].mean() / lf_theta[states == 0].mean()
    assert ratio == pytest.approx(1.8**2, rel=0.2)
    occ = occ_theta[states == 1].mean() / occ_theta[states == 0].mean()
    assert occ == pytest.approx(1.0, abs=0.15)


def test_corpus_roundtrip(tmp_path):
    p = GeneratorProfile(duration_s=10.0, participants=3)
    sessions = generate_corpus(p, seed=4)
    manifest = write_corpus(sessions, tmp_path, 4, p)
    entries = read_manifest(manifest)
    assert [pid for pid, _ in entries] == [1, 2, 3]
    assert load_raw_csv(entries[1][1], 2) == sessions[1]


def test_profile_validation():
    with pytest.raises(ValueError):
        GeneratorProfile(distracted_fraction=1.2)
    with pytest.raises(ValueError):
        GeneratorProfile(block_range_s=(10, 5))
    with pytest.raises(ValueError):
        generate_corpus(GeneratorProfile(participants=2), 0)


def _frontal_gap(theta):
    p = GeneratorProfile(duration_s=60.0, block_range_s=(10.0, 20.0),
                         multipliers=default_multipliers(theta, 1.4))
    s = generate_session(p, 1, seed=0)
    f = extract_feature_series(s)
    states = p.label_map().as_array()[f.tasks]
    lf = f.values[:, 210]
    return lf[states == 1].mean() - lf[states == 0].mean(), lf[states == 1].mean() / lf[states == 0].mean()


def test_separability_dial_and_default_ratio():
    gaps = [_frontal_gap(m)[0] for m in (1.2, 1.8, 2.4)]
    assert gaps[0] < gaps[1] < gaps[2]
    assert _frontal_gap(1.8)[1] >= 1.5


def test_samples_bounded_and_sized():
    p = GeneratorProfile.desk()
    s = generate_session(p, 1, seed=0)
    assert s.n_samples == 38400
    assert np.all(np.isfinite(s.samples)) and np.abs(s.samples).max() < 1e4


def test_desk_window_total():
    from eegdistract.data import LabelMap
    from eegdistract.segmentation import segment_series

    p = GeneratorProfile.desk()
    s = generate_session(p, 1, seed=0)
    ws = segment_series(extract_feature_series(s), LabelMap.default())
    # 1193 frames per 300 s session -> 58 windows, 348 over six participants
    assert len(ws) == 58 and 6 * len(ws) >= 200
