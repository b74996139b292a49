import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from eegdistract.data import SAMPLE_RATE, DataError, RawSession
from eegdistract.dsp import (
    DEFAULT_BANDS,
    N_FEATURES,
    BandDefinition,
    FeatureExtractor,
    StreamingBandpass,
    StreamingFeatureExtractor,
    band_features,
    bandpass_filter,
    bin_frequencies,
    extract_feature_series,
    feature_names,
    fft_radix2,
    load_feature_csv,
    peak_freq_columns,
    power_columns,
    power_spectrum,
    write_feature_csv,
    write_feature_map,
)

from conftest import make_session


def naive_power(x):
    n = len(x)
    k = np.arange(n // 2 + 1)[:, None]
    X = (x[None, :] * np.exp(-2j * np.pi * k * np.arange(n) / n)).sum(axis=1)
    return np.abs(X) ** 2 / n**2


def test_fft_matches_definition(rng):
    for n in (2, 8, 64, 256):
        x = rng.normal(size=n) + 1j * rng.normal(size=n)
        k = np.arange(n)
        ref = np.exp(-2j * np.pi * np.outer(k, k) / n) @ x
        assert np.allclose(fft_radix2(x), ref, rtol=1e-12, atol=1e-10)


def test_fft_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        fft_radix2(np.zeros(100))


def test_power_spectrum_oracle(rng):
    x = rng.normal(size=256)
    assert np.allclose(power_spectrum(x), naive_power(x), rtol=1e-9, atol=0)


def test_bin_frequencies():
    f = bin_frequencies()
    assert len(f) == 129 and f[1] == 0.5 and f[-1] == 64.0


def test_filter_rejects_bad_cutoffs():
    with pytest.raises(ValueError):
        bandpass_filter(np.zeros((300, 14)), lo=40, hi=4)
    with pytest.raises(ValueError):
        bandpass_filter(np.zeros((300, 14)), lo=4, hi=80)


def test_streaming_filter_equals_batch(rng):
    x = rng.normal(size=(1000, 14))
    f = StreamingBandpass(14)
    parts = [f.process(x[a:a + 77]) for a in range(0, 1000, 77)]
    assert np.array_equal(np.concatenate(parts), bandpass_filter(x))


def test_band_features_hand_computed():
    spec = np.zeros(129)
    spec[[8, 10, 12]] = [1.0, 4.0, 2.0]  # 4, 5, 6 Hz
    avg, peak, freq = band_features(spec, BandDefinition("theta", 4, 8))
    assert avg == pytest.approx(7.0 / 8)
    assert peak == 4.0 and freq == 5.0


def test_band_features_all_zero_reports_band_start():
    _, peak, freq = band_features(np.zeros(129), DEFAULT_BANDS[1])
    assert peak == 0 and freq == DEFAULT_BANDS[1].lo


def test_sinusoid_peak_lands_in_band():
    t = np.arange(2048) / SAMPLE_RATE
    x = np.sin(2 * np.pi * 10.0 * t)[:, None] * np.ones(14)
    s = extract_feature_series(RawSession(1, x, np.zeros(len(t), dtype=np.int64)))
    names = feature_names()
    alpha_freq = [i for i, n in enumerate(names) if n[1:] == ("alpha", "peak_freq")]
    assert np.all(s.values[-1, alpha_freq] == 10.0)


def test_feature_layout():
    names = feature_names()
    assert len(names) == N_FEATURES
    assert names[0] == ("AF3", "theta", "avg_power")
    assert names[210][2] == "sum_avg_power"
    assert len(peak_freq_columns()) == 70
    assert len(power_columns()) == N_FEATURES - 70


def test_regional_sums_match_channels(short_session):
    s = extract_feature_series(short_session)
    v = s.values[10]
    theta_avg = v[[(ch * 5 + 0) * 3 for ch in range(14)]]
    assert v[210] == pytest.approx(theta_avg[[0, 1, 2, 3]].sum(), rel=1e-12)
    # right-hemisphere x gamma, channels 7..13
    gamma_avg = v[[(ch * 5 + 4) * 3 for ch in range(14)]]
    assert v[210 + 3 * 5 + 4] == pytest.approx(gamma_avg[7:].sum(), rel=1e-12)
    # occipital beta accumulation: low-beta + high-beta
    assert v[245 + 6 * 3] == pytest.approx(v[210 + 6 * 5 + 2] + v[210 + 6 * 5 + 3], rel=1e-12)


def test_extract_frame_times_and_count(short_session):
    s = extract_feature_series(short_session)
    assert len(s) == (short_session.n_samples - 256) // 32 + 1
    assert np.allclose(np.diff(s.times), 0.25)


def test_short_session_rejected():
    s = make_session(n=300)
    object.__setattr__(s, "samples", s.samples[:200])
    with pytest.raises(DataError):
        extract_feature_series(s)


def test_streaming_extractor_bit_identical(short_session):
    batch = extract_feature_series(short_session)
    ex = StreamingFeatureExtractor(short_session.participant_id)
    frames = []
    for a in range(0, short_session.n_samples, 100):
        frames += ex.push(short_session.samples[a:a + 100], short_session.tasks[a:a + 100])
    assert len(frames) == len(batch)
    assert np.array_equal(np.stack([f.values for f in frames]), batch.values)
    assert [f.task for f in frames] == batch.tasks.tolist()


def test_feature_csv_roundtrip(tmp_path, short_session):
    s = extract_feature_series(short_session)
    write_feature_csv(s, tmp_path / "p07.csv")
    assert load_feature_csv(tmp_path / "p07.csv") == s


def test_feature_map_file(tmp_path):
    write_feature_map(tmp_path / "map.csv")
    lines = (tmp_path / "map.csv").read_text().splitlines()
    assert len(lines) == N_FEATURES + 1


def test_transformer_api(short_session):
    fx = FeatureExtractor(window="hann")
    assert fx.get_params()["window"] == "hann"
    out = fx.fit_transform([short_session])
    assert out[0].values.shape[1] == N_FEATURES


@settings(max_examples=30, deadline=None)
@given(arrays(np.float64, 256, elements=st.floats(-1e3, 1e3)))
def test_parseval_property(x):
    p = power_spectrum(x)
    two_sided = p[0] + p[-1] + 2 * p[1:-1].sum()
    assert two_sided == pytest.approx(np.mean(x**2), rel=1e-9, abs=1e-9)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.1, 100.0))
def test_power_scales_quadratically(c):
    x = np.random.default_rng(0).normal(size=(3, 256))
    assert np.allclose(power_spectrum(c * x), c**2 * power_spectrum(x), rtol=1e-9)


@settings(max_examples=15, deadline=None)
@given(arrays(np.float64, (300, 14), elements=st.floats(-1e4, 1e4)))
def test_power_features_non_negative(x):
    s = extract_feature_series(RawSession(1, x, np.zeros(300, dtype=np.int64)))
    assert np.all(s.values[:, power_columns()] >= 0)
