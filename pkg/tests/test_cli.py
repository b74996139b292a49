import io

import numpy as np
import pytest

from eegdistract.cli import load_model, main, stage_stream, stream_predictions
from eegdistract.config import SCHEMA, PipelineConfig
from eegdistract.data import ConfigError, load_raw_csv
from eegdistract.segmentation import (
    build_sequences,
    group_by_participant,
    read_windows,
    stack_sequences,
    stack_windows,
)

TINY = """
seed = 3
synth.participants = 3
synth.duration_s = 40
synth.block_min_s = 5
synth.block_max_s = 10
split.train = 1
split.val = 1
split.test = 1
experiment.models = Euclidean1NN, Rocket, FCN, FCN-LSTM
experiment.reps = 2
rocket.kernels = 30
train.max_epochs = 2
train.batch_size = 4
model.fcn_filters = 3, 4, 3
model.lstm_hidden = 3, 3
"""


def test_config_defaults_are_full_scale():
    cfg = PipelineConfig()
    assert cfg["synth.participants"] == 18 and cfg["synth.duration_s"] == 2400
    assert cfg["rocket.kernels"] == 10000 and cfg["stft.window_len"] == 256
    assert set(cfg.values) == set(SCHEMA)


def test_config_errors_carry_line_numbers():
    with pytest.raises(ConfigError, match=r":3: unknown key 'bogus.key'"):
        PipelineConfig.parse("seed = 1\n\nbogus.key = 2\n")
    with pytest.raises(ConfigError, match=r":2: bad value for seed"):
        PipelineConfig.parse("# c\nseed = one\n")
    with pytest.raises(ConfigError, match=r":1: expected"):
        PipelineConfig.parse("seed 1\n")
    with pytest.raises(ConfigError, match="duplicate"):
        PipelineConfig.parse("seed = 1\nseed = 2\n")
    with pytest.raises(ConfigError, match="window_len"):
        PipelineConfig.parse("stft.window_len = 128\n")
    with pytest.raises(ConfigError, match="sum"):
        PipelineConfig.parse("split.train = 3\n")
    with pytest.raises(ConfigError, match="overlap"):
        PipelineConfig.parse("bands.alpha = 7, 12\n")


def test_overrides_win_over_file():
    cfg = PipelineConfig.parse("seed = 1\nrocket.kernels = 5\n", overrides=["rocket.kernels=7"])
    assert cfg["rocket.kernels"] == 7 and cfg["seed"] == 1
    with pytest.raises(ConfigError):
        PipelineConfig.parse("", overrides=["nope=1"])


def test_shipped_desk_config():
    from pathlib import Path
    cfg = PipelineConfig.load(Path(__file__).parents[1] / "configs" / "desk.conf")
    assert cfg.split_counts() == (4, 1, 1)
    assert cfg["synth.participants"] == 6 and cfg["synth.duration_s"] == 300
    assert cfg["rocket.kernels"] == 500 and cfg["experiment.reps"] == 5


@pytest.fixture(scope="module")
def tiny(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    conf = root / "tiny.conf"
    conf.write_text(TINY)
    return root, conf


def _files(d):
    return {p.relative_to(d): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_run_all_equals_individual_stages(tiny):
    root, conf = tiny
    assert main(["run-all", "-c", str(conf), "--out-dir", str(root / "a")]) == 0
    for stage in ("synth", "extract", "segment", "evaluate"):
        assert main([stage, "-c", str(conf), "--out-dir", str(root / "b")]) == 0
    a, b = _files(root / "a"), _files(root / "b")
    assert a.keys() == b.keys() and a == b
    lines = (root / "a" / "report.csv").read_text().splitlines()
    assert len(lines) == 1 + 4 * 2 + 4 * 2


def test_train_and_stream(tiny, capsys):
    root, conf = tiny
    out = root / "a"
    cfg = PipelineConfig.load(conf, [f"paths.out_dir={out}"])
    windows = group_by_participant(read_windows(out / "windows.edw"))
    session = load_raw_csv(out / "raw" / "p01.csv")
    for model in ("Rocket", "FCN", "FCN-LSTM"):
        assert main(["train", "-c", str(conf), "--out-dir", str(out), "--model", model]) == 0
        path = next((out / "models").glob(f"{model}.*"))
        name, est = load_model(path)
        assert name == model
        got = list(stream_predictions(est, name, session, cfg))
        ws = windows[1]
        X = stack_sequences(build_sequences(ws))[0] if model == "FCN-LSTM" else stack_windows(ws)[0]
        assert np.array_equal(np.array([g[2] for g in got]), est.predict_proba(X)[:, 1])
        first = 26.75 if model == "FCN-LSTM" else 11.75
        assert [g[0] for g in got] == [first + 5 * i for i in range(len(got))]
    buf = io.StringIO()
    n = stage_stream(cfg, out / "models" / "Rocket.edr", out / "raw" / "p01.csv", buf)
    rows = buf.getvalue().splitlines()
    assert len(rows) == n and rows[0].startswith("11.75,")
    assert rows[0].split(",")[1] in ("distracted", "driving")


def test_exit_codes(tiny, tmp_path):
    root, conf = tiny
    assert main(["train", "-c", str(conf), "--out-dir", str(root / "a"), "--model", "Euclidean1NN"]) == 2
    bad = tmp_path / "bad.conf"
    bad.write_text("what = 1\n")
    assert main(["synth", "-c", str(bad)]) == 2
    assert main(["segment", "-c", str(conf), "--out-dir", str(tmp_path / "empty")]) == 3
    assert main(["stream", "-c", str(conf), "--model", str(bad), "--session", str(bad)]) == 3


def test_divergence_exit_code(tiny, monkeypatch):
    root, conf = tiny
    from eegdistract import cli
    from eegdistract.neural import TrainingDivergence

    def boom(*a, **k):
        raise TrainingDivergence("non-finite loss")
    monkeypatch.setattr(cli, "run_experiment", boom)
    assert main(["evaluate", "-c", str(conf), "--out-dir", str(root / "a")]) == 4
