"""``eegdistract`` command line: synth, extract, segment, train, evaluate, stream, run-all.

Stage artifacts live under ``paths.out_dir``::

    raw/corpus.csv, raw/pNN.csv      synthetic sessions
    features/pNN.csv                 266-value feature stream per participant
    windows.edw, split.csv           labelled windows and the participant split
    models/<name>.edr|.edn           one trained model (``train``)
    report.csv, report.svg           evaluation report

Exit codes: 0 success, 2 config error, 3 data error, 4 training divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .classic import RocketClassifier
from .config import PipelineConfig
from .data import ConfigError, DataError, State, load_raw_csv, load_split, split_by_participant, write_split
from .dsp import StreamingFeatureExtractor, extract_feature_series, load_feature_csv, write_feature_csv
from .evaluation import (
    MODEL_NAMES,
    SEQUENCE_MODELS,
    ExperimentData,
    emit_report,
    fit_named,
    make_estimator,
    run_experiment,
)
from .neural import NeuralClassifier, TrainingDivergence
from .segmentation import read_windows, segment_series, write_windows
from .synth import generate_corpus, read_manifest, write_corpus

log = logging.getLogger("eegdistract")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGENCE = 0, 2, 3, 4

_KIND_NAMES = {"FCN": "FCN", "RESNET": "ResNet", "FCN_LSTM": "FCN-LSTM"}


# ---------------------------------------------------------------- stages

def stage_synth(cfg: PipelineConfig) -> Path:
    profile = cfg.profile()
    sessions = generate_corpus(profile, cfg["seed"])
    manifest = write_corpus(sessions, cfg.out_dir / "raw", cfg["seed"], profile)
    log.info("synth: %d sessions of %.0f s -> %s", len(sessions), profile.duration_s, manifest)
    return manifest


def _raw_sessions(cfg: PipelineConfig):
    manifest = cfg.out_dir / "raw" / "corpus.csv"
    if not manifest.exists():
        raise DataError(f"missing {manifest}; run 'synth' first")
    return read_manifest(manifest)


def stage_extract(cfg: PipelineConfig) -> list[Path]:
    out = []
    for pid, path in _raw_sessions(cfg):
        series = extract_feature_series(
            load_raw_csv(path, pid), cfg.bands(), window=cfg["stft.window"],
            lo=cfg["filter.lo"], hi=cfg["filter.hi"], stride=cfg["stft.stride"])
        dest = cfg.out_dir / "features" / f"p{pid:02d}.csv"
        write_feature_csv(series, dest)
        log.info("extract: participant %d, %d frames", pid, len(series))
        out.append(dest)
    return out


def stage_segment(cfg: PipelineConfig) -> tuple[Path, Path]:
    label_map = cfg.label_map()
    windows, pids = [], []
    for pid, _ in _raw_sessions(cfg):
        path = cfg.out_dir / "features" / f"p{pid:02d}.csv"
        if not path.exists():
            raise DataError(f"missing {path}; run 'extract' first")
        ws = segment_series(load_feature_csv(path, pid), label_map,
                            cfg["window.length"], cfg["window.hop"])
        log.info("segment: participant %d, %d windows", pid, len(ws))
        windows.extend(ws)
        pids.append(pid)
    split = split_by_participant(pids, cfg.split_counts(), cfg["split.seed"])
    wpath, spath = cfg.out_dir / "windows.edw", cfg.out_dir / "split.csv"
    write_windows(windows, wpath)
    write_split(split, spath)
    return wpath, spath


def _load_segments(cfg: PipelineConfig):
    wpath, spath = cfg.out_dir / "windows.edw", cfg.out_dir / "split.csv"
    for p in (wpath, spath):
        if not p.exists():
            raise DataError(f"missing {p}; run 'segment' first")
    return read_windows(wpath), load_split(spath)


def stage_train(cfg: PipelineConfig, model: str, seed: int | None = None) -> Path:
    if model not in MODEL_NAMES:
        raise ConfigError(f"unknown model {model!r}; choose from {MODEL_NAMES}")
    if model == "Euclidean1NN":
        raise ConfigError("Euclidean1NN has no trained parameters to save")
    windows, split = _load_segments(cfg)
    data = ExperimentData.build(windows, split, cfg["window.sequence"], cfg["window.hop"])
    exp = cfg.experiment()
    seed = exp.base_seed if seed is None else seed
    est = fit_named(model, make_estimator(model, seed, exp), data)
    ext = ".edr" if model == "Rocket" else ".edn"
    dest = cfg.out_dir / "models" / f"{model}{ext}"
    dest.parent.mkdir(parents=True, exist_ok=True)
    est.save(dest)
    log.info("train: %s seed %d -> %s", model, seed, dest)
    return dest


def stage_evaluate(cfg: PipelineConfig) -> tuple[Path, Path]:
    windows, split = _load_segments(cfg)
    report = run_experiment(windows, split, cfg.experiment(),
                            seq_len=cfg["window.sequence"], hop=cfg["window.hop"])
    csv_path, svg_path = cfg.out_dir / "report.csv", cfg.out_dir / "report.svg"
    emit_report(report, csv_path, svg_path)
    log.info("evaluate: report -> %s, %s", csv_path, svg_path)
    return csv_path, svg_path


# ---------------------------------------------------------------- streaming

def load_model(path):
    """Trained model file -> (model name, estimator)."""
    path = Path(path)
    try:
        magic = path.read_bytes()[:4]
    except OSError as exc:
        raise DataError(f"cannot read model {path}: {exc}") from None
    if magic == b"EDR1":
        return "Rocket", RocketClassifier.load(path)
    if magic == b"EDN1":
        est = NeuralClassifier.load(path)
        return _KIND_NAMES[est.model_.spec.kind], est
    raise DataError(f"{path}: not a model file (magic {magic!r})")


def stream_predictions(est, name: str, session, cfg: PipelineConfig, chunk: int = 128):
    """Replay ``session`` chunk by chunk; yield (t_end, state, prob_distracted) per window.

    Windows close every ``hop`` frames once ``window.length`` frames exist;
    a sequence model waits for ``window.sequence`` windows.
    """
    win, hop, seq = cfg["window.length"], cfg["window.hop"], cfg["window.sequence"]
    extractor = StreamingFeatureExtractor(
        session.participant_id, cfg.bands(), window=cfg["stft.window"],
        lo=cfg["filter.lo"], hi=cfg["filter.hi"], stride=cfg["stft.stride"],
        fs=session.sample_rate)
    frame_span = cfg["stft.window_len"] / session.sample_rate
    frames: list[np.ndarray] = []
    recent: list[np.ndarray] = []
    n_frames = 0
    for a in range(0, session.n_samples, chunk):
        for fr in extractor.push(session.samples[a:a + chunk], session.tasks[a:a + chunk]):
            frames.append(fr.values)
            n_frames += 1
            del frames[:-win]
            if n_frames < win or (n_frames - win) % hop:
                continue
            recent.append(np.array(frames))
            del recent[:-seq]
            if name in SEQUENCE_MODELS:
                if len(recent) < seq:
                    continue
                x = np.stack(recent)[None]
            else:
                x = recent[-1][None]
            prob = float(est.predict_proba(x)[0, 1])
            state = State(int(est.predict(x)[0]))
            yield float(fr.t + frame_span), state, prob


def stage_stream(cfg: PipelineConfig, model_path, session_path, out=None) -> int:
    name, est = load_model(model_path)
    session = load_raw_csv(session_path)
    out = out or sys.stdout
    n = 0
    for t_end, state, prob in stream_predictions(est, name, session, cfg):
        out.write(f"{t_end!r},{state.report_name},{prob!r}\n")
        n += 1
    log.info("stream: %s, %d predictions", name, n)
    return n


def stage_run_all(cfg: PipelineConfig) -> tuple[Path, Path]:
    stage_synth(cfg)
    stage_extract(cfg)
    stage_segment(cfg)
    return stage_evaluate(cfg)


# ---------------------------------------------------------------- entry

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-c", "--config", help="key = value config file (defaults: full-scale run)")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config key; flags win over the file")
    common.add_argument("--out-dir", help="shorthand for --set paths.out_dir=DIR")
    common.add_argument("--seed", type=int, help="shorthand for --set seed=N")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="eegdistract", description="EEG driver-distraction pipeline.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("synth", parents=[common], help="generate the synthetic corpus")
    sub.add_parser("extract", parents=[common], help="raw sessions -> feature streams")
    sub.add_parser("segment", parents=[common], help="feature streams -> windows + split")
    t = sub.add_parser("train", parents=[common], help="train and save one model")
    t.add_argument("--model", required=True, choices=MODEL_NAMES)
    t.add_argument("--model-seed", type=int, help="training seed (default experiment.base_seed)")
    sub.add_parser("evaluate", parents=[common], help="train/score all models, write the report")
    s = sub.add_parser("stream", parents=[common], help="replay a raw session through a model")
    s.add_argument("--model", required=True, help="model file from 'train'")
    s.add_argument("--session", required=True, help="raw session CSV")
    sub.add_parser("run-all", parents=[common], help="synth, extract, segment, evaluate")
    return p


def _config_from_args(args) -> PipelineConfig:
    overrides = list(args.overrides)
    if args.out_dir:
        overrides.append(f"paths.out_dir={args.out_dir}")
    if args.seed is not None:
        overrides.append(f"seed={args.seed}")
    if args.config:
        return PipelineConfig.load(args.config, overrides)
    return PipelineConfig.parse("", "<defaults>", overrides)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    stage = "config"
    try:
        cfg = _config_from_args(args)
        stage = args.command
        if stage == "synth":
            stage_synth(cfg)
        elif stage == "extract":
            stage_extract(cfg)
        elif stage == "segment":
            stage_segment(cfg)
        elif stage == "train":
            stage_train(cfg, args.model, args.model_seed)
        elif stage == "evaluate":
            stage_evaluate(cfg)
        elif stage == "stream":
            stage_stream(cfg, args.model, args.session)
        else:
            stage_run_all(cfg)
    except ConfigError as exc:
        log.error("[%s] config error: %s", stage, exc)
        return EXIT_CONFIG
    except TrainingDivergence as exc:
        log.error("[%s] training diverged: %s", stage, exc)
        return EXIT_DIVERGENCE
    except (DataError, OSError, ValueError) as exc:
        log.error("[%s] data error: %s", stage, exc)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
