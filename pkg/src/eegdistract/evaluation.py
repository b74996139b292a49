"""Metrics, the repeated-training experiment harness, and CSV/SVG reports."""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .classic import EuclideanNN, RocketClassifier
from .data import DatasetSplit, DataError, State
from .neural import FCNClassifier, FCNLSTMClassifier, ResNetClassifier, TrainingDivergence
from .segmentation import (
    HOP,
    SEQ_LEN,
    Window,
    build_sequences,
    group_by_participant,
    stack_sequences,
    stack_windows,
)

log = logging.getLogger(__name__)

MODEL_NAMES = ("Euclidean1NN", "Rocket", "ResNet", "FCN", "FCN-LSTM")
SEQUENCE_MODELS = {"FCN-LSTM"}
METRIC_COLUMNS = ("accuracy", "precision_distracted", "recall_distracted", "f1_distracted",
                  "precision_driving", "recall_driving", "f1_driving")
CSV_HEADER = ("model", "rep", "seed") + METRIC_COLUMNS
# confusion-matrix row/column order
CLASS_ORDER = (State.DISTRACTED, State.FOCUSED)


@dataclass(frozen=True)
class ConfusionMatrix:
    """counts[i][j]: true CLASS_ORDER[i] predicted as CLASS_ORDER[j]."""

    counts: np.ndarray

    @classmethod
    def from_predictions(cls, truth, pred) -> "ConfusionMatrix":
        truth = np.asarray([int(v) for v in truth])
        pred = np.asarray([int(v) for v in pred])
        m = np.zeros((2, 2), dtype=np.int64)
        for i, a in enumerate(CLASS_ORDER):
            for j, b in enumerate(CLASS_ORDER):
                m[i, j] = np.count_nonzero((truth == a) & (pred == b))
        return cls(m)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def _ratio(a, b) -> float:
    return a / b if b else 0.0


def _class_scores(tp, fp, fn):
    p = _ratio(tp, tp + fp)
    r = _ratio(tp, tp + fn)
    return p, r, _ratio(2 * p * r, p + r)


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision_distracted: float
    recall_distracted: float
    f1_distracted: float
    precision_driving: float
    recall_driving: float
    f1_driving: float

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix) -> "Metrics":
        m = cm.counts
        dd, df, fd, ff = (int(v) for v in m.ravel())
        return cls(_ratio(dd + ff, cm.total), *_class_scores(dd, fd, df), *_class_scores(ff, df, fd))

    def as_tuple(self) -> tuple:
        return tuple(getattr(self, c) for c in METRIC_COLUMNS)


def compute_metrics(truth, pred) -> Metrics:
    """Accuracy and per-class precision/recall/F1; zero denominators give 0."""
    truth, pred = list(truth), list(pred)
    if len(truth) != len(pred):
        raise ValueError(f"length mismatch: {len(truth)} truths vs {len(pred)} predictions")
    if not truth:
        raise ValueError("no predictions to score")
    return Metrics.from_confusion(ConfusionMatrix.from_predictions(truth, pred))


# ---------------------------------------------------------------- dataset

@dataclass
class ExperimentData:
    """Window tensors for one participant split.

    Test items are windows whose in-session index is at least ``seq_len - 1``,
    so every model, including the sequence model, scores the same windows.
    """

    train_X: np.ndarray
    train_y: np.ndarray
    val_X: np.ndarray
    val_y: np.ndarray
    test_X: np.ndarray
    test_y: np.ndarray
    train_seq_X: np.ndarray
    train_seq_y: np.ndarray
    val_seq_X: np.ndarray
    val_seq_y: np.ndarray
    test_seq_X: np.ndarray
    test_keys: list

    @classmethod
    def build(cls, windows: Sequence[Window], split: DatasetSplit, seq_len: int = SEQ_LEN,
              hop: int = HOP) -> "ExperimentData":
        groups = group_by_participant(windows)
        unknown = set(groups) - split.participants
        if unknown:
            raise DataError(f"windows from participants not in split: {sorted(unknown)}")

        def gather(ids):
            wins, seqs = [], []
            for pid in sorted(ids):
                ws = groups.get(pid, [])
                wins.extend(ws)
                seqs.extend(build_sequences(ws, seq_len, hop))
            return wins, seqs

        tr_w, tr_s = gather(split.train)
        va_w, va_s = gather(split.validation)
        te_w, te_s = gather(split.test)
        if not tr_w or not te_s:
            raise DataError("split needs non-empty training windows and test sequences")
        te_scored = [s.windows[-1] for s in te_s]
        tx, ty = stack_windows(tr_w)
        vx, vy = stack_windows(va_w)
        sx, sy = stack_windows(te_scored)
        tsx, tsy = stack_sequences(tr_s)
        vsx, vsy = stack_sequences(va_s)
        qsx, _ = stack_sequences(te_s)
        return cls(tx, ty, vx, vy, sx, sy, tsx, tsy, vsx, vsy, qsx, [w.key for w in te_scored])

    def class_balance(self) -> tuple[int, float]:
        return len(self.train_y), float(np.mean(self.train_y == State.DISTRACTED))


@dataclass(frozen=True)
class ExperimentConfig:
    models: tuple = MODEL_NAMES
    reps: int = 5
    base_seed: int = 0
    rocket_kernels: int = 10000
    batch_size: int = 32
    max_epochs: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 20
    restore_best: bool = True
    class_weights: tuple | None = None
    fcn_filters: tuple = (128, 256, 128)
    resnet_filters: tuple = (64, 128, 128)
    lstm_hidden: tuple = (128, 128)

    def __post_init__(self):
        bad = [m for m in self.models if m not in MODEL_NAMES]
        if bad:
            raise ValueError(f"unknown models {bad}; choose from {MODEL_NAMES}")
        if self.reps < 1:
            raise ValueError("reps must be >= 1")


def make_estimator(name: str, seed: int, cfg: ExperimentConfig):
    train_kw = dict(random_state=seed, batch_size=cfg.batch_size, max_epochs=cfg.max_epochs,
                    lr=cfg.lr, beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps,
                    patience=cfg.patience, restore_best=cfg.restore_best,
                    class_weights=cfg.class_weights)
    if name == "Euclidean1NN":
        return EuclideanNN()
    if name == "Rocket":
        return RocketClassifier(n_kernels=cfg.rocket_kernels, random_state=seed)
    if name == "FCN":
        return FCNClassifier(fcn_filters=cfg.fcn_filters, **train_kw)
    if name == "ResNet":
        return ResNetClassifier(resnet_filters=cfg.resnet_filters, **train_kw)
    if name == "FCN-LSTM":
        return FCNLSTMClassifier(fcn_filters=cfg.fcn_filters, lstm_hidden=cfg.lstm_hidden, **train_kw)
    raise ValueError(f"unknown model {name!r}")


def fit_named(name: str, est, data: ExperimentData):
    if name in SEQUENCE_MODELS:
        return est.fit(data.train_seq_X, data.train_seq_y, data.val_seq_X, data.val_seq_y)
    if name == "Euclidean1NN":
        return est.fit(data.train_X, data.train_y)
    return est.fit(data.train_X, data.train_y, data.val_X, data.val_y)


def predict_named(name: str, est, data: ExperimentData) -> np.ndarray:
    X = data.test_seq_X if name in SEQUENCE_MODELS else data.test_X
    return est.predict(X)


# ---------------------------------------------------------------- report

@dataclass(frozen=True)
class ReportRow:
    model: str
    rep: int
    seed: int
    metrics: Metrics


@dataclass
class EvalReport:
    rows: list = field(default_factory=list)
    reps: int = 0
    evaluated_keys: dict = field(default_factory=dict)  # (model, rep) -> window keys

    def models(self) -> list[str]:
        seen = []
        for r in self.rows:
            if r.model not in seen:
                seen.append(r.model)
        return seen

    def aggregates(self) -> dict[str, tuple[np.ndarray, np.ndarray]]:
        """Model -> (mean, population std) over repetitions, per metric column."""
        out = {}
        for m in self.models():
            vals = np.array([r.metrics.as_tuple() for r in self.rows if r.model == m])
            out[m] = (vals.mean(axis=0), vals.std(axis=0))
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_HEADER) + "\n")
        for r in self.rows:
            buf.write(",".join([r.model, str(r.rep), str(r.seed), *map(repr, r.metrics.as_tuple())]) + "\n")
        for m, (mean, std) in self.aggregates().items():
            buf.write(",".join([m, "mean", "", *(repr(float(v)) for v in mean)]) + "\n")
            buf.write(",".join([m, "std", "", *(repr(float(v)) for v in std)]) + "\n")
        return buf.getvalue()


def parse_report_csv(text: str) -> EvalReport:
    lines = text.strip().splitlines()
    if tuple(lines[0].split(",")) != CSV_HEADER:
        raise DataError("not a report CSV")
    report = EvalReport()
    for line in lines[1:]:
        parts = line.split(",")
        if parts[1] in ("mean", "std"):
            continue
        report.rows.append(ReportRow(parts[0], int(parts[1]), int(parts[2]),
                                     Metrics(*map(float, parts[3:]))))
    report.reps = max(r.rep for r in report.rows) + 1 if report.rows else 0
    return report


def run_experiment(windows: Sequence[Window], split: DatasetSplit,
                   config: ExperimentConfig = ExperimentConfig(), *, seq_len: int = SEQ_LEN,
                   hop: int = HOP) -> EvalReport:
    """Train every model ``reps`` times (seed base_seed + r) and score on the test split."""
    data = ExperimentData.build(windows, split, seq_len, hop)
    n_train, frac = data.class_balance()
    log.info("training windows %d (%.1f%% distracted), test windows %d",
             n_train, 100 * frac, len(data.test_y))
    report = EvalReport(reps=config.reps)
    for rep in range(config.reps):
        seed = config.base_seed + rep
        for name in config.models:
            est = make_estimator(name, seed, config)
            try:
                fit_named(name, est, data)
            except TrainingDivergence as exc:
                raise TrainingDivergence(f"{name} rep {rep}: {exc}") from exc
            pred = predict_named(name, est, data)
            metrics = compute_metrics(data.test_y, pred)
            log.info("%s rep %d: acc %.3f f1_distracted %.3f", name, rep, metrics.accuracy,
                     metrics.f1_distracted)
            report.rows.append(ReportRow(name, rep, seed, metrics))
            report.evaluated_keys[(name, rep)] = list(data.test_keys)
    return report


# ---------------------------------------------------------------- SVG

_BAR_METRICS = METRIC_COLUMNS
_COLOURS = ("#4c72b0", "#dd8452", "#55a868", "#c44e52", "#8172b3", "#937860", "#da8bc3")


def render_svg(report: EvalReport) -> str:
    """Grouped bar chart: one group per model, one bar per metric mean, std whiskers."""
    agg = report.aggregates()
    models = list(agg)
    bar_w, gap, left, top, plot_h = 14, 24, 60, 30, 300
    group_w = len(_BAR_METRICS) * bar_w
    width = left + len(models) * (group_w + gap) + gap + 180
    height = top + plot_h + 60
    y0 = top + plot_h

    def y(v):
        return y0 - plot_h * min(max(v, 0.0), 1.0)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect width="{width}" height="{height}" fill="white"/>']
    for tick in range(0, 11, 2):
        v = tick / 10
        out.append(f'<line x1="{left}" y1="{y(v):.2f}" x2="{width - 180}" y2="{y(v):.2f}" '
                   f'stroke="#dddddd"/>')
        out.append(f'<text x="{left - 6}" y="{y(v) + 4:.2f}" text-anchor="end">{v:.1f}</text>')
    out.append(f'<line x1="{left}" y1="{y0}" x2="{width - 180}" y2="{y0}" stroke="black"/>')
    for gi, m in enumerate(models):
        mean, std = agg[m]
        gx = left + gap + gi * (group_w + gap)
        for bi, col in enumerate(_BAR_METRICS):
            x = gx + bi * bar_w
            v = float(mean[bi])
            s = float(std[bi])
            out.append(f'<rect class="bar" data-model="{m}" data-metric="{col}" data-value="{v!r}" '
                       f'x="{x}" y="{y(v):.4f}" width="{bar_w - 2}" height="{y0 - y(v):.4f}" '
                       f'fill="{_COLOURS[bi]}"/>')
            cx = x + (bar_w - 2) / 2
            out.append(f'<line class="whisker" x1="{cx}" y1="{y(v + s):.4f}" x2="{cx}" '
                       f'y2="{y(v - s):.4f}" stroke="black"/>')
        out.append(f'<text x="{gx + group_w / 2}" y="{y0 + 16}" text-anchor="middle">{m}</text>')
    lx = width - 170
    for bi, col in enumerate(_BAR_METRICS):
        ly = top + bi * 16
        out.append(f'<rect x="{lx}" y="{ly}" width="10" height="10" fill="{_COLOURS[bi]}"/>')
        out.append(f'<text x="{lx + 14}" y="{ly + 9}">{col}</text>')
    out.append(f'<text x="{left}" y="{top - 10}">mean over {report.reps} repetitions '
               f'(whiskers: +/- 1 std)</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(report: EvalReport, csv_path, svg_path) -> None:
    if not report.rows:
        raise ValueError("empty report")
    for p in (csv_path, svg_path):
        Path(p).parent.mkdir(parents=True, exist_ok=True)
    Path(csv_path).write_text(report.to_csv())
    Path(svg_path).write_text(render_svg(report))
