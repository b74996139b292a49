"""Flat ``key = value`` pipeline configuration.

Keys use dotted sections (``stft.window_len = 256``).  Unknown keys, bad
values and duplicates fail with the offending line number.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from .data import ConfigError, LabelMap, load_label_map
from .dsp import DEFAULT_BANDS, FRAME_LEN, BandDefinition
from .evaluation import MODEL_NAMES, ExperimentConfig
from .synth import GeneratorProfile, default_multipliers


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _floats(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _ints(text: str) -> tuple:
    return tuple(int(v) for v in text.split(",") if v.strip())


def _names(text: str) -> tuple:
    return tuple(v.strip() for v in text.split(",") if v.strip())


# key -> (parser, default); defaults are the full-scale setting
SCHEMA = {
    "seed": (int, 1),
    "paths.out_dir": (str, "out"),
    "paths.label_map": (str, ""),
    "synth.participants": (int, 18),
    "synth.duration_s": (float, 2400.0),
    "synth.distracted_fraction": (float, 0.36),
    "synth.block_min_s": (float, 30.0),
    "synth.block_max_s": (float, 60.0),
    "synth.noise_sigma": (float, 2.0),
    "synth.frontal_theta_multiplier": (float, 1.8),
    "synth.frontal_alpha_multiplier": (float, 1.4),
    "filter.lo": (float, 4.0),
    "filter.hi": (float, 40.0),
    "stft.window_len": (int, FRAME_LEN),
    "stft.stride": (int, 32),
    "stft.window": (str, "rectangular"),
    **{f"bands.{b.name}": (_floats, (b.lo, b.hi)) for b in DEFAULT_BANDS},
    "window.length": (int, 40),
    "window.hop": (int, 20),
    "window.sequence": (int, 4),
    "split.train": (int, 12),
    "split.val": (int, 2),
    "split.test": (int, 4),
    "split.seed": (int, 0),
    "experiment.models": (_names, MODEL_NAMES),
    "experiment.reps": (int, 5),
    "experiment.base_seed": (int, 0),
    "rocket.kernels": (int, 10000),
    "train.batch_size": (int, 32),
    "train.max_epochs": (int, 100),
    "train.lr": (float, 1e-3),
    "train.beta1": (float, 0.9),
    "train.beta2": (float, 0.999),
    "train.eps": (float, 1e-8),
    "train.patience": (int, 20),
    "train.restore_best": (_bool, True),
    "train.class_weights": (_floats, ()),
    "model.fcn_filters": (_ints, (128, 256, 128)),
    "model.resnet_filters": (_ints, (64, 128, 128)),
    "model.lstm_hidden": (_ints, (128, 128)),
}


@dataclass
class PipelineConfig:
    values: dict = field(default_factory=lambda: {k: d for k, (_, d) in SCHEMA.items()})
    source: str = "<defaults>"

    def __getitem__(self, key):
        return self.values[key]

    # ------------------------------------------------------------ parsing

    @classmethod
    def parse(cls, text: str, source: str = "<string>", overrides=()) -> "PipelineConfig":
        """Parse ``text`` then apply ``key=value`` overrides, which win over the text."""
        cfg = cls(source=source)
        seen = {}
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            if key in seen:
                raise ConfigError(f"{source}:{lineno}: duplicate key {key!r} (first on line {seen[key]})")
            seen[key] = lineno
            cfg.set(key, value, where=f"{source}:{lineno}")
        for item in overrides:
            if "=" not in item:
                raise ConfigError(f"override {item!r}: expected key=value")
            key, value = (s.strip() for s in item.split("=", 1))
            cfg.set(key, value, where=f"override {item!r}")
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path, overrides=()) -> "PipelineConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.parse(text, str(path), overrides)

    def set(self, key: str, value: str, where: str = "<override>") -> None:
        if key not in SCHEMA:
            raise ConfigError(f"{where}: unknown key {key!r}")
        parser = SCHEMA[key][0]
        try:
            self.values[key] = parser(value)
        except ValueError as exc:
            raise ConfigError(f"{where}: bad value for {key}: {exc}") from None

    def validate(self) -> None:
        v = self.values
        try:
            self.bands()
            self.profile()
            self.experiment()
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{self.source}: {exc}") from None
        if v["stft.window_len"] != FRAME_LEN:
            raise ConfigError(f"{self.source}: stft.window_len must be {FRAME_LEN} (0.5 Hz bins at 128 Hz)")
        if v["stft.window"] not in ("rectangular", "hann"):
            raise ConfigError(f"{self.source}: stft.window must be rectangular or hann")
        for key in ("stft.stride", "window.length", "window.hop", "window.sequence"):
            if v[key] < 1:
                raise ConfigError(f"{self.source}: {key} must be >= 1")
        if not 0 < v["filter.lo"] < v["filter.hi"] < 64:
            raise ConfigError(f"{self.source}: need 0 < filter.lo < filter.hi < 64")
        if min(v["split.train"], v["split.val"], v["split.test"]) < 0:
            raise ConfigError(f"{self.source}: split counts must be >= 0")
        if v["split.train"] + v["split.val"] + v["split.test"] != v["synth.participants"]:
            raise ConfigError(f"{self.source}: split counts must sum to synth.participants")
        if v["train.class_weights"] and len(v["train.class_weights"]) != 2:
            raise ConfigError(f"{self.source}: train.class_weights needs two values (focused, distracted)")

    # ------------------------------------------------------------ views

    def bands(self) -> tuple[BandDefinition, ...]:
        out = []
        for b in DEFAULT_BANDS:
            pair = self.values[f"bands.{b.name}"]
            if len(pair) != 2:
                raise ValueError(f"bands.{b.name} needs 'lo,hi'")
            out.append(BandDefinition(b.name, *pair))
        for a, b in zip(out, out[1:]):
            if a.hi > b.lo:
                raise ValueError(f"bands {a.name} and {b.name} overlap")
        return tuple(out)

    def profile(self) -> GeneratorProfile:
        v = self.values
        return GeneratorProfile(
            multipliers=default_multipliers(v["synth.frontal_theta_multiplier"],
                                            v["synth.frontal_alpha_multiplier"]),
            noise_sigma=v["synth.noise_sigma"],
            block_range_s=(v["synth.block_min_s"], v["synth.block_max_s"]),
            distracted_fraction=v["synth.distracted_fraction"],
            duration_s=v["synth.duration_s"],
            participants=v["synth.participants"],
        )

    def label_map(self) -> LabelMap:
        path = self.values["paths.label_map"]
        return load_label_map(path) if path else LabelMap.default()

    def split_counts(self) -> tuple[int, int, int]:
        v = self.values
        return v["split.train"], v["split.val"], v["split.test"]

    def experiment(self) -> ExperimentConfig:
        v = self.values
        return ExperimentConfig(
            models=v["experiment.models"],
            reps=v["experiment.reps"],
            base_seed=v["experiment.base_seed"],
            rocket_kernels=v["rocket.kernels"],
            batch_size=v["train.batch_size"],
            max_epochs=v["train.max_epochs"],
            lr=v["train.lr"],
            beta1=v["train.beta1"],
            beta2=v["train.beta2"],
            eps=v["train.eps"],
            patience=v["train.patience"],
            restore_best=v["train.restore_best"],
            class_weights=v["train.class_weights"] or None,
            fcn_filters=v["model.fcn_filters"],
            resnet_filters=v["model.resnet_filters"],
            lstm_hidden=v["model.lstm_hidden"],
        )

    @property
    def out_dir(self) -> Path:
        return Path(self.values["paths.out_dir"])
