"""EEG driver-distraction detection: features, windows, classifiers, evaluation."""
from .classic import EuclideanNN, RocketClassifier
from .config import PipelineConfig
from .data import (
    DEFAULT_LAYOUT,
    ChannelLayout,
    ConfigError,
    DataError,
    DatasetSplit,
    LabelMap,
    RawSession,
    State,
    load_raw_csv,
    split_by_participant,
)
from .dsp import (
    DEFAULT_BANDS,
    N_FEATURES,
    BandDefinition,
    FeatureExtractor,
    FeatureSeries,
    StreamingFeatureExtractor,
    bandpass_filter,
    extract_feature_series,
    power_spectrum,
)
from .evaluation import MODEL_NAMES, EvalReport, ExperimentConfig, compute_metrics, run_experiment
from .neural import FCNClassifier, FCNLSTMClassifier, ResNetClassifier, TrainingDivergence
from .segmentation import Window, WindowSegmenter, WindowSequence, build_sequences, segment_series
from .synth import GeneratorProfile, generate_corpus, generate_session

__version__ = "0.1.0"

__all__ = [
    "BandDefinition", "ChannelLayout", "ConfigError", "DEFAULT_BANDS", "DEFAULT_LAYOUT", "DataError",
    "DatasetSplit", "EuclideanNN", "EvalReport", "ExperimentConfig", "FCNClassifier",
    "FCNLSTMClassifier", "FeatureExtractor", "FeatureSeries", "GeneratorProfile", "LabelMap",
    "MODEL_NAMES", "N_FEATURES", "PipelineConfig", "RawSession", "ResNetClassifier",
    "RocketClassifier", "State", "StreamingFeatureExtractor", "TrainingDivergence", "Window",
    "WindowSegmenter", "WindowSequence", "bandpass_filter", "build_sequences", "compute_metrics",
    "extract_feature_series", "generate_corpus", "generate_session", "load_raw_csv",
    "power_spectrum", "run_experiment", "segment_series", "split_by_participant",
]
