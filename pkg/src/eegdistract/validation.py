"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np

from .data import State


def as_window_array(X, ndim: int = 3, name: str = "X") -> np.ndarray:
    """Coerce windows (array or list of Window / WindowSequence) to a float64 array."""
    if isinstance(X, (list, tuple)) and X and hasattr(X[0], "values"):
        X = np.stack([x.values for x in X])
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-D, got shape {X.shape}")
    if X.shape[0] == 0:
        raise ValueError(f"{name} is empty")
    if not np.all(np.isfinite(X)):
        raise ValueError(f"{name} contains non-finite values")
    return X


def as_labels(y, n: int) -> np.ndarray:
    y = np.asarray([int(v) for v in y], dtype=np.int64)
    if y.shape != (n,):
        raise ValueError(f"expected {n} labels, got {y.shape}")
    if not np.isin(y, (State.FOCUSED, State.DISTRACTED)).all():
        raise ValueError("labels must be FOCUSED (0) or DISTRACTED (1)")
    return y


def feature_stats(X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-feature mean/std over every sample and time step (last axis is features)."""
    flat = X.reshape(-1, X.shape[-1])
    mean = flat.mean(axis=0)
    std = np.maximum(flat.std(axis=0), 1e-8)
    return mean, std


def check_shape(X: np.ndarray, expected: tuple, what: str) -> None:
    if X.shape[1:] != tuple(expected):
        raise ValueError(f"{what}: expected sample shape {tuple(expected)}, got {X.shape[1:]}")
