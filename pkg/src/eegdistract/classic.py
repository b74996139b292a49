"""Non-neural baselines: Euclidean 1-NN and multivariate Rocket with a ridge classifier."""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from .data import DataError, State
from .validation import as_labels, as_window_array, check_shape, feature_stats

LAMBDA_GRID = tuple(10.0 ** e for e in range(-3, 4))


# ---------------------------------------------------------------- 1-NN

def squared_distances(train: np.ndarray, query: np.ndarray) -> np.ndarray:
    diff = (train - query[None]).reshape(len(train), -1)
    return np.einsum("ij,ij->i", diff, diff)


def nn1_classify(train_X, train_y, query) -> State:
    """State of the training window nearest to ``query``; ties go to the earliest index."""
    train_X = np.asarray(train_X, dtype=np.float64)
    query = np.asarray(query, dtype=np.float64)
    if len(train_X) == 0:
        raise ValueError("empty training set")
    if train_X.shape[1:] != query.shape:
        raise ValueError(f"shape mismatch: training windows {train_X.shape[1:]}, query {query.shape}")
    return State(int(train_y[int(np.argmin(squared_distances(train_X, query)))]))


class EuclideanNN(BaseEstimator, ClassifierMixin):
    """One-nearest-neighbour over whole windows with squared Euclidean distance."""

    def fit(self, X, y):
        self.X_ = as_window_array(X)
        self.y_ = as_labels(y, len(self.X_))
        self.classes_ = np.array([State.FOCUSED, State.DISTRACTED])
        return self

    def predict(self, X):
        check_is_fitted(self, "X_")
        X = as_window_array(X)
        check_shape(X, self.X_.shape[1:], "EuclideanNN")
        return np.array([nn1_classify(self.X_, self.y_, q) for q in X], dtype=np.int64)

    def predict_proba(self, X):
        pred = self.predict(X)
        return np.stack([1.0 - pred, pred.astype(np.float64)], axis=1)


# ---------------------------------------------------------------- Rocket kernels

@dataclass(frozen=True, eq=False)
class RocketKernel:
    length: int
    channel_indices: np.ndarray
    weights: np.ndarray  # (n_selected_channels, length)
    bias: float
    dilation: int
    padding: bool

    @property
    def pad(self) -> int:
        return (self.length - 1) * self.dilation // 2 if self.padding else 0

    def __eq__(self, other):
        if not isinstance(other, RocketKernel):
            return NotImplemented
        return (self.length == other.length and self.bias == other.bias
                and self.dilation == other.dilation and self.padding == other.padding
                and np.array_equal(self.channel_indices, other.channel_indices)
                and np.array_equal(self.weights, other.weights))

    __hash__ = None


def rocket_generate(count: int, input_len: int = 40, channels: int = 266,
                    seed: int = 0) -> list[RocketKernel]:
    if count < 1:
        raise ValueError("kernel count must be >= 1")
    rng = np.random.default_rng(seed)
    max_exp = int(math.floor(math.log2(channels)))
    kernels = []
    for _ in range(count):
        length = int(rng.choice((7, 9, 11)))
        n_ch = min(2 ** int(rng.integers(0, max_exp + 1)), channels)
        chans = np.sort(rng.choice(channels, n_ch, replace=False)).astype(np.int64)
        w = rng.standard_normal((n_ch, length))
        w -= w.mean(axis=1, keepdims=True)
        bias = float(rng.uniform(-1.0, 1.0))
        hi = math.log2((input_len - 1) / (length - 1))
        dilation = int(2 ** rng.uniform(0, hi))
        padding = bool(rng.integers(0, 2))
        kernels.append(RocketKernel(length, chans, w, bias, dilation, padding))
    return kernels


def _apply_kernel(Xt: np.ndarray, k: RocketKernel) -> np.ndarray:
    """Convolution output (n, L_out) of one kernel over channel-major windows Xt (C, n, L)."""
    xs = Xt[k.channel_indices]
    if k.pad:
        xs = np.pad(xs, ((0, 0), (0, 0), (k.pad, k.pad)))
    span = (k.length - 1) * k.dilation
    n_out = xs.shape[2] - span
    acc = np.zeros((len(k.channel_indices), xs.shape[1], n_out))
    tmp = np.empty_like(acc)
    for j in range(k.length):
        s = j * k.dilation
        np.multiply(xs[:, :, s:s + n_out], k.weights[:, j, None, None], out=tmp)
        acc += tmp
    # a sequential sum over the leading axis, never BLAS: a window's output
    # must not depend on which other windows share the batch
    return np.add.reduce(acc, axis=0) + k.bias


def rocket_transform(X, kernels: Sequence[RocketKernel], chunk: int = 8) -> np.ndarray:
    """(n, 2K) features: per kernel the proportion of positive outputs then the max.

    Windows go through in chunks of ``chunk`` to keep temporaries in cache;
    the result does not depend on the chunking.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 2:
        X = X[None]
    n_channels = X.shape[2]
    for i, k in enumerate(kernels):
        if k.channel_indices.size and k.channel_indices.max() >= n_channels:
            raise ValueError(f"kernel {i} references channel {k.channel_indices.max()} >= {n_channels}")
    out = np.empty((X.shape[0], 2 * len(kernels)))
    for a in range(0, X.shape[0], chunk):
        Xt = np.ascontiguousarray(X[a:a + chunk].transpose(2, 0, 1))
        for i, k in enumerate(kernels):
            conv = _apply_kernel(Xt, k)
            out[a:a + chunk, 2 * i] = np.mean(conv > 0, axis=1)
            out[a:a + chunk, 2 * i + 1] = conv.max(axis=1)
    return out


# ---------------------------------------------------------------- ridge

@dataclass(eq=False)
class RidgeModel:
    feature_means: np.ndarray
    feature_stds: np.ndarray
    weights: np.ndarray
    intercept: float
    lam: float
    scores: dict = field(default_factory=dict)  # lambda -> selection error

    def standardize(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.feature_means) / self.feature_stds

    def decision_function(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.weights.shape[0]:
            raise ValueError(f"dimension mismatch: model has {self.weights.shape[0]} features, got {X.shape[1]}")
        if not np.all(np.isfinite(X)):
            raise ValueError("non-finite features")
        # row-by-row dot products keep a window's score independent of its batch
        Z = self.standardize(X)
        return np.array([np.dot(z, self.weights) for z in Z]) + self.intercept


def solve_ridge(Z: np.ndarray, t: np.ndarray, lam: float) -> np.ndarray:
    """Solve (Z'Z + lam I) w = Z't by Cholesky, in the dual when Z is wide."""
    n, p = Z.shape
    if p <= n:
        c = cho_factor(Z.T @ Z + lam * np.eye(p))
        return cho_solve(c, Z.T @ t)
    c = cho_factor(Z @ Z.T + lam * np.eye(n))
    return Z.T @ cho_solve(c, t)


def _fit_standardized(X, t, lam):
    means = X.mean(axis=0)
    stds = np.maximum(X.std(axis=0), 1e-8)
    Z = (X - means) / stds
    intercept = float(t.mean())
    w = solve_ridge(Z, t - intercept, lam)
    return RidgeModel(means, stds, w, intercept, lam)


def _errors(model: RidgeModel, X, y_pm) -> int:
    pred = np.where(model.decision_function(X) >= 0, 1.0, -1.0)
    return int(np.count_nonzero(pred != y_pm))


def _to_pm(y) -> np.ndarray:
    y = np.asarray(y)
    if set(np.unique(y).tolist()) <= {-1, 1} and -1 in y:
        return y.astype(np.float64)
    return np.where(y == State.DISTRACTED, 1.0, -1.0)


def ridge_fit(X, y, lambda_grid=LAMBDA_GRID, X_val=None, y_val=None, n_folds: int = 5,
              seed: int = 0) -> RidgeModel:
    """Ridge classifier with lambda chosen on a validation set (or k-fold CV).

    ``y`` may be states (DISTRACTED=1, FOCUSED=0) or +/-1 targets.
    """
    X = np.asarray(X, dtype=np.float64)
    t = _to_pm(y)
    if X.ndim != 2 or len(X) != len(t):
        raise ValueError("X must be (n, p) with one label per row")
    if len(X) < 2:
        raise ValueError("need at least two training rows")
    if len(np.unique(t)) < 2:
        raise ValueError("training labels contain a single class")
    if not np.all(np.isfinite(X)):
        raise ValueError("non-finite features")
    grid = sorted(lambda_grid)
    errors = {}
    if X_val is not None and len(X_val):
        t_val = _to_pm(y_val)
        for lam in grid:
            errors[lam] = _errors(_fit_standardized(X, t, lam), X_val, t_val)
    else:
        folds = np.array_split(np.random.default_rng(seed).permutation(len(X)), min(n_folds, len(X)))
        for lam in grid:
            err = 0
            for f in folds:
                mask = np.ones(len(X), dtype=bool)
                mask[f] = False
                if len(np.unique(t[mask])) < 2:
                    err += len(f)
                    continue
                err += _errors(_fit_standardized(X[mask], t[mask], lam), X[f], t[f])
            errors[lam] = err
    best = min(errors.values())
    lam = max(l for l, e in errors.items() if e == best)  # ties -> stronger regularisation
    model = _fit_standardized(X, t, lam)
    model.scores = errors
    return model


def ridge_predict(model: RidgeModel, x) -> State:
    score = float(model.decision_function(np.asarray(x, dtype=np.float64)[None])[0])
    return State.DISTRACTED if score >= 0 else State.FOCUSED


# ---------------------------------------------------------------- estimator

class RocketClassifier(BaseEstimator, ClassifierMixin):
    """Random dilated convolution kernels -> (PPV, max) features -> ridge.

    Input windows are z-scored per feature with training statistics before the
    kernels are applied, so the kernel bias range is meaningful for every feature.
    """

    def __init__(self, n_kernels=10000, random_state=0, lambda_grid=LAMBDA_GRID,
                 standardize_input=True):
        self.n_kernels = n_kernels
        self.random_state = random_state
        self.lambda_grid = lambda_grid
        self.standardize_input = standardize_input

    def _prep(self, X):
        return (X - self.input_mean_) / self.input_std_

    def fit(self, X, y, X_val=None, y_val=None):
        X = as_window_array(X)
        y = as_labels(y, len(X))
        self.classes_ = np.array([State.FOCUSED, State.DISTRACTED])
        if self.standardize_input:
            self.input_mean_, self.input_std_ = feature_stats(X)
        else:
            self.input_mean_ = np.zeros(X.shape[2])
            self.input_std_ = np.ones(X.shape[2])
        self.kernels_ = rocket_generate(self.n_kernels, X.shape[1], X.shape[2], self.random_state)
        feats = rocket_transform(self._prep(X), self.kernels_)
        val_feats = None
        if X_val is not None and len(X_val):
            X_val = as_window_array(X_val)
            val_feats = rocket_transform(self._prep(X_val), self.kernels_)
        self.ridge_ = ridge_fit(feats, y, self.lambda_grid, val_feats, y_val, seed=self.random_state)
        self.input_shape_ = X.shape[1:]
        return self

    def decision_function(self, X):
        check_is_fitted(self, "ridge_")
        X = as_window_array(X)
        check_shape(X, self.input_shape_, "RocketClassifier")
        return self.ridge_.decision_function(rocket_transform(self._prep(X), self.kernels_))

    def predict(self, X):
        return (self.decision_function(X) >= 0).astype(np.int64)

    def predict_proba(self, X):
        p = 1.0 / (1.0 + np.exp(-self.decision_function(X)))
        return np.stack([1.0 - p, p], axis=1)

    # ------------------------------------------------------------ EDR1

    def save(self, path) -> None:
        check_is_fitted(self, "ridge_")
        save_rocket(self, path)

    @classmethod
    def load(cls, path) -> "RocketClassifier":
        return load_rocket(path)


_EDR_MAGIC = b"EDR1"
_EDR_VERSION = 1


def save_rocket(model: RocketClassifier, path) -> None:
    L, C = model.input_shape_
    parts = [_EDR_MAGIC, struct.pack("<IIqII", _EDR_VERSION, len(model.kernels_),
                                     int(model.random_state), L, C)]
    for k in model.kernels_:
        parts.append(struct.pack("<IIBI", k.length, k.dilation, int(k.padding), len(k.channel_indices)))
        parts.append(np.asarray(k.channel_indices, dtype="<u4").tobytes())
        parts.append(np.asarray(k.weights, dtype="<f8").tobytes())
        parts.append(struct.pack("<d", k.bias))
    parts.append(np.asarray(model.input_mean_, dtype="<f8").tobytes())
    parts.append(np.asarray(model.input_std_, dtype="<f8").tobytes())
    r = model.ridge_
    parts.append(struct.pack("<I", len(r.weights)))
    for arr in (r.feature_means, r.feature_stds, r.weights):
        parts.append(np.asarray(arr, dtype="<f8").tobytes())
    parts.append(struct.pack("<dd", r.intercept, r.lam))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(b"".join(parts))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.off, self.path = data, 0, path

    def unpack(self, fmt):
        s = struct.Struct(fmt)
        if self.off + s.size > len(self.data):
            raise DataError(f"{self.path}: truncated model file")
        vals = s.unpack_from(self.data, self.off)
        self.off += s.size
        return vals

    def array(self, dtype, count):
        size = np.dtype(dtype).itemsize * count
        if self.off + size > len(self.data):
            raise DataError(f"{self.path}: truncated model file")
        arr = np.frombuffer(self.data, dtype=dtype, count=count, offset=self.off)
        self.off += size
        return arr.astype(np.dtype(dtype).newbyteorder("="))


def load_rocket(path) -> RocketClassifier:
    data = Path(path).read_bytes()
    if data[:4] != _EDR_MAGIC:
        raise DataError(f"{path}: not an EDR1 model file")
    rd = _Reader(data, path)
    rd.off = 4
    version, K, seed, L, C = rd.unpack("<IIqII")
    if version != _EDR_VERSION:
        raise DataError(f"{path}: unsupported EDR1 version {version}")
    kernels = []
    for _ in range(K):
        length, dilation, padding, n_ch = rd.unpack("<IIBI")
        chans = rd.array("<u4", n_ch).astype(np.int64)
        w = rd.array("<f8", n_ch * length).reshape(n_ch, length)
        (bias,) = rd.unpack("<d")
        kernels.append(RocketKernel(length, chans, w, bias, dilation, bool(padding)))
    model = RocketClassifier(n_kernels=K, random_state=seed)
    model.input_mean_ = rd.array("<f8", C)
    model.input_std_ = rd.array("<f8", C)
    (p,) = rd.unpack("<I")
    means, stds, w = (rd.array("<f8", p) for _ in range(3))
    intercept, lam = rd.unpack("<dd")
    model.kernels_ = kernels
    model.ridge_ = RidgeModel(means, stds, w, intercept, lam)
    model.input_shape_ = (L, C)
    model.classes_ = np.array([State.FOCUSED, State.DISTRACTED])
    return model
