"""Mini-batch Adam training with early stopping on validation loss."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .layers import softmax_xent
from .models import NeuralModel

log = logging.getLogger(__name__)


class TrainingDivergence(RuntimeError):
    """Loss became NaN or infinite."""


@dataclass(frozen=True)
class TrainConfig:
    seed: int = 0
    batch_size: int = 32
    max_epochs: int = 100
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 20
    restore_best: bool = True
    class_weights: tuple | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if not self.lr > 0:
            raise ValueError("learning rate must be > 0")
        if self.max_epochs < 0:
            raise ValueError("max_epochs must be >= 0")


class Adam:
    def __init__(self, model: NeuralModel, lr, beta1, beta2, eps):
        self.model = model
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {}
        self.v = {}
        for name, layer, key in model.named_params():
            self.m[name] = np.zeros_like(layer.params[key])
            self.v[name] = np.zeros_like(layer.params[key])

    def step(self):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * math.sqrt(1 - b2 ** self.t) / (1 - b1 ** self.t)
        for name, layer, key in self.model.named_params():
            g = layer.grads[key]
            m = self.m[name]
            v = self.v[name]
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            layer.params[key] = layer.params[key] - lr_t * m / (np.sqrt(v) + self.eps)


def evaluate(model: NeuralModel, X, y, batch_size=64, class_weights=None):
    """(loss, accuracy) in inference mode."""
    losses, correct, total = 0.0, 0, 0
    for s in range(0, len(X), batch_size):
        xb, yb = X[s:s + batch_size], y[s:s + batch_size]
        p, loss, _ = softmax_xent(model.forward(xb, training=False), yb, class_weights)
        losses += loss * len(xb)
        correct += int(np.count_nonzero(predict_from_proba(p) == yb))
        total += len(xb)
    return losses / total, correct / total


def predict_from_proba(p: np.ndarray) -> np.ndarray:
    # class 1 (DISTRACTED) wins ties
    return (p[:, 1] >= p[:, 0]).astype(np.int64)


def train_model(model: NeuralModel, X, y, X_val=None, y_val=None,
                config: TrainConfig = TrainConfig()) -> dict:
    """Train in place; returns the per-epoch history (also stored on the model)."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if len(X) == 0:
        raise ValueError("empty training set")
    has_val = X_val is not None and len(X_val) > 0
    rng = np.random.default_rng(config.seed)
    opt = Adam(model, config.lr, config.beta1, config.beta2, config.eps)
    cw = config.class_weights
    history = {"train_loss": [], "train_acc": [], "val_loss": [], "val_acc": [], "best_epoch": None}
    best_loss, best_state, since_best = math.inf, None, 0
    for epoch in range(config.max_epochs):
        order = rng.permutation(len(X))
        tot_loss, tot_correct = 0.0, 0
        for s in range(0, len(X), config.batch_size):
            idx = order[s:s + config.batch_size]
            p, loss = model.loss_and_grads(X[idx], y[idx], cw)
            if not math.isfinite(loss):
                raise TrainingDivergence(f"non-finite loss at epoch {epoch}, batch starting {s}")
            opt.step()
            tot_loss += loss * len(idx)
            tot_correct += int(np.count_nonzero(predict_from_proba(p) == y[idx]))
        history["train_loss"].append(tot_loss / len(X))
        history["train_acc"].append(tot_correct / len(X))
        if has_val:
            vl, va = evaluate(model, X_val, y_val, class_weights=cw)
            if not math.isfinite(vl):
                raise TrainingDivergence(f"non-finite validation loss at epoch {epoch}")
            history["val_loss"].append(vl)
            history["val_acc"].append(va)
            if vl < best_loss:
                best_loss, best_state, since_best = vl, model.get_state(), 0
                history["best_epoch"] = epoch
            else:
                since_best += 1
            log.debug("epoch %d train_loss %.4f val_loss %.4f val_acc %.3f",
                      epoch, history["train_loss"][-1], vl, va)
            if since_best >= config.patience:
                break
        else:
            log.debug("epoch %d train_loss %.4f", epoch, history["train_loss"][-1])
    if has_val and config.restore_best and best_state is not None:
        model.set_state(best_state)
    model.history = history
    return history
