"""Finite-difference verification of analytic gradients."""
from __future__ import annotations

from collections import defaultdict

import numpy as np

from .layers import softmax_xent
from .models import NeuralModel


def relative_error(a, b, floor=1e-6):
    """|a - b| / max(|a|, |b|, floor); the floor keeps near-zero gradients from
    turning rounding noise into large ratios."""
    return abs(a - b) / max(abs(a), abs(b), floor)


def grad_check(model: NeuralModel, X, y, step=1e-5, per_kind=200, seed=0,
               return_details=False):
    """Max relative error between backprop and central differences.

    Samples ``per_kind`` parameters from each layer type (conv, bn, dense,
    lstm), or all of them when a type has fewer.  The loss is evaluated in
    training mode; batch-norm running statistics are restored afterwards.

    A central difference is meaningless when the +/- step straddles a ReLU
    kink, so probes that flip any ReLU activation pattern are discarded and
    another parameter of the same type is drawn instead.
    """
    saved = model.get_state()
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    relus = model.relu_layers()

    def loss_and_masks():
        _, loss, _ = softmax_xent(model.forward(X, training=True), y)
        return loss, [r._mask.copy() for r in relus]

    model.loss_and_grads(X, y)
    base_masks = [r._mask.copy() for r in relus]
    analytic = {name: layer.grads[key].copy() for name, layer, key in model.named_params()}

    by_kind = defaultdict(list)
    for name, layer, key in model.named_params():
        for flat in range(layer.params[key].size):
            by_kind[layer.kind].append((name, layer, key, flat))
    rng = np.random.default_rng(seed)
    worst, checked, skipped = 0.0, 0, 0
    for kind, entries in by_kind.items():
        want = min(per_kind, len(entries))
        done = 0
        for j in rng.permutation(len(entries)):
            if done == want:
                break
            name, layer, key, flat = entries[j]
            arr = layer.params[key].reshape(-1)
            orig = arr[flat]
            arr[flat] = orig + step
            up, m_up = loss_and_masks()
            arr[flat] = orig - step
            down, m_down = loss_and_masks()
            arr[flat] = orig
            if any(not (np.array_equal(a, b) and np.array_equal(a, c))
                   for a, b, c in zip(base_masks, m_up, m_down)):
                skipped += 1
                continue
            numeric = (up - down) / (2 * step)
            worst = max(worst, relative_error(analytic[name].reshape(-1)[flat], numeric))
            done += 1
        checked += done
    model.set_state(saved)
    if return_details:
        return worst, {"checked": checked, "skipped_kinks": skipped}
    return worst
