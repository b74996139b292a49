"""Layers with explicit forward/backward passes.

Tensors are channels-last: (batch, time, channels) for sequence data and
(batch, features) after pooling.  Every layer caches what its backward pass
needs during ``forward`` and accumulates nothing: ``backward`` overwrites
``grads``.
"""
from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray | None] = {}

    def forward(self, x, training=False):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Conv1D(Layer):
    """'Same' cross-correlation; even kernels pad (k-1)//2 left and k//2 right."""

    kind = "conv"

    def __init__(self, c_in, c_out, k, rng, input_grad=True):
        super().__init__()
        self.k = k
        self.input_grad = input_grad
        self.params["W"] = glorot_uniform(rng, (k, c_in, c_out), c_in * k, c_out * k)
        self.params["b"] = np.zeros(c_out)

    def forward(self, x, training=False):
        W = self.params["W"]
        k, c_in, c_out = W.shape
        if x.shape[-1] != c_in:
            raise ValueError(f"channel mismatch: layer expects {c_in}, got {x.shape[-1]}")
        B, L, _ = x.shape
        pl, pr = (k - 1) // 2, k // 2
        xp = np.pad(x, ((0, 0), (pl, pr), (0, 0))) if k > 1 else x
        cols = sliding_window_view(xp, k, axis=1).transpose(0, 1, 3, 2).reshape(B * L, k * c_in)
        self._cache = (cols, x.shape)
        return (cols @ W.reshape(k * c_in, c_out) + self.params["b"]).reshape(B, L, c_out)

    def backward(self, dy):
        cols, (B, L, c_in) = self._cache
        W = self.params["W"]
        k, _, c_out = W.shape
        dy2 = dy.reshape(B * L, c_out)
        self.grads["W"] = (cols.T @ dy2).reshape(W.shape)
        self.grads["b"] = dy2.sum(axis=0)
        if not self.input_grad:
            return None
        dcols = (dy2 @ W.reshape(k * c_in, c_out).T).reshape(B, L, k, c_in)
        dxp = np.zeros((B, L + k - 1, c_in))
        for j in range(k):
            dxp[:, j:j + L] += dcols[:, :, j]
        pl = (k - 1) // 2
        return dxp[:, pl:pl + L]


class BatchNorm(Layer):
    """Per-channel normalisation over (batch, time)."""

    kind = "bn"
    eps = 1e-5
    momentum = 0.9

    def __init__(self, channels):
        super().__init__()
        self.params["gamma"] = np.ones(channels)
        self.params["beta"] = np.zeros(channels)
        self.buffers["running_mean"] = None
        self.buffers["running_var"] = None

    def forward(self, x, training=False):
        axes = tuple(range(x.ndim - 1))
        gamma, beta = self.params["gamma"], self.params["beta"]
        if training:
            n = x.size // x.shape[-1]
            if n < 2:
                raise ValueError("batch norm in training mode needs at least two values per channel")
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            rm, rv = self.buffers["running_mean"], self.buffers["running_var"]
            if rm is None:
                self.buffers["running_mean"], self.buffers["running_var"] = mean.copy(), var.copy()
            else:
                m = self.momentum
                self.buffers["running_mean"] = m * rm + (1 - m) * mean
                self.buffers["running_var"] = m * rv + (1 - m) * var
        else:
            if self.buffers["running_mean"] is None:
                raise RuntimeError("batch norm used for inference before any training statistics exist")
            mean, var = self.buffers["running_mean"], self.buffers["running_var"]
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std, training, axes)
        return gamma * xhat + beta

    def backward(self, dy):
        xhat, inv_std, training, axes = self._cache
        gamma = self.params["gamma"]
        self.grads["gamma"] = (dy * xhat).sum(axis=axes)
        self.grads["beta"] = dy.sum(axis=axes)
        dxhat = dy * gamma
        if not training:
            return dxhat * inv_std
        n = dy.size // dy.shape[-1]
        return (inv_std / n) * (n * dxhat - dxhat.sum(axis=axes) - xhat * (dxhat * xhat).sum(axis=axes))


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, training=False):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy):
        return dy * self._mask


class GlobalAvgPool(Layer):
    """Mean over the time axis: (B, L, C) -> (B, C)."""

    kind = "gap"

    def forward(self, x, training=False):
        if x.shape[1] < 1:
            raise ValueError("cannot pool an empty time axis")
        self._L = x.shape[1]
        return x.mean(axis=1)

    def backward(self, dy):
        return np.repeat(dy[:, None, :] / self._L, self._L, axis=1)


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in, n_out, rng):
        super().__init__()
        self.params["W"] = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.params["b"] = np.zeros(n_out)

    def forward(self, x, training=False):
        self._x = x
        return x @ self.params["W"] + self.params["b"]

    def backward(self, dy):
        self.grads["W"] = self._x.T @ dy
        self.grads["b"] = dy.sum(axis=0)
        return dy @ self.params["W"].T


def _sigmoid(z):
    # split by sign so exp never overflows
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


class LSTM(Layer):
    """Single LSTM layer returning every hidden state, (B, T, D) -> (B, T, H).

    Gate layout in the fused weight matrices: input, forget, output, candidate.
    Starts from h = c = 0.
    """

    kind = "lstm"

    def __init__(self, n_in, hidden, rng):
        super().__init__()
        self.hidden = hidden
        self.params["Wx"] = glorot_uniform(rng, (n_in, 4 * hidden), n_in, 4 * hidden)
        self.params["Wh"] = glorot_uniform(rng, (hidden, 4 * hidden), hidden, 4 * hidden)
        self.params["b"] = np.zeros(4 * hidden)

    def forward(self, x, training=False):
        B, T, _ = x.shape
        H = self.hidden
        Wx, Wh, b = self.params["Wx"], self.params["Wh"], self.params["b"]
        xw = x @ Wx + b
        h = np.zeros((B, H))
        c = np.zeros((B, H))
        hs, cs, gates = [h], [c], []
        for t in range(T):
            z = xw[:, t] + h @ Wh
            i, f, o = (_sigmoid(z[:, j * H:(j + 1) * H]) for j in range(3))
            g = np.tanh(z[:, 3 * H:])
            c = f * c + i * g
            h = o * np.tanh(c)
            gates.append((i, f, o, g))
            hs.append(h)
            cs.append(c)
        self._cache = (x, hs, cs, gates)
        return np.stack(hs[1:], axis=1)

    def backward(self, dy):
        x, hs, cs, gates = self._cache
        B, T, _ = x.shape
        H = self.hidden
        Wh = self.params["Wh"]
        dz_all = np.empty((B, T, 4 * H))
        dh_next = np.zeros((B, H))
        dc_next = np.zeros((B, H))
        for t in reversed(range(T)):
            i, f, o, g = gates[t]
            c, c_prev = cs[t + 1], cs[t]
            dh = dy[:, t] + dh_next
            tc = np.tanh(c)
            do = dh * tc
            dc = dh * o * (1 - tc * tc) + dc_next
            di = dc * g
            df = dc * c_prev
            dg = dc * i
            dz = np.concatenate((di * i * (1 - i), df * f * (1 - f), do * o * (1 - o), dg * (1 - g * g)), axis=1)
            dz_all[:, t] = dz
            dh_next = dz @ Wh.T
            dc_next = dc * f
        h_prev = np.stack(hs[:-1], axis=1)
        self.grads["Wx"] = x.reshape(B * T, -1).T @ dz_all.reshape(B * T, -1)
        self.grads["Wh"] = h_prev.reshape(B * T, H).T @ dz_all.reshape(B * T, -1)
        self.grads["b"] = dz_all.sum(axis=(0, 1))
        return dz_all @ self.params["Wx"].T


class LastStep(Layer):
    """(B, T, H) -> (B, H), keeping the final time step."""

    kind = "last"

    def forward(self, x, training=False):
        self._shape = x.shape
        return x[:, -1]

    def backward(self, dy):
        dx = np.zeros(self._shape)
        dx[:, -1] = dy
        return dx


class FoldSequence(Layer):
    """(B, S, L, C) -> (B*S, L, C) so a window model runs on every sequence element."""

    kind = "fold"

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(-1, *x.shape[2:])

    def backward(self, dy):
        return None if dy is None else dy.reshape(self._shape)


class UnfoldSequence(Layer):
    """(B*S, F) -> (B, S, F)."""

    kind = "unfold"

    def __init__(self, seq_len):
        super().__init__()
        self.seq_len = seq_len

    def forward(self, x, training=False):
        return x.reshape(-1, self.seq_len, x.shape[-1])

    def backward(self, dy):
        return dy.reshape(-1, dy.shape[-1])


class ResidualBlock(Layer):
    """Three conv/BN stages (ReLU between) plus a shortcut, then ReLU.

    The shortcut is the identity when channel counts match, else a 1x1 conv + BN.
    """

    kind = "resblock"

    def __init__(self, c_in, c_out, kernels, rng, input_grad=True):
        super().__init__()
        k1, k2, k3 = kernels
        self.main = [
            Conv1D(c_in, c_out, k1, rng, input_grad=input_grad), BatchNorm(c_out), ReLU(),
            Conv1D(c_out, c_out, k2, rng), BatchNorm(c_out), ReLU(),
            Conv1D(c_out, c_out, k3, rng), BatchNorm(c_out),
        ]
        self.shortcut = [] if c_in == c_out else [Conv1D(c_in, c_out, 1, rng, input_grad=input_grad),
                                                  BatchNorm(c_out)]
        self.out_relu = ReLU()
        self.input_grad = input_grad

    def sublayers(self):
        return [*self.main, *self.shortcut]

    def forward(self, x, training=False):
        h = x
        for layer in self.main:
            h = layer.forward(h, training)
        s = x
        for layer in self.shortcut:
            s = layer.forward(s, training)
        return self.out_relu.forward(h + s, training)

    def backward(self, dy):
        d = self.out_relu.backward(dy)
        dm = d
        for layer in reversed(self.main):
            dm = layer.backward(dm)
        ds = d
        for layer in reversed(self.shortcut):
            ds = layer.backward(ds)
        if not self.input_grad:
            return None
        return dm + ds


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits, targets, class_weights=None):
    """Mean cross-entropy over the batch.

    Returns ``(probabilities, loss, dlogits)``; with ``class_weights`` each row's
    loss is scaled by its target's weight and the mean is over the weights.
    """
    logits = np.atleast_2d(logits)
    targets = np.atleast_1d(np.asarray(targets, dtype=np.int64))
    p = softmax(logits)
    n = len(targets)
    rows = np.arange(n)
    logp = logits[rows, targets] - logits.max(axis=-1) - np.log(
        np.exp(logits - logits.max(axis=-1, keepdims=True)).sum(axis=-1))
    w = np.ones(n) if class_weights is None else np.asarray(class_weights, dtype=np.float64)[targets]
    total = w.sum()
    loss = float(-(w * logp).sum() / total)
    d = p.copy()
    d[rows, targets] -= 1.0
    d *= (w / total)[:, None]
    return p, loss, d
