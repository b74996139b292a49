"""FCN, ResNet and FCN-LSTM built from the layers in :mod:`.layers`."""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from ..data import DataError
from .layers import (
    LSTM,
    BatchNorm,
    Conv1D,
    Dense,
    FoldSequence,
    GlobalAvgPool,
    LastStep,
    Layer,
    ReLU,
    ResidualBlock,
    UnfoldSequence,
    softmax,
    softmax_xent,
)

KINDS = ("FCN", "RESNET", "FCN_LSTM")


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "FCN"
    channels: int = 266
    length: int = 40
    seq_len: int = 4
    n_classes: int = 2
    fcn_filters: tuple = (128, 256, 128)
    fcn_kernels: tuple = (8, 5, 3)
    resnet_filters: tuple = (64, 128, 128)
    resnet_kernels: tuple = (8, 5, 3)
    lstm_hidden: tuple = (128, 128)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown model kind {self.kind!r}; expected one of {KINDS}")
        for name in ("fcn_filters", "fcn_kernels", "resnet_filters", "resnet_kernels", "lstm_hidden"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))

    @property
    def input_shape(self) -> tuple:
        if self.kind == "FCN_LSTM":
            return (self.seq_len, self.length, self.channels)
        return (self.length, self.channels)

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        return cls(**json.loads(text))


def _fcn_stack(spec: ModelSpec, rng) -> list[Layer]:
    layers: list[Layer] = []
    c_in = spec.channels
    for i, (c_out, k) in enumerate(zip(spec.fcn_filters, spec.fcn_kernels)):
        layers += [Conv1D(c_in, c_out, k, rng, input_grad=i > 0), BatchNorm(c_out), ReLU()]
        c_in = c_out
    layers.append(GlobalAvgPool())
    return layers


@dataclass
class NeuralModel:
    spec: ModelSpec
    layers: list
    history: dict = field(default_factory=dict)
    input_mean: np.ndarray | None = None
    input_std: np.ndarray | None = None

    # ------------------------------------------------------------ graph

    def leaf_layers(self) -> list[Layer]:
        out = []
        for layer in self.layers:
            out.extend(layer.sublayers() if isinstance(layer, ResidualBlock) else [layer])
        return out

    def relu_layers(self) -> list[ReLU]:
        out = []
        for layer in self.layers:
            if isinstance(layer, ResidualBlock):
                out += [l for l in layer.main if isinstance(l, ReLU)] + [layer.out_relu]
            elif isinstance(layer, ReLU):
                out.append(layer)
        return out

    def named_params(self):
        """(name, layer, key) triples in a fixed order."""
        for i, layer in enumerate(self.leaf_layers()):
            for key in layer.params:
                yield f"{i:02d}.{layer.kind}.{key}", layer, key

    def named_buffers(self):
        for i, layer in enumerate(self.leaf_layers()):
            for key in layer.buffers:
                yield f"{i:02d}.{layer.kind}.{key}", layer, key

    def n_params(self) -> int:
        return sum(layer.params[key].size for _, layer, key in self.named_params())

    def forward(self, x, training=False):
        """Logits for a batch of raw (un-standardised) inputs."""
        x = np.asarray(x, dtype=np.float64)
        if self.input_mean is not None:
            x = (x - self.input_mean) / self.input_std
        for layer in self.layers:
            x = layer.forward(x, training)
        return x

    def backward(self, dlogits):
        d = dlogits
        for layer in reversed(self.layers):
            d = layer.backward(d)
            if d is None:
                break

    def loss_and_grads(self, x, y, class_weights=None):
        logits = self.forward(x, training=True)
        p, loss, d = softmax_xent(logits, y, class_weights)
        self.backward(d)
        return p, loss

    def predict_proba(self, x, training=False):
        return softmax(self.forward(x, training))

    # ------------------------------------------------------------ state

    def get_state(self) -> dict[str, np.ndarray]:
        state = {name: layer.params[key].copy() for name, layer, key in self.named_params()}
        for name, layer, key in self.named_buffers():
            if layer.buffers[key] is not None:
                state[name] = layer.buffers[key].copy()
        return state

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        for name, layer, key in self.named_params():
            layer.params[key] = state[name].copy()
        for name, layer, key in self.named_buffers():
            layer.buffers[key] = state[name].copy() if name in state else None

    # ------------------------------------------------------------ EDN1

    def save(self, path) -> None:
        save_neural(self, path)

    @classmethod
    def load(cls, path) -> "NeuralModel":
        return load_neural(path)


def build_model(spec: ModelSpec, seed: int = 0) -> NeuralModel:
    rng = np.random.default_rng(seed)
    n_cls = spec.n_classes
    if spec.kind == "FCN":
        layers = _fcn_stack(spec, rng) + [Dense(spec.fcn_filters[-1], n_cls, rng)]
    elif spec.kind == "RESNET":
        layers = []
        c_in = spec.channels
        for i, c_out in enumerate(spec.resnet_filters):
            layers.append(ResidualBlock(c_in, c_out, spec.resnet_kernels, rng, input_grad=i > 0))
            c_in = c_out
        layers += [GlobalAvgPool(), Dense(c_in, n_cls, rng)]
    elif spec.kind == "FCN_LSTM":
        layers = [FoldSequence(), *_fcn_stack(spec, rng), UnfoldSequence(spec.seq_len)]
        d = spec.fcn_filters[-1]
        for h in spec.lstm_hidden:
            layers.append(LSTM(d, h, rng))
            d = h
        layers += [LastStep(), Dense(d, n_cls, rng)]
    else:
        raise ValueError(f"unknown model kind {spec.kind!r}")
    return NeuralModel(spec, layers)


_MAGIC = b"EDN1"
_VERSION = 1


def _blob(name: str, arr: np.ndarray) -> bytes:
    arr = np.asarray(arr, dtype="<f8")
    raw = name.encode()
    return (struct.pack("<H", len(raw)) + raw + struct.pack("<I", arr.ndim)
            + struct.pack(f"<{arr.ndim}I", *arr.shape) + arr.tobytes())


def save_neural(model: NeuralModel, path) -> None:
    spec = model.spec.to_json().encode()
    blobs = [(name, layer.params[key]) for name, layer, key in model.named_params()]
    blobs += [(name, layer.buffers[key]) for name, layer, key in model.named_buffers()
              if layer.buffers[key] is not None]
    if model.input_mean is not None:
        blobs += [("input.mean", model.input_mean), ("input.std", model.input_std)]
    history = json.dumps(model.history, sort_keys=True).encode()
    parts = [_MAGIC, struct.pack("<II", _VERSION, len(spec)), spec, struct.pack("<I", len(blobs))]
    parts += [_blob(n, a) for n, a in blobs]
    parts += [struct.pack("<I", len(history)), history]
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_bytes(b"".join(parts))


def load_neural(path) -> NeuralModel:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise DataError(f"{path}: not an EDN1 model file")
    try:
        version, n = struct.unpack_from("<II", data, 4)
        if version != _VERSION:
            raise DataError(f"{path}: unsupported EDN1 version {version}")
        off = 12
        spec = ModelSpec.from_json(data[off:off + n].decode())
        off += n
        (count,) = struct.unpack_from("<I", data, off)
        off += 4
        state = {}
        for _ in range(count):
            (ln,) = struct.unpack_from("<H", data, off)
            name = data[off + 2:off + 2 + ln].decode()
            off += 2 + ln
            (ndim,) = struct.unpack_from("<I", data, off)
            shape = struct.unpack_from(f"<{ndim}I", data, off + 4)
            off += 4 + 4 * ndim
            size = int(np.prod(shape))
            state[name] = np.frombuffer(data, dtype="<f8", count=size, offset=off).reshape(shape).astype(np.float64)
            off += 8 * size
        (ln,) = struct.unpack_from("<I", data, off)
        history = json.loads(data[off + 4:off + 4 + ln].decode())
    except (struct.error, ValueError, UnicodeDecodeError) as exc:
        raise DataError(f"{path}: corrupt EDN1 file ({exc})") from None
    model = build_model(spec, 0)
    model.set_state(state)
    model.input_mean = state.get("input.mean")
    model.input_std = state.get("input.std")
    model.history = history
    return model
