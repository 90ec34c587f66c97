"""Fixed-topology CNNs over flowpic inputs, plus checkpoint serialization.

Three variants share a LeNet-style backbone (conv 1->6 5x5, pool, conv
6->16 5x5, pool, flatten, linear ->120):

* supervised: 120 -> 84 -> num_classes head (with optional dropout)
* simclr_pretrain: 120 -> 120 -> projection_dim head
* finetune: frozen backbone + fresh 120 -> num_classes classifier
"""

from __future__ import annotations

import io
import json
from collections import OrderedDict
from dataclasses import dataclass, field, asdict

import numpy as np

from .layers import Conv2d, Dropout, Dropout2d, Flatten, Linear, MaxPool2, ReLU

SUPPORTED_DIMS = (32, 64, 1500)
MODES = ("supervised", "simclr_pretrain", "finetune")

CHECKPOINT_MAGIC = b"FPLCKPT1"


@dataclass(frozen=True)
class NetworkConfig:
    flowpic_dim: int
    num_classes: int
    with_dropout: bool = False
    mode: str = "supervised"
    projection_dim: int | None = None

    def __post_init__(self):
        if self.flowpic_dim not in SUPPORTED_DIMS:
            raise ValueError(f"unsupported flowpic_dim {self.flowpic_dim}")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "simclr_pretrain" and self.projection_dim is None:
            raise ValueError("simclr_pretrain requires projection_dim")
        if self.mode == "supervised" and self.projection_dim is not None:
            raise ValueError("projection_dim only applies to simclr modes")


def _flatten_size(dim: int) -> int:
    a = (dim - 4) // 2       # conv 5x5 valid, then 2x2 pool
    b = (a - 4) // 2
    return 16 * b * b


class Network:
    """Ordered layer stack with named parameters and explicit backward."""

    def __init__(self, config: NetworkConfig, layers, rng):
        self.config = config
        self.layers = layers  # list of (name, layer)
        self.rng = rng

    def forward(self, x, train=False):
        x = np.asarray(x)
        if x.ndim == 3:
            x = x[:, None, :, :]
        d = self.config.flowpic_dim
        if x.shape[1:] != (1, d, d):
            raise ValueError(f"expected input (n, 1, {d}, {d}), got {x.shape}")
        for _, layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, grad):
        for _, layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> OrderedDict:
        out = OrderedDict()
        for name, layer in self.layers:
            for pname, arr in layer.params().items():
                out[f"{name}.{pname}"] = arr
        return out

    def gradients(self) -> OrderedDict:
        out = OrderedDict()
        for name, layer in self.layers:
            if layer.frozen:
                continue
            for pname, arr in layer.grads().items():
                out[f"{name}.{pname}"] = arr
        return out

    def trainable_parameters(self) -> OrderedDict:
        out = OrderedDict()
        for name, layer in self.layers:
            if layer.frozen:
                continue
            for pname, arr in layer.params().items():
                out[f"{name}.{pname}"] = arr
        return out

    def param_count(self) -> int:
        return sum(a.size for a in self.parameters().values())

    def trainable_count(self) -> int:
        return sum(a.size for a in self.trainable_parameters().values())

    def set_parameters(self, values: dict) -> None:
        params = self.parameters()
        for name, arr in values.items():
            if name not in params:
                raise KeyError(f"unknown parameter {name!r}")
            if params[name].shape != arr.shape:
                raise ValueError(f"shape mismatch for {name!r}")
            params[name][...] = arr


def build_network(config: NetworkConfig, seed: int = 0, dtype=np.float32) -> Network:
    """Construct and initialize a network for the given config."""
    rng = np.random.default_rng(seed)
    flat = _flatten_size(config.flowpic_dim)
    layers = [
        ("conv1", Conv2d(1, 6, 5, rng, dtype)),
        ("relu1", ReLU()),
        ("pool1", MaxPool2()),
        ("conv2", Conv2d(6, 16, 5, rng, dtype)),
        ("relu2", ReLU()),
    ]
    if config.with_dropout:
        layers.append(("drop2d", Dropout2d(0.25, rng)))
    layers += [
        ("pool2", MaxPool2()),
        ("flatten", Flatten()),
        ("fc1", Linear(flat, 120, rng, dtype)),
        ("relu3", ReLU()),
    ]
    if config.mode == "supervised":
        # the largest resolution drops the 84-unit layer
        if config.flowpic_dim < 1500:
            layers += [
                ("fc2", Linear(120, 84, rng, dtype)),
                ("relu4", ReLU()),
            ]
            if config.with_dropout:
                layers.append(("drop", Dropout(0.5, rng)))
            layers.append(("fc3", Linear(84, config.num_classes, rng, dtype)))
        else:
            if config.with_dropout:
                layers.append(("drop", Dropout(0.5, rng)))
            layers.append(("fc3", Linear(120, config.num_classes, rng, dtype)))
    elif config.mode == "simclr_pretrain":
        layers += [
            ("proj1", Linear(120, 120, rng, dtype)),
            ("relu4", ReLU()),
        ]
        if config.with_dropout:
            layers.append(("drop", Dropout(0.5, rng)))
        layers.append(("proj2", Linear(120, config.projection_dim, rng, dtype)))
    else:  # finetune
        layers.append(("classifier", Linear(120, config.num_classes, rng, dtype)))
        for name, layer in layers:
            if name in ("conv1", "conv2", "fc1"):
                layer.frozen = True
    return Network(config, layers, rng)


@dataclass
class Checkpoint:
    """Immutable network snapshot: config, parameter arrays, metadata."""

    config: NetworkConfig
    parameters: "OrderedDict[str, np.ndarray]"
    metadata: dict = field(default_factory=dict)

    def to_network(self, seed: int = 0) -> Network:
        net = build_network(self.config, seed=seed)
        net.set_parameters(self.parameters)
        return net


def checkpoint_from(network: Network, metadata: dict | None = None) -> Checkpoint:
    params = OrderedDict(
        (name, arr.copy()) for name, arr in network.parameters().items()
    )
    return Checkpoint(network.config, params, dict(metadata or {}))


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    """JSON header + little-endian float32 parameter blob behind a magic."""
    manifest = []
    blob = io.BytesIO()
    offset = 0
    for name, arr in ckpt.parameters.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blob.write(data)
        offset += len(data)
    header = {
        "config": asdict(ckpt.config),
        "metadata": ckpt.metadata,
        "manifest": manifest,
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(len(header_bytes).to_bytes(8, "little"))
        fh.write(header_bytes)
        fh.write(blob.getvalue())


def load_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as fh:
        magic = fh.read(len(CHECKPOINT_MAGIC))
        if magic != CHECKPOINT_MAGIC:
            raise ValueError(f"{path}: not a checkpoint file")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len))
        blob = fh.read()
    config = NetworkConfig(**header["config"])
    params = OrderedDict()
    for entry in header["manifest"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=start)
        params[entry["name"]] = arr.reshape(shape).copy()
    return Checkpoint(config, params, header["metadata"])
