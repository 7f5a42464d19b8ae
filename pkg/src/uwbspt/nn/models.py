"""Model assembly and checkpoint serialization.

Three classifier variants share the same two convolutional stacks:

* ``td``     one stack on the slow-time-difference view,
* ``wrtft``  one stack on the weighted range-time-frequency view,
* ``spn``    both stacks in parallel, flattened features concatenated.

Checkpoints store a spec header (JSON) followed by every parameter flattened
to little-endian float32 in declaration order.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass

import numpy as np

from .layers import (
    Conv2D,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool2D,
    Param,
    ReLU,
    Sequential,
    Softmax,
    SpatialDropout,
)

CHECKPOINT_MAGIC = b"SPNW"
CHECKPOINT_VERSION = 1

MODEL_KINDS = ("td", "wrtft", "spn")


@dataclass(frozen=True)
class ModelSpec:
    """Everything needed to rebuild a model with identical shapes."""

    kind: str
    num_classes: int
    td_shape: tuple[int, int] | None  # (H, W) of the time-difference view
    wr_shape: tuple[int, int] | None  # (H, W) of the spectral view
    seed: int = 0

    def __post_init__(self):
        if self.kind not in MODEL_KINDS:
            raise ValueError(f"kind must be one of {MODEL_KINDS}, got {self.kind!r}")
        if self.num_classes < 2:
            raise ValueError("num_classes must be >= 2")
        if self.kind in ("td", "spn") and self.td_shape is None:
            raise ValueError(f"{self.kind} model needs td_shape")
        if self.kind in ("wrtft", "spn") and self.wr_shape is None:
            raise ValueError(f"{self.kind} model needs wr_shape")

    def to_json(self) -> str:
        d = asdict(self)
        d["td_shape"] = list(self.td_shape) if self.td_shape else None
        d["wr_shape"] = list(self.wr_shape) if self.wr_shape else None
        return json.dumps(d, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ModelSpec":
        d = json.loads(text)
        return cls(
            kind=d["kind"],
            num_classes=int(d["num_classes"]),
            td_shape=tuple(d["td_shape"]) if d["td_shape"] else None,
            wr_shape=tuple(d["wr_shape"]) if d["wr_shape"] else None,
            seed=int(d["seed"]),
        )


def _conv_out(h: int, w: int, kh: int, kw: int) -> tuple[int, int]:
    return h - kh + 1, w - kw + 1


def _pool_out(h: int, w: int, ph: int, pw: int) -> tuple[int, int]:
    return h // ph, w // pw


def _check_dims(h: int, w: int, stage: str) -> None:
    if h < 1 or w < 1:
        raise ValueError(f"feature map collapsed to {h}x{w} at {stage}; input too small")


def td_stack_output_dim(shape: tuple[int, int]) -> int:
    """Flattened size after the three-round time-difference conv stack."""
    h, w = shape
    channels = (16, 32, 32)
    for i, c in enumerate(channels):
        h, w = _conv_out(h, w, 2, 3)
        _check_dims(h, w, f"td conv{i + 1}")
        h, w = _pool_out(h, w, 2, 3)
        _check_dims(h, w, f"td pool{i + 1}")
    return h * w * channels[-1]


def wr_stack_output_dim(shape: tuple[int, int]) -> int:
    """Flattened size after the two-round spectral conv stack."""
    h, w = shape
    channels = (10, 20)
    for i, c in enumerate(channels):
        h, w = _conv_out(h, w, 2, 2)
        _check_dims(h, w, f"wrtft conv{i + 1}")
        h, w = _pool_out(h, w, 2, 2)
        _check_dims(h, w, f"wrtft pool{i + 1}")
    return h * w * channels[-1]


def _td_stack(rng, dropout_rngs, dtype) -> Sequential:
    layers: list[Layer] = []
    in_c = 1
    for c in (16, 32, 32):
        layers.append(Conv2D(in_c, c, (2, 3), rng, dtype=dtype))
        layers.append(SpatialDropout(0.3, rng=next(dropout_rngs)))
        layers.append(MaxPool2D((2, 3)))
        in_c = c
    layers.append(Flatten())
    return Sequential(layers)


def _wr_stack(rng, dropout_rngs, dtype) -> Sequential:
    layers: list[Layer] = []
    in_c = 1
    for c in (10, 20):
        layers.append(Conv2D(in_c, c, (2, 2), rng, dtype=dtype))
        layers.append(SpatialDropout(0.3, rng=next(dropout_rngs)))
        layers.append(MaxPool2D((2, 2)))
        in_c = c
    layers.append(Flatten())
    return Sequential(layers)


class SingleViewModel:
    """One conv stack plus a dense head; consumes inputs[0]."""

    def __init__(self, spec: ModelSpec, net: Sequential):
        self.spec = spec
        self.net = net

    def forward(self, inputs: tuple[np.ndarray, ...], training: bool = False) -> np.ndarray:
        return self.net.forward(inputs[0], training=training)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, ...]:
        return (self.net.backward(grad),)

    def params(self) -> list[Param]:
        return self.net.params()


class TwoBranchModel:
    """Parallel conv stacks whose flattened features feed a shared head."""

    def __init__(self, spec: ModelSpec, td_branch: Sequential, wr_branch: Sequential, head: Sequential, td_dim: int):
        self.spec = spec
        self.td_branch = td_branch
        self.wr_branch = wr_branch
        self.head = head
        self._td_dim = td_dim

    def forward(self, inputs: tuple[np.ndarray, ...], training: bool = False) -> np.ndarray:
        f_td = self.td_branch.forward(inputs[0], training=training)
        f_wr = self.wr_branch.forward(inputs[1], training=training)
        fused = np.concatenate([f_td, f_wr], axis=1)
        return self.head.forward(fused, training=training)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, ...]:
        g = self.head.backward(grad)
        g_td = self.td_branch.backward(g[:, : self._td_dim])
        g_wr = self.wr_branch.backward(g[:, self._td_dim :])
        return (g_td, g_wr)

    def params(self) -> list[Param]:
        return self.td_branch.params() + self.wr_branch.params() + self.head.params()


Model = SingleViewModel | TwoBranchModel


def build_model(spec: ModelSpec, dtype=np.float32) -> Model:
    """Build with seed-deterministic initialization.

    Weights use fan-in He-uniform draws from one stream in declaration order;
    biases start at zero.  Dropout layers get their own derived streams so
    training mask sequences are reproducible.
    """
    rng = np.random.default_rng(spec.seed)
    counter = iter(range(10_000))
    dropout_rngs = (np.random.default_rng([spec.seed, 1_000 + i]) for i in counter)
    c = spec.num_classes

    if spec.kind == "td":
        dim = td_stack_output_dim(spec.td_shape)
        net = _td_stack(rng, dropout_rngs, dtype)
        net.layers += [
            Dense(dim, 64, rng, dtype=dtype),
            ReLU(),
            Dropout(0.5, rng=next(dropout_rngs)),
            Dense(64, c, rng, dtype=dtype),
            Softmax(),
        ]
        return SingleViewModel(spec, net)

    if spec.kind == "wrtft":
        dim = wr_stack_output_dim(spec.wr_shape)
        net = _wr_stack(rng, dropout_rngs, dtype)
        net.layers += [
            Dense(dim, 20, rng, dtype=dtype),
            ReLU(),
            Dense(20, 10, rng, dtype=dtype),
            ReLU(),
            Dropout(0.5, rng=next(dropout_rngs)),
            Dense(10, c, rng, dtype=dtype),
            Softmax(),
        ]
        return SingleViewModel(spec, net)

    td_dim = td_stack_output_dim(spec.td_shape)
    wr_dim = wr_stack_output_dim(spec.wr_shape)
    td_branch = _td_stack(rng, dropout_rngs, dtype)
    wr_branch = _wr_stack(rng, dropout_rngs, dtype)
    head = Sequential(
        [
            Dense(td_dim + wr_dim, 128, rng, dtype=dtype),
            ReLU(),
            Dropout(0.5, rng=next(dropout_rngs)),
            Dense(128, 64, rng, dtype=dtype),
            ReLU(),
            Dense(64, c, rng, dtype=dtype),
            Softmax(),
        ]
    )
    return TwoBranchModel(spec, td_branch, wr_branch, head, td_dim)


def num_params(model: Model) -> int:
    return sum(p.size for p in model.params())


def save_model(model: Model, path) -> None:
    """magic | version byte | u32 LE spec length | spec JSON | f32 LE params."""
    spec_bytes = model.spec.to_json().encode("utf-8")
    flat = np.concatenate([p.value.astype(np.float32).ravel() for p in model.params()])
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<B", CHECKPOINT_VERSION))
        fh.write(struct.pack("<I", len(spec_bytes)))
        fh.write(spec_bytes)
        fh.write(flat.astype("<f4").tobytes())


def load_model(path, dtype=np.float32) -> Model:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 9 or blob[:4] != CHECKPOINT_MAGIC:
        raise ValueError("not a model checkpoint")
    version = blob[4]
    if version != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    (spec_len,) = struct.unpack_from("<I", blob, 5)
    header_end = 9 + spec_len
    if len(blob) < header_end:
        raise ValueError("truncated checkpoint header")
    spec = ModelSpec.from_json(blob[9:header_end].decode("utf-8"))
    model = build_model(spec, dtype=dtype)
    flat = np.frombuffer(blob[header_end:], dtype="<f4")
    expected = num_params(model)
    if flat.size != expected:
        raise ValueError(f"checkpoint holds {flat.size} params, model needs {expected}")
    offset = 0
    for p in model.params():
        n = p.size
        p.value = flat[offset : offset + n].reshape(p.value.shape).astype(dtype)
        p.grad = np.zeros_like(p.value)
        offset += n
    return model
