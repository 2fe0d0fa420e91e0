"""Architectures: encoder-decoder TCN, dilated (gated, residual) TCN, and a per-frame linear baseline.

Parameters live in a flat, ordered ``dict[str, ndarray]`` so that optimizers,
gradient checks and checkpoints can treat every architecture alike.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from ..errors import DimsMismatch, SequenceTooShort, ShapeMismatch
from . import layers as L


class Arch(str, Enum):
    ED_TCN = "ED_TCN"
    D_TCN = "D_TCN"
    FRAMEWISE = "FRAMEWISE"


@dataclass(frozen=True)
class EdTcnConfig:
    encoder_filters: tuple[int, ...] = (64, 96)
    filter_duration_s: float = 10.0
    filter_mode: str = "fixed"  # "fixed" | "derived" (mean length of the shortest class)
    learning_rate: float = 0.001
    epochs: int = 500
    optimizer: str = "rmsprop"

    arch = Arch.ED_TCN

    def __post_init__(self):
        object.__setattr__(self, "encoder_filters", tuple(int(f) for f in self.encoder_filters))
        if not self.encoder_filters or min(self.encoder_filters) < 1:
            raise ValueError("encoder_filters needs at least one positive entry")
        if not self.filter_duration_s > 0:
            raise ValueError("filter_duration_s must be positive")
        if self.filter_mode not in ("fixed", "derived"):
            raise ValueError(f"filter_mode must be 'fixed' or 'derived', not {self.filter_mode!r}")
        _check_training_fields(self)


@dataclass(frozen=True)
class DTcnConfig:
    stacks: int = 5
    layers_per_stack: int = 3
    filters_per_layer: tuple[int, ...] = (32, 64, 96)
    kernel_width: int = 3
    residual_channels: int = 64
    skip_channels: int = 64
    learning_rate: float = 0.001
    epochs: int = 500
    optimizer: str = "adam"

    arch = Arch.D_TCN

    def __post_init__(self):
        object.__setattr__(self, "filters_per_layer", tuple(int(f) for f in self.filters_per_layer))
        if len(self.filters_per_layer) != self.layers_per_stack:
            raise ValueError("filters_per_layer must have one entry per layer in a stack")
        if min(self.stacks, self.layers_per_stack, self.kernel_width,
               self.residual_channels, self.skip_channels, *self.filters_per_layer) < 1:
            raise ValueError("all D-TCN sizes must be positive")
        _check_training_fields(self)

    def dilations(self) -> list[int]:
        return [2**l for _ in range(self.stacks) for l in range(self.layers_per_stack)]

    def receptive_field(self) -> int:
        return 1 + sum((self.kernel_width - 1) * d for d in self.dilations())


@dataclass(frozen=True)
class FramewiseConfig:
    learning_rate: float = 0.1
    epochs: int = 200
    optimizer: str = "sgd"

    arch = Arch.FRAMEWISE

    def __post_init__(self):
        _check_training_fields(self)


def _check_training_fields(cfg) -> None:
    if cfg.learning_rate < 0 or not math.isfinite(cfg.learning_rate):
        raise ValueError("learning_rate must be finite and >= 0")
    if cfg.epochs < 0:
        raise ValueError("epochs must be >= 0")
    if cfg.optimizer not in ("rmsprop", "adam", "sgd"):
        raise ValueError(f"unknown optimizer {cfg.optimizer!r}")


CONFIG_TYPES = {Arch.ED_TCN: EdTcnConfig, Arch.D_TCN: DTcnConfig, Arch.FRAMEWISE: FramewiseConfig}


def config_to_dict(cfg) -> dict:
    d = asdict(cfg)
    return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}


def config_from_dict(arch: Arch, d: dict):
    return CONFIG_TYPES[Arch(arch)](**d)


def filter_width(duration_s: float, fps: float) -> int:
    """Frames spanned by a filter of this duration, rounded up to an odd count."""
    w = max(1, int(round(duration_s * fps)))
    return w if w % 2 else w + 1


def shortest_class_duration(label_sequences, fps: float) -> float:
    """Mean segment duration (seconds) of the class whose segments are shortest on average."""
    lengths: dict[int, list[int]] = {}
    for labels in label_sequences:
        labels = np.asarray(labels)
        change = np.flatnonzero(labels[1:] != labels[:-1]) + 1
        bounds = np.concatenate(([0], change, [labels.size]))
        for s, e in zip(bounds[:-1], bounds[1:]):
            lengths.setdefault(int(labels[s]), []).append(int(e - s))
    if not lengths:
        raise ShapeMismatch("no labelled frames to derive a filter duration from")
    return min(float(np.mean(v)) for v in lengths.values()) / fps


@dataclass
class ModelParams:
    arch: Arch
    config: object
    n_classes: int
    input_dims: int
    fps_at_train: float
    params: dict[str, np.ndarray] = field(default_factory=dict)
    filter_width: int = 1  # ED-TCN temporal kernel width in frames

    def __post_init__(self):
        self.arch = Arch(self.arch)
        for name, value in self.params.items():
            if not np.all(np.isfinite(value)):
                raise ShapeMismatch(f"parameter {name} has non-finite values")

    def __eq__(self, other):
        if not isinstance(other, ModelParams):
            return NotImplemented
        return (
            self.arch == other.arch
            and self.config == other.config
            and (self.n_classes, self.input_dims, self.filter_width) == (other.n_classes, other.input_dims, other.filter_width)
            and np.float64(self.fps_at_train).tobytes() == np.float64(other.fps_at_train).tobytes()
            and list(self.params) == list(other.params)
            and all(self.params[k].shape == other.params[k].shape
                    and self.params[k].tobytes() == other.params[k].tobytes() for k in self.params)
        )

    def copy(self) -> "ModelParams":
        return ModelParams(self.arch, self.config, self.n_classes, self.input_dims, self.fps_at_train,
                           {k: v.copy() for k, v in self.params.items()}, self.filter_width)

    @property
    def depth(self) -> int:
        return len(self.config.encoder_filters) if self.arch is Arch.ED_TCN else 0

    @property
    def min_length(self) -> int:
        """Shortest sequence the forward pass accepts."""
        return 2**self.depth


def _glorot(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    width, cin, cout = shape
    limit = math.sqrt(6.0 / (width * cin + width * cout))
    return rng.uniform(-limit, limit, size=shape)


def _add_conv(params, rng, name, width, cin, cout):
    params[f"{name}.W"] = _glorot(rng, (width, cin, cout))
    params[f"{name}.b"] = np.zeros(cout)


def init_model(config, input_dims: int, n_classes: int, fps: float, rng: np.random.Generator,
               width: int | None = None) -> ModelParams:
    """Glorot-uniform kernels and zero biases.

    ``width`` overrides the ED-TCN filter width; otherwise it comes from the
    fixed filter duration at ``fps``.
    """
    if input_dims < 1 or n_classes < 1:
        raise ShapeMismatch("input_dims and n_classes must be positive")
    params: dict[str, np.ndarray] = {}
    arch = config.arch
    fw = 1
    if arch is Arch.ED_TCN:
        fw = width if width is not None else filter_width(config.filter_duration_s, fps)
        cin = input_dims
        for i, f in enumerate(config.encoder_filters):
            _add_conv(params, rng, f"enc{i}", fw, cin, f)
            cin = f
        for i, f in enumerate(reversed(config.encoder_filters)):
            _add_conv(params, rng, f"dec{i}", fw, cin, f)
            cin = f
        _add_conv(params, rng, "out", 1, cin, n_classes)
    elif arch is Arch.D_TCN:
        R, S = config.residual_channels, config.skip_channels
        _add_conv(params, rng, "in", 1, input_dims, R)
        for s in range(config.stacks):
            for l, f in enumerate(config.filters_per_layer):
                p = f"s{s}l{l}"
                _add_conv(params, rng, f"{p}.dil", config.kernel_width, R, 2 * f)
                _add_conv(params, rng, f"{p}.res", 1, f, R)
                _add_conv(params, rng, f"{p}.skip", 1, f, S)
        _add_conv(params, rng, "out", 1, S, n_classes)
    else:
        _add_conv(params, rng, "out", 1, input_dims, n_classes)
    return ModelParams(arch, config, n_classes, input_dims, float(fps), params, fw)


def _conv(params, name, x, dilation=1):
    return L.conv1d_forward(x, params[f"{name}.W"], params[f"{name}.b"], dilation)


def _conv_back(grads, name, dy, cache):
    dx, dW, db = L.conv1d_backward(dy, cache)
    grads[f"{name}.W"] = dW
    grads[f"{name}.b"] = db
    return dx


# Each architecture has a forward that returns (logits, cache) and a backward
# mapping dlogits to (param grads, input grad).

def _ed_forward(model: ModelParams, x: np.ndarray):
    p = model.params
    depth = model.depth
    if x.shape[0] % (2**depth):
        raise ShapeMismatch(f"ED-TCN core needs a multiple of {2**depth} frames")
    caches = []
    h = x
    for i in range(depth):
        z, c_conv = _conv(p, f"enc{i}", h)
        a, c_relu = L.relu_forward(z)
        h, c_pool = L.maxpool2_forward(a)
        caches.append((c_conv, c_relu, c_pool))
    for i in range(depth):
        u, _ = L.upsample2_forward(h)
        z, c_conv = _conv(p, f"dec{i}", u)
        h, c_relu = L.relu_forward(z)
        caches.append((c_conv, c_relu))
    logits, c_out = _conv(p, "out", h)
    return logits, (caches, c_out)


def _ed_backward(model: ModelParams, cache, dlogits):
    caches, c_out = cache
    depth = model.depth
    grads: dict[str, np.ndarray] = {}
    dh = _conv_back(grads, "out", dlogits, c_out)
    for i in reversed(range(depth)):
        c_conv, c_relu = caches[depth + i]
        dz = L.relu_backward(dh, c_relu)
        du = _conv_back(grads, f"dec{i}", dz, c_conv)
        dh = L.upsample2_backward(du)
    for i in reversed(range(depth)):
        c_conv, c_relu, c_pool = caches[i]
        da = L.maxpool2_backward(dh, c_pool)
        dz = L.relu_backward(da, c_relu)
        dh = _conv_back(grads, f"enc{i}", dz, c_conv)
    return grads, dh


def _dtcn_forward(model: ModelParams, x: np.ndarray):
    p, cfg = model.params, model.config
    h, c_in = _conv(p, "in", x)
    skip_sum = np.zeros((x.shape[0], cfg.skip_channels))
    caches = []
    for s in range(cfg.stacks):
        for l in range(cfg.layers_per_stack):
            name = f"s{s}l{l}"
            z, c_dil = _conv(p, f"{name}.dil", h, 2**l)
            g, c_gate = L.gated_forward(z)
            r, c_res = _conv(p, f"{name}.res", g)
            k, c_skip = _conv(p, f"{name}.skip", g)
            h = h + r
            skip_sum += k
            caches.append((name, c_dil, c_gate, c_res, c_skip))
    a, c_relu = L.relu_forward(skip_sum)
    logits, c_out = _conv(p, "out", a)
    return logits, (c_in, caches, c_relu, c_out)


def _dtcn_backward(model: ModelParams, cache, dlogits):
    c_in, caches, c_relu, c_out = cache
    grads: dict[str, np.ndarray] = {}
    da = _conv_back(grads, "out", dlogits, c_out)
    dskip = L.relu_backward(da, c_relu)
    dh = np.zeros((dlogits.shape[0], model.config.residual_channels))
    for name, c_dil, c_gate, c_res, c_skip in reversed(caches):
        dg = _conv_back(grads, f"{name}.res", dh, c_res) + _conv_back(grads, f"{name}.skip", dskip, c_skip)
        dz = L.gated_backward(dg, c_gate)
        dh = dh + _conv_back(grads, f"{name}.dil", dz, c_dil)
    dx = _conv_back(grads, "in", dh, c_in)
    return grads, dx


def _fw_forward(model: ModelParams, x: np.ndarray):
    return _conv(model.params, "out", x)


def _fw_backward(model: ModelParams, cache, dlogits):
    grads: dict[str, np.ndarray] = {}
    dx = _conv_back(grads, "out", dlogits, cache)
    return grads, dx


_IMPL = {
    Arch.ED_TCN: (_ed_forward, _ed_backward),
    Arch.D_TCN: (_dtcn_forward, _dtcn_backward),
    Arch.FRAMEWISE: (_fw_forward, _fw_backward),
}


def check_features(model: ModelParams, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.input_dims:
        raise DimsMismatch(f"model expects {model.input_dims} feature dims, got shape {x.shape}")
    return x


def padded_length(model: ModelParams, T: int) -> int:
    """Length the forward core runs on: a multiple of 2^L for ED-TCN, T otherwise."""
    m = model.min_length
    return -(-T // m) * m


def pad_repeat_last(x: np.ndarray, length: int) -> np.ndarray:
    if length <= x.shape[0]:
        return x
    return np.concatenate([x, np.repeat(x[-1:], length - x.shape[0], axis=0)])


def forward_logits(model: ModelParams, x):
    """Logits for exactly the frames in ``x``, with a cache for :func:`backward`.

    ED-TCN input is right-padded by repeating the last frame to a multiple of
    2^L and the output truncated back to T rows; T < 2^L is refused.
    """
    x = check_features(model, x)
    T = x.shape[0]
    if T < model.min_length:
        raise SequenceTooShort(f"{model.arch.value} with depth {model.depth} needs >= {model.min_length} frames, got {T}")
    fwd = _IMPL[model.arch][0]
    logits, cache = fwd(model, pad_repeat_last(x, padded_length(model, T)))
    return logits[:T], (cache, T, logits.shape[0])


def backward(model: ModelParams, cache, dlogits: np.ndarray):
    """Gradients of a scalar loss given its gradient w.r.t. the (unpadded) logits.

    Returns (param grads, input grad). Padded frames get zero logit gradient,
    so they drop out of the loss; their input gradient is folded back onto the
    last real frame they copied.
    """
    inner, T, padded = cache
    full = np.zeros((padded, dlogits.shape[1]))
    full[:T] = dlogits
    grads, dx = _IMPL[model.arch][1](model, inner, full)
    dx_real = dx[:T].copy()
    dx_real[T - 1] += dx[T:].sum(axis=0)
    return grads, dx_real


def forward(model: ModelParams, x) -> np.ndarray:
    """Per-frame class probabilities, shape (T, n_classes)."""
    logits, _ = forward_logits(model, x)
    return L.softmax(logits)


def ed_tcn_forward(model: ModelParams, x) -> np.ndarray:
    if model.arch is not Arch.ED_TCN:
        raise ShapeMismatch(f"expected ED_TCN parameters, got {model.arch.value}")
    return forward(model, x)


def d_tcn_forward(model: ModelParams, x) -> np.ndarray:
    if model.arch is not Arch.D_TCN:
        raise ShapeMismatch(f"expected D_TCN parameters, got {model.arch.value}")
    return forward(model, x)
