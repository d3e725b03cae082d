"""Network topology, initialization, and whole-net forward/backward passes.

The canonical fire classifier is a 14-layer sequential net: three blocks of
(3x3 conv + relu, 2x2 maxpool, dropout 0.5) with 16/32/64 filters, then
flatten, a 256-unit dense layer, dropout 0.2, a 128-unit dense layer, and a
2-unit dense output with softmax fused in. At input side 64 this comes to
exactly 646,818 trainable parameters.

Dropout is inverted: surviving activations are scaled by 1/(1-rate) at train
time so the eval path is a pure, deterministic forward with no scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ShapeMismatchError, StaleCacheError
from .kernels import (
    ConvParams,
    DenseParams,
    PoolIndex,
    conv2d_backward,
    conv2d_forward,
    cross_entropy_batch,
    dense_backward,
    dense_forward,
    maxpool2_backward,
    maxpool2_forward,
    relu,
    relu_backward,
    softmax,
)

TRAIN = "train"
EVAL = "eval"

CONV = "conv"
MAXPOOL = "maxpool"
DROPOUT = "dropout"
FLATTEN = "flatten"
DENSE = "dense"

RELU = "relu"
SOFTMAX = "softmax"

CLASS_LABELS = ("fire", "nofire")  # index 0 = fire, fixed lexicographically
MIN_INPUT_SIDE = 24  # smallest square input that survives all three conv+pool stages


@dataclass(frozen=True)
class LayerSpec:
    """One sequential layer. Only the fields for its kind are meaningful."""

    kind: str
    out_channels: int = 0
    kernel: int = 3
    rate: float = 0.0
    units: int = 0
    activation: str = RELU


def conv(out_channels: int, kernel: int = 3) -> LayerSpec:
    if out_channels <= 0:
        raise ValueError(f"out_channels must be positive, got {out_channels}")
    return LayerSpec(CONV, out_channels=out_channels, kernel=kernel)


def maxpool() -> LayerSpec:
    return LayerSpec(MAXPOOL)


def dropout(rate: float) -> LayerSpec:
    if not 0.0 < rate < 1.0:
        raise ValueError(f"dropout rate must lie in (0, 1), got {rate}")
    return LayerSpec(DROPOUT, rate=rate)


def flatten() -> LayerSpec:
    return LayerSpec(FLATTEN)


def dense(units: int, activation: str = RELU) -> LayerSpec:
    if units <= 0:
        raise ValueError(f"units must be positive, got {units}")
    if activation not in (RELU, SOFTMAX):
        raise ValueError(f"unknown activation {activation!r}")
    return LayerSpec(DENSE, units=units, activation=activation)


@dataclass(frozen=True)
class NetworkConfig:
    input_side: int
    layers: tuple[LayerSpec, ...]
    input_channels: int = 3
    class_labels: tuple[str, ...] = CLASS_LABELS


def classifier_config(input_side: int = 64) -> NetworkConfig:
    """The canonical 14-layer configuration."""
    layers = (
        conv(16),
        maxpool(),
        dropout(0.5),
        conv(32),
        maxpool(),
        dropout(0.5),
        conv(64),
        maxpool(),
        dropout(0.5),
        flatten(),
        dense(256),
        dropout(0.2),
        dense(128),
        dense(2, activation=SOFTMAX),
    )
    return NetworkConfig(input_side=input_side, layers=layers)


def activation_shape_chain(config: NetworkConfig) -> list[tuple[int, ...]]:
    """Output shape after each layer, starting from [side, side, channels].

    Raises ShapeMismatchError if any stage underflows (input too small).
    """
    shape: tuple[int, ...] = (config.input_side, config.input_side, config.input_channels)
    chain = []
    for i, spec in enumerate(config.layers):
        if spec.kind == CONV:
            h, w, c = shape
            if h < spec.kernel or w < spec.kernel:
                raise ShapeMismatchError(
                    f"input side {config.input_side} leaves only {h}x{w} at layer {i}, "
                    f"smaller than the {spec.kernel}x{spec.kernel} conv kernel"
                )
            shape = (h - spec.kernel + 1, w - spec.kernel + 1, spec.out_channels)
        elif spec.kind == MAXPOOL:
            h, w, c = shape
            if h < 2 or w < 2:
                raise ShapeMismatchError(
                    f"input side {config.input_side} leaves only {h}x{w} at layer {i}, "
                    "too small for 2x2 pooling"
                )
            shape = (h // 2, w // 2, c)
        elif spec.kind == FLATTEN:
            shape = (int(np.prod(shape)),)
        elif spec.kind == DENSE:
            shape = (spec.units,)
        # dropout leaves the shape unchanged
        chain.append(shape)
    return chain


@dataclass
class Network:
    """A configured topology plus its instantiated parameters.

    ``params`` is aligned with ``config.layers``: parameterless layers hold
    None. Immutable during eval-mode forward; training updates mutate the
    parameter arrays in place and require exclusive access.
    """

    config: NetworkConfig
    params: list[ConvParams | DenseParams | None]
    seed: int = 0

    def param_count(self) -> int:
        total = 0
        for p in self.params:
            if isinstance(p, ConvParams):
                total += p.kernels.size + p.bias.size
            elif isinstance(p, DenseParams):
                total += p.weights.size + p.bias.size
        return total

    def param_arrays(self) -> list[np.ndarray]:
        """Flat list of parameter arrays in layer order (kernels/weights, then bias)."""
        arrays = []
        for p in self.params:
            if isinstance(p, ConvParams):
                arrays += [p.kernels, p.bias]
            elif isinstance(p, DenseParams):
                arrays += [p.weights, p.bias]
        return arrays

    def cast(self, dtype) -> "Network":
        """A deep copy with all parameters cast to ``dtype`` (float64 shadow mode)."""
        casted: list[ConvParams | DenseParams | None] = []
        for p in self.params:
            if isinstance(p, ConvParams):
                casted.append(ConvParams(p.kernels.astype(dtype), p.bias.astype(dtype)))
            elif isinstance(p, DenseParams):
                casted.append(DenseParams(p.weights.astype(dtype), p.bias.astype(dtype)))
            else:
                casted.append(None)
        return Network(self.config, casted, self.seed)


def build_classifier(input_side: int = 64, seed: int = 0) -> Network:
    """Instantiate the canonical classifier with seeded initialization.

    Conv and hidden dense layers use He-scaled normals (std = sqrt(2/fan_in));
    the softmax output layer uses Xavier scaling; all biases start at zero.
    """
    config = classifier_config(input_side)
    return init_network(config, seed)


def init_network(config: NetworkConfig, seed: int = 0) -> Network:
    chain = activation_shape_chain(config)  # validates the whole shape chain
    rng = np.random.default_rng(seed)
    params: list[ConvParams | DenseParams | None] = []
    shape: tuple[int, ...] = (config.input_side, config.input_side, config.input_channels)
    for spec, out_shape in zip(config.layers, chain):
        if spec.kind == CONV:
            c_in = shape[2]
            fan_in = spec.kernel * spec.kernel * c_in
            std = math.sqrt(2.0 / fan_in)
            kernels = rng.normal(0.0, std, (spec.kernel, spec.kernel, c_in, spec.out_channels))
            params.append(
                ConvParams(kernels.astype(np.float32), np.zeros(spec.out_channels, np.float32))
            )
        elif spec.kind == DENSE:
            n_in = shape[0]
            if spec.activation == SOFTMAX:
                std = math.sqrt(2.0 / (n_in + spec.units))
            else:
                std = math.sqrt(2.0 / n_in)
            weights = rng.normal(0.0, std, (n_in, spec.units))
            params.append(
                DenseParams(weights.astype(np.float32), np.zeros(spec.units, np.float32))
            )
        else:
            params.append(None)
        shape = out_shape
    return Network(config, params, seed)


@dataclass
class ForwardCache:
    """Per-layer values saved by a train-mode forward, consumed by backward."""

    mode: str
    batch_size: int
    layers: list[dict]
    probs: np.ndarray


def forward(
    net: Network,
    batch: np.ndarray,
    mode: str = EVAL,
    rng: np.random.Generator | None = None,
) -> tuple[np.ndarray, ForwardCache | None]:
    """Run the net over a batch ``[n, side, side, channels]``.

    Eval mode applies no dropout and is a pure function of (parameters,
    input). Train mode draws inverted-dropout masks from ``rng`` and returns
    a cache for the backward pass.
    """
    if mode not in (TRAIN, EVAL):
        raise ValueError(f"mode must be {TRAIN!r} or {EVAL!r}, got {mode!r}")
    if mode == TRAIN and rng is None:
        raise ValueError("train-mode forward needs an rng for dropout masks")
    side, channels = net.config.input_side, net.config.input_channels
    if batch.ndim != 4 or batch.shape[1:] != (side, side, channels):
        raise ShapeMismatchError(
            f"batch shape {batch.shape} does not match [n, {side}, {side}, {channels}]"
        )

    x = batch
    cache_layers: list[dict] = []
    for spec, p in zip(net.config.layers, net.params):
        entry: dict = {}
        if spec.kind == CONV:
            pre = conv2d_forward(x, p)
            entry = {"x": x, "pre": pre}
            x = relu(pre)
        elif spec.kind == MAXPOOL:
            x, index = maxpool2_forward(x)
            entry = {"index": index}
        elif spec.kind == DROPOUT:
            if mode == TRAIN:
                keep = (rng.random(x.shape) >= spec.rate).astype(x.dtype)
                mask = keep / (1.0 - spec.rate)
                entry = {"mask": mask}
                x = x * mask
        elif spec.kind == FLATTEN:
            entry = {"shape": x.shape}
            x = x.reshape(x.shape[0], -1)
        elif spec.kind == DENSE:
            pre = dense_forward(x, p)
            entry = {"x": x, "pre": pre}
            x = softmax(pre) if spec.activation == SOFTMAX else relu(pre)
        cache_layers.append(entry)

    probs = x
    if mode == EVAL:
        return probs, None
    return probs, ForwardCache(TRAIN, batch.shape[0], cache_layers, probs)


def backward(
    net: Network, cache: ForwardCache | None, targets: np.ndarray
) -> list[ConvParams | DenseParams | None]:
    """Gradients of the mean cross-entropy over the batch, aligned with params.

    Respects the dropout masks and pooling argmaxes recorded by the paired
    train-mode forward.
    """
    if cache is None or cache.mode != TRAIN:
        raise StaleCacheError("backward needs the cache from a train-mode forward")
    if len(cache.layers) != len(net.config.layers):
        raise StaleCacheError("cache does not match this network's layer count")
    targets = np.asarray(targets)
    if targets.shape != (cache.batch_size,):
        raise ShapeMismatchError(
            f"targets shape {targets.shape} does not match batch size {cache.batch_size}"
        )

    # final layer is softmax-fused dense: the CE gradient is already w.r.t. its logits
    _, grad = cross_entropy_batch(cache.probs, targets)
    grads: list[ConvParams | DenseParams | None] = [None] * len(net.params)
    for i in range(len(net.config.layers) - 1, -1, -1):
        spec, p, entry = net.config.layers[i], net.params[i], cache.layers[i]
        if spec.kind == DENSE:
            if spec.activation != SOFTMAX:
                grad = relu_backward(entry["pre"], grad)
            grad, grads[i] = dense_backward(entry["x"], p, grad)
        elif spec.kind == FLATTEN:
            grad = grad.reshape(entry["shape"])
        elif spec.kind == DROPOUT:
            grad = grad * entry["mask"]
        elif spec.kind == MAXPOOL:
            grad = maxpool2_backward(entry["index"], grad)
        elif spec.kind == CONV:
            grad = relu_backward(entry["pre"], grad)
            grad, grads[i] = conv2d_backward(entry["x"], p, grad)
    return grads


def mean_cross_entropy(probs: np.ndarray, targets: np.ndarray) -> float:
    loss, _ = cross_entropy_batch(probs, np.asarray(targets))
    return loss


def zero_dropout(config: NetworkConfig) -> NetworkConfig:
    """A copy of ``config`` with every dropout rate forced to 0 (degenerate masks)."""
    layers = tuple(
        replace(spec, rate=0.0) if spec.kind == DROPOUT else spec for spec in config.layers
    )
    return replace(config, layers=layers)
