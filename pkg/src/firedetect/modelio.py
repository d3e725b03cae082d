"""Compact binary model files.

Layout, all little-endian:

    magic "FNET" (4 bytes)
    format version        u32
    input_side            u32
    layer count           u32
    per layer: kind u8, then kind-specific hyperparams
        conv    -> out_channels u32, kernel u32
        dropout -> rate f32
        dense   -> units u32, activation code u32 (0 relu, 1 softmax)
        maxpool, flatten -> nothing
    parameter payload: raw float32, layer order, kernels/weights row-major
        followed by bias for each parametric layer
    CRC32 of the payload  u32

The raw float32 round trip is bit-exact, so a loaded model reproduces the
original's eval-mode outputs bit for bit. The seed is a build-time artifact
and is not persisted.
"""

from __future__ import annotations

import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    ChecksumError,
    FormatVersionError,
    TruncatedModelError,
)
from .kernels import ConvParams, DenseParams
from .network import (
    CONV,
    DENSE,
    DROPOUT,
    FLATTEN,
    MAXPOOL,
    RELU,
    SOFTMAX,
    LayerSpec,
    Network,
    NetworkConfig,
    activation_shape_chain,
)

MAGIC = b"FNET"
FORMAT_VERSION = 1

_KIND_CODES = {CONV: 1, MAXPOOL: 2, DROPOUT: 3, FLATTEN: 4, DENSE: 5}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}
_ACT_CODES = {RELU: 0, SOFTMAX: 1}
_CODE_ACTS = {v: k for k, v in _ACT_CODES.items()}


def save_model(net: Network, path: str | Path) -> None:
    header = bytearray()
    header += struct.pack("<4sI", MAGIC, FORMAT_VERSION)
    header += struct.pack("<II", net.config.input_side, len(net.config.layers))
    for spec in net.config.layers:
        header += struct.pack("<B", _KIND_CODES[spec.kind])
        if spec.kind == CONV:
            header += struct.pack("<II", spec.out_channels, spec.kernel)
        elif spec.kind == DROPOUT:
            header += struct.pack("<f", spec.rate)
        elif spec.kind == DENSE:
            header += struct.pack("<II", spec.units, _ACT_CODES[spec.activation])

    payload = bytearray()
    for arr in net.param_arrays():
        payload += np.ascontiguousarray(arr, dtype="<f4").tobytes()

    with open(path, "wb") as f:
        f.write(bytes(header))
        f.write(bytes(payload))
        f.write(struct.pack("<I", zlib.crc32(bytes(payload)) & 0xFFFFFFFF))


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise TruncatedModelError(f"file ends inside {what}")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_model(path: str | Path) -> Network:
    r = _Reader(Path(path).read_bytes())
    magic, version = r.unpack("<4sI", "header")
    if magic != MAGIC:
        raise BadMagicError(f"expected magic {MAGIC!r}, found {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatVersionError(f"unsupported format version {version}")

    input_side, n_layers = r.unpack("<II", "config block")
    layers: list[LayerSpec] = []
    for i in range(n_layers):
        (code,) = r.unpack("<B", f"layer {i} kind")
        kind = _CODE_KINDS.get(code)
        if kind is None:
            raise FormatVersionError(f"unknown layer kind code {code} at layer {i}")
        if kind == CONV:
            out_channels, kernel = r.unpack("<II", f"layer {i} conv hyperparams")
            layers.append(LayerSpec(CONV, out_channels=out_channels, kernel=kernel))
        elif kind == DROPOUT:
            (rate,) = r.unpack("<f", f"layer {i} dropout rate")
            layers.append(LayerSpec(DROPOUT, rate=rate))
        elif kind == DENSE:
            units, act = r.unpack("<II", f"layer {i} dense hyperparams")
            if act not in _CODE_ACTS:
                raise FormatVersionError(f"unknown activation code {act} at layer {i}")
            layers.append(LayerSpec(DENSE, units=units, activation=_CODE_ACTS[act]))
        else:
            layers.append(LayerSpec(kind))

    config = NetworkConfig(input_side=input_side, layers=tuple(layers))
    shapes = _param_shapes(config)
    n_floats = sum(int(np.prod(s)) for pair in shapes if pair for s in pair)
    payload = r.take(4 * n_floats, "parameter payload")
    (stored_crc,) = r.unpack("<I", "checksum")
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if actual_crc != stored_crc:
        raise ChecksumError(f"payload CRC32 {actual_crc:#010x} != stored {stored_crc:#010x}")

    flat = np.frombuffer(payload, dtype="<f4")
    params: list[ConvParams | DenseParams | None] = []
    offset = 0
    for spec, pair in zip(config.layers, shapes):
        if pair is None:
            params.append(None)
            continue
        main_shape, bias_shape = pair
        n_main, n_bias = int(np.prod(main_shape)), int(np.prod(bias_shape))
        main = flat[offset : offset + n_main].reshape(main_shape).copy()
        offset += n_main
        bias = flat[offset : offset + n_bias].reshape(bias_shape).copy()
        offset += n_bias
        if spec.kind == CONV:
            params.append(ConvParams(main, bias))
        else:
            params.append(DenseParams(main, bias))
    return Network(config, params, seed=0)


def _param_shapes(config: NetworkConfig) -> list[tuple[tuple, tuple] | None]:
    """(main, bias) array shapes per layer, None for parameterless layers."""
    chain = activation_shape_chain(config)
    shape: tuple[int, ...] = (config.input_side, config.input_side, config.input_channels)
    shapes: list[tuple[tuple, tuple] | None] = []
    for spec, out_shape in zip(config.layers, chain):
        if spec.kind == CONV:
            shapes.append(
                (((spec.kernel, spec.kernel, shape[2], spec.out_channels)), (spec.out_channels,))
            )
        elif spec.kind == DENSE:
            shapes.append(((shape[0], spec.units), (spec.units,)))
        else:
            shapes.append(None)
        shape = out_shape
    return shapes
