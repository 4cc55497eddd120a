"""Binary model files.

Quantized models (``.xaic``), all little-endian::

    b"XAIC" | version u16 | input_dim u32 | k u32 | layer_count u32
    per layer:
        width u32
        bit-width u8      x width
        scale float32     x width
        bias float32      x width
        packed codes      one group per neuron, fan_in codes of b bits each,
                          two's complement, LSB first, padded to a byte

Full-precision checkpoints (``.xaif``) keep float64 parameters so a
train -> compress round trip through files is lossless::

    b"XAIF" | version u16 | input_dim u32 | layer_count u32
    per layer: width u32 | weights float64 (fan_in x width, row-major) | biases float64
"""
from __future__ import annotations

import struct

import numpy as np

from . import kernels
from .compress import MAX_BITS, MIN_BITS, QuantizedLayer, QuantizedModel
from .errors import (BadMagicError, CodeRangeError, InvalidArgumentError, InvalidFieldError,
                     TruncatedPayloadError, VersionMismatchError)
from .nn import IDENTITY, RELU, DenseLayer, DenseNet

QUANT_MAGIC = b"XAIC"
FLOAT_MAGIC = b"XAIF"
FORMAT_VERSION = 1

_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")


class _Reader:
    def __init__(self, data: bytes):
        self.data = memoryview(data)
        self.pos = 0

    def take(self, n: int, what: str) -> memoryview:
        if n < 0 or self.pos + n > len(self.data):
            raise TruncatedPayloadError(
                f"payload ends at byte {len(self.data)} while reading {what} "
                f"({n} bytes at offset {self.pos})"
            )
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]

    def array(self, dtype, count: int, what: str) -> np.ndarray:
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count, what), dtype=dt).copy()

    def finish(self):
        if self.pos != len(self.data):
            raise InvalidFieldError(f"{len(self.data) - self.pos} trailing bytes after model")


def _header(reader: _Reader, magic: bytes):
    if bytes(reader.data[:4]) != magic:
        raise BadMagicError(f"expected magic {magic!r}")
    reader.pos = 4
    version = _U16.unpack(reader.take(2, "version"))[0]
    if version != FORMAT_VERSION:
        raise VersionMismatchError(f"format version {version}, expected {FORMAT_VERSION}")


def serialize_quantized(model: QuantizedModel) -> bytes:
    model.validate()
    parts = [QUANT_MAGIC, _U16.pack(FORMAT_VERSION),
             _U32.pack(model.input_dim), _U32.pack(model.k), _U32.pack(len(model.layers))]
    for q in model.layers:
        parts.append(_U32.pack(q.width))
        parts.append(q.bits.astype("<u1").tobytes())
        parts.append(q.scales.astype("<f4").tobytes())
        parts.append(q.biases.astype("<f4").tobytes())
        parts.append(kernels.pack_codes(q.codes, q.bits))
    return b"".join(parts)


def deserialize_quantized(data: bytes) -> QuantizedModel:
    reader = _Reader(data)
    _header(reader, QUANT_MAGIC)
    input_dim = reader.u32("input_dim")
    k = reader.u32("k")
    n_layers = reader.u32("layer count")
    if input_dim == 0 or k == 0 or n_layers == 0:
        raise InvalidFieldError("input_dim, k and layer count must be positive")
    layers = []
    fan_in = input_dim
    for i in range(n_layers):
        width = reader.u32(f"layer {i} width")
        if width == 0:
            raise InvalidFieldError(f"layer {i} has zero width")
        bits = reader.array("<u1", width, f"layer {i} bit-widths")
        if bits.min() < MIN_BITS or bits.max() > MAX_BITS:
            raise InvalidFieldError(f"layer {i}: bit-width outside [{MIN_BITS}, {MAX_BITS}]")
        scales = reader.array("<f4", width, f"layer {i} scales").astype(np.float32)
        if not (np.all(np.isfinite(scales)) and np.all(scales > 0)):
            raise InvalidFieldError(f"layer {i}: scales must be finite and positive")
        biases = reader.array("<f4", width, f"layer {i} biases").astype(np.float32)
        if not np.all(np.isfinite(biases)):
            raise InvalidFieldError(f"layer {i}: non-finite bias")
        nbytes = int(kernels.packed_group_bytes(fan_in, bits).sum())
        payload = bytes(reader.take(nbytes, f"layer {i} codes"))
        codes, clean = kernels.unpack_codes(payload, fan_in, bits)
        if not clean:
            raise InvalidFieldError(f"layer {i}: non-zero padding bits")
        qmax = (1 << bits.astype(np.int64)) - 1 >> 1
        if np.any(np.abs(codes.astype(np.int64)) > qmax[None, :]):
            raise CodeRangeError(f"layer {i}: code outside the symmetric range")
        layers.append(QuantizedLayer(codes, scales, bits.astype(np.uint8), biases))
        fan_in = width
    reader.finish()
    if layers[-1].width != k:
        raise InvalidFieldError(f"last layer width {layers[-1].width} != k={k}")
    return QuantizedModel(layers)


def serialize_net(net: DenseNet) -> bytes:
    parts = [FLOAT_MAGIC, _U16.pack(FORMAT_VERSION),
             _U32.pack(net.input_dim), _U32.pack(len(net.layers))]
    for layer in net.layers:
        parts.append(_U32.pack(layer.fan_out))
        parts.append(layer.weights.astype("<f8").tobytes())
        parts.append(layer.biases.astype("<f8").tobytes())
    return b"".join(parts)


def deserialize_net(data: bytes) -> DenseNet:
    reader = _Reader(data)
    _header(reader, FLOAT_MAGIC)
    fan_in = reader.u32("input_dim")
    n_layers = reader.u32("layer count")
    if fan_in == 0 or n_layers == 0:
        raise InvalidFieldError("input_dim and layer count must be positive")
    layers = []
    for i in range(n_layers):
        width = reader.u32(f"layer {i} width")
        if width == 0:
            raise InvalidFieldError(f"layer {i} has zero width")
        w = reader.array("<f8", fan_in * width, f"layer {i} weights").reshape(fan_in, width)
        b = reader.array("<f8", width, f"layer {i} biases")
        act = IDENTITY if i == n_layers - 1 else RELU
        try:
            layers.append(DenseLayer(w.astype(np.float64), b.astype(np.float64), act))
        except InvalidArgumentError as exc:
            raise InvalidFieldError(str(exc)) from exc
        fan_in = width
    reader.finish()
    try:
        return DenseNet(layers)
    except InvalidArgumentError as exc:
        raise InvalidFieldError(str(exc)) from exc


def serialize_model(model) -> bytes:
    if isinstance(model, QuantizedModel):
        return serialize_quantized(model)
    if isinstance(model, DenseNet):
        return serialize_net(model)
    raise InvalidArgumentError(f"cannot serialize a {type(model).__name__}")


def deserialize_model(data: bytes):
    """Dispatch on the magic; anything unrecognised (including b"") is a bad-magic error."""
    head = bytes(data[:4])
    if head == QUANT_MAGIC:
        return deserialize_quantized(data)
    if head == FLOAT_MAGIC:
        return deserialize_net(data)
    raise BadMagicError(f"unknown magic {head!r}")
