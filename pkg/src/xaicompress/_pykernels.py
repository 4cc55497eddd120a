"""Numpy implementations of the quantization / bit-packing kernels.

Semantics are the reference; ``_ckernels`` must agree bit for bit.
"""
import numpy as np

F32_TINY = float(np.finfo(np.float32).tiny)


def packed_group_bytes(fan_in, bits):
    return (fan_in * np.asarray(bits, dtype=np.int64) + 7) // 8


def quantize_columns(weights, bits):
    """Symmetric per-column quantization.

    Returns int32 codes (same shape as ``weights``) and float32 scales.
    Columns that are all zero get scale 1.
    """
    w = np.ascontiguousarray(weights, dtype=np.float64)
    bits = np.asarray(bits, dtype=np.int64)
    qmax = (1 << bits) - 1 >> 1
    maxabs = np.abs(w).max(axis=0)
    scales = (maxabs / qmax).astype(np.float32)
    scales = np.maximum(scales, np.float32(F32_TINY))
    scales[maxabs == 0] = 1.0
    x = w / scales.astype(np.float64)
    codes = np.sign(x) * np.floor(np.abs(x) + 0.5)
    codes = np.clip(codes, -qmax, qmax)
    return codes.astype(np.int32), scales


def pack_codes(codes, bits):
    """Two's-complement, LSB-first bit stream per column; each column starts on a byte."""
    codes = np.asarray(codes, dtype=np.int64)
    out = []
    for j, b in enumerate(np.asarray(bits, dtype=np.int64)):
        b = int(b)
        u = codes[:, j] & ((1 << b) - 1)
        bitmat = ((u[:, None] >> np.arange(b)) & 1).astype(np.uint8)
        out.append(np.packbits(bitmat.ravel(), bitorder="little").tobytes())
    return b"".join(out)


def unpack_codes(buf, fan_in, bits):
    """Inverse of :func:`pack_codes`.

    Returns ``(codes, clean)`` where ``clean`` is False if any padding bit
    at the end of a column is set.
    """
    bits = np.asarray(bits, dtype=np.int64)
    raw = np.frombuffer(buf, dtype=np.uint8)
    codes = np.empty((fan_in, len(bits)), dtype=np.int32)
    clean = True
    pos = 0
    for j, b in enumerate(bits):
        b = int(b)
        nbytes = (fan_in * b + 7) // 8
        stream = np.unpackbits(raw[pos:pos + nbytes], bitorder="little")
        pos += nbytes
        if stream[fan_in * b:].any():
            clean = False
        groups = stream[:fan_in * b].reshape(fan_in, b).astype(np.int64)
        u = (groups << np.arange(b)).sum(axis=1)
        codes[:, j] = np.where(u >= 1 << (b - 1), u - (1 << b), u)
    return codes, clean
