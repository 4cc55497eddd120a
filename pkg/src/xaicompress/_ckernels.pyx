# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled quantization / bit-packing kernels (see _pykernels for semantics)."""
import numpy as np
cimport numpy as cnp
from libc.math cimport fabs, floor
from libc.stdint cimport int32_t, int64_t, uint8_t, uint64_t

cnp.import_array()

cdef float F32_TINY = np.finfo(np.float32).tiny


def quantize_columns(weights, bits):
    cdef const double[:, ::1] w = np.ascontiguousarray(weights, dtype=np.float64)
    cdef const int64_t[::1] b = np.ascontiguousarray(bits, dtype=np.int64)
    cdef Py_ssize_t n = w.shape[0], m = w.shape[1], i, j
    codes_arr = np.empty((n, m), dtype=np.int32)
    scales_arr = np.empty(m, dtype=np.float32)
    cdef int32_t[:, ::1] codes = codes_arr
    cdef float[::1] scales = scales_arr
    cdef double maxabs, x, r, sd
    cdef float s
    cdef int64_t qmax
    with nogil:
        for j in range(m):
            qmax = ((<int64_t>1 << b[j]) - 1) >> 1
            maxabs = 0.0
            for i in range(n):
                if fabs(w[i, j]) > maxabs:
                    maxabs = fabs(w[i, j])
            if maxabs == 0.0:
                s = 1.0
            else:
                s = <float>(maxabs / qmax)
                if s < F32_TINY:
                    s = F32_TINY
            scales[j] = s
            sd = <double>s
            for i in range(n):
                x = w[i, j] / sd
                r = floor(fabs(x) + 0.5)
                if r > qmax:
                    r = qmax
                codes[i, j] = <int32_t>(-r if x < 0 else r)
    return codes_arr, scales_arr


def pack_codes(codes, bits):
    cdef const int32_t[:, ::1] c = np.ascontiguousarray(codes, dtype=np.int32)
    cdef const int64_t[::1] b = np.ascontiguousarray(bits, dtype=np.int64)
    cdef Py_ssize_t n = c.shape[0], m = c.shape[1], i, j, pos = 0, total = 0
    for j in range(m):
        total += (n * b[j] + 7) // 8
    out_arr = np.zeros(total, dtype=np.uint8)
    cdef uint8_t[::1] out = out_arr
    cdef uint64_t acc, mask
    cdef int nacc
    with nogil:
        for j in range(m):
            mask = (<uint64_t>1 << b[j]) - 1
            acc = 0
            nacc = 0
            for i in range(n):
                acc |= (<uint64_t><int64_t>c[i, j] & mask) << nacc
                nacc += <int>b[j]
                while nacc >= 8:
                    out[pos] = <uint8_t>(acc & 0xFF)
                    acc >>= 8
                    nacc -= 8
                    pos += 1
            if nacc > 0:
                out[pos] = <uint8_t>(acc & 0xFF)
                pos += 1
    return out_arr.tobytes()


def unpack_codes(buf, Py_ssize_t fan_in, bits):
    cdef const uint8_t[::1] raw = np.frombuffer(buf, dtype=np.uint8)
    cdef const int64_t[::1] b = np.ascontiguousarray(bits, dtype=np.int64)
    cdef Py_ssize_t m = b.shape[0], i, j, pos = 0
    codes_arr = np.empty((fan_in, m), dtype=np.int32)
    cdef int32_t[:, ::1] codes = codes_arr
    cdef uint64_t acc, mask, u
    cdef int nacc, width
    cdef bint clean = True
    with nogil:
        for j in range(m):
            width = <int>b[j]
            mask = (<uint64_t>1 << width) - 1
            acc = 0
            nacc = 0
            for i in range(fan_in):
                while nacc < width:
                    acc |= (<uint64_t>raw[pos]) << nacc
                    nacc += 8
                    pos += 1
                u = acc & mask
                acc >>= width
                nacc -= width
                if u >= (<uint64_t>1 << (width - 1)):
                    codes[i, j] = <int32_t>(<int64_t>u - (<int64_t>1 << width))
                else:
                    codes[i, j] = <int32_t>u
            if acc != 0:
                clean = False
    return codes_arr, bool(clean)
