# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled hot kernels: flat L1 scanning and significance-weighted averages.

Each routine accumulates in float64 with one sequential accumulator per
output element, so results are bit-stable regardless of thread count (rows
and channels are independent).  ``sigdesc._kernels_py`` holds the pure-numpy
twins used when this extension is not built.
"""

from cython.parallel import prange

import numpy as np

BACKEND = "compiled"


def l1_scan(const float[:, ::1] matrix, const float[::1] query):
    """Dimension-normalized L1 distance from ``query`` to every matrix row.

    ``matrix`` is (n, d) float32, ``query`` (d,) float32; returns (n,) float64
    with each entry ``sum(|row - query|) / d``.
    """
    cdef Py_ssize_t n = matrix.shape[0]
    cdef Py_ssize_t d = matrix.shape[1]
    cdef Py_ssize_t i, j
    cdef double acc, diff
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for i in prange(n):
            acc = 0.0
            for j in range(d):
                diff = <double> matrix[i, j] - <double> query[j]
                acc = acc + (diff if diff >= 0.0 else -diff)
            o[i] = acc / d
    return out


def weighted_channel_means(const float[:, :, ::1] maps, const double[:, ::1] weights):
    """Per-channel weighted average of (channels, h, w) maps under one shared
    (h, w) non-negative weight matrix.  Zero total weight yields 0.0."""
    cdef Py_ssize_t c = maps.shape[0]
    cdef Py_ssize_t h = maps.shape[1]
    cdef Py_ssize_t w = maps.shape[2]
    cdef Py_ssize_t k, i, j
    cdef double total = 0.0
    cdef double acc
    out = np.zeros(c, dtype=np.float32)
    cdef float[::1] o = out
    for i in range(h):
        for j in range(w):
            total += weights[i, j]
    if total == 0.0:
        return out
    with nogil:
        for k in prange(c):
            acc = 0.0
            for i in range(h):
                for j in range(w):
                    acc = acc + weights[i, j] * <double> maps[k, i, j]
            o[k] = <float> (acc / total)
    return out


def masked_channel_means(const float[:, :, ::1] maps, const unsigned char[:, :, ::1] masks):
    """Per-channel mean of the entries selected by that channel's own binary
    mask.  Channels with an empty mask yield 0.0."""
    cdef Py_ssize_t c = maps.shape[0]
    cdef Py_ssize_t h = maps.shape[1]
    cdef Py_ssize_t w = maps.shape[2]
    cdef Py_ssize_t k, i, j
    cdef double acc
    cdef long count
    out = np.zeros(c, dtype=np.float32)
    cdef float[::1] o = out
    with nogil:
        for k in prange(c):
            acc = 0.0
            count = 0
            for i in range(h):
                for j in range(w):
                    if masks[k, i, j]:
                        acc = acc + <double> maps[k, i, j]
                        count = count + 1
            if count > 0:
                o[k] = <float> (acc / count)
    return out
