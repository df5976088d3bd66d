# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: running median and format-212 packing."""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def median_filter(x, Py_ssize_t window):
    """Centered running median with half-sample symmetric padding.

    Keeps a sorted copy of the current window and replaces the outgoing
    value with the incoming one, so each step costs O(window) moves.
    Requires ``window // 2 < len(x)``.
    """
    cdef double[::1] xs = np.ascontiguousarray(x, dtype=np.float64)
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t half = window // 2
    cdef Py_ssize_t i, j, k, lo, hi, mid
    cdef double old, new

    padded_arr = np.empty(n + 2 * half, dtype=np.float64)
    cdef double[::1] padded = padded_arr
    for i in range(n):
        padded[half + i] = xs[i]
    for j in range(1, half + 1):
        padded[half - j] = xs[j - 1]
        padded[half + n - 1 + j] = xs[n - j]

    win_arr = np.sort(padded_arr[:window])
    cdef double[::1] win = win_arr
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    out[0] = win[half]

    for i in range(1, n):
        old = padded[i - 1]
        new = padded[i + window - 1]
        lo = 0
        hi = window
        while lo < hi:
            mid = (lo + hi) >> 1
            if win[mid] < old:
                lo = mid + 1
            else:
                hi = mid
        k = lo
        if new > old:
            while k + 1 < window and win[k + 1] < new:
                win[k] = win[k + 1]
                k += 1
        else:
            while k > 0 and win[k - 1] > new:
                win[k] = win[k - 1]
                k -= 1
        win[k] = new
        out[i] = win[half]
    return out_arr


def decode_212(buf, Py_ssize_t n_samples):
    cdef const unsigned char[::1] b = np.frombuffer(buf, dtype=np.uint8)
    s0_arr = np.empty(n_samples, dtype=np.int16)
    s1_arr = np.empty(n_samples, dtype=np.int16)
    cdef short[::1] s0 = s0_arr
    cdef short[::1] s1 = s1_arr
    cdef Py_ssize_t i
    cdef int v0, v1, mid
    for i in range(n_samples):
        mid = b[3 * i + 1]
        v0 = b[3 * i] | ((mid & 0x0F) << 8)
        v1 = b[3 * i + 2] | ((mid & 0xF0) << 4)
        if v0 > 2047:
            v0 -= 4096
        if v1 > 2047:
            v1 -= 4096
        s0[i] = <short>v0
        s1[i] = <short>v1
    return s0_arr, s1_arr


def encode_212(ch0, ch1):
    cdef long long[::1] a = np.ascontiguousarray(ch0, dtype=np.int64)
    cdef long long[::1] c = np.ascontiguousarray(ch1, dtype=np.int64)
    cdef Py_ssize_t n = a.shape[0]
    out_arr = np.empty(3 * n, dtype=np.uint8)
    cdef unsigned char[::1] out = out_arr
    cdef Py_ssize_t i
    cdef long long v0, v1
    for i in range(n):
        v0 = a[i] & 0xFFF
        v1 = c[i] & 0xFFF
        out[3 * i] = <unsigned char>(v0 & 0xFF)
        out[3 * i + 1] = <unsigned char>(((v0 >> 8) & 0x0F) | ((v1 >> 4) & 0xF0))
        out[3 * i + 2] = <unsigned char>(v1 & 0xFF)
    return out_arr.tobytes()
