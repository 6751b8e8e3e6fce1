# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled negacyclic ring kernels over Z_q[x]/(x^N + 1), q < 2^63.

Mirrors ``_ringcore_py`` function for function; results must agree bit-exactly.
"""
import numpy as np
from libc.stdint cimport uint64_t

cdef extern from *:
    ctypedef unsigned long long u128 "unsigned __int128"


cdef inline uint64_t _mulmod(uint64_t a, uint64_t b, uint64_t q) noexcept nogil:
    return <uint64_t>((<u128>a * <u128>b) % q)


cdef inline uint64_t _addmod(uint64_t a, uint64_t b, uint64_t q) noexcept nogil:
    cdef uint64_t s = a + b
    if s >= q:
        s -= q
    return s


cdef inline uint64_t _submod(uint64_t a, uint64_t b, uint64_t q) noexcept nogil:
    if a >= b:
        return a - b
    return a + (q - b)


def negacyclic_schoolbook(const uint64_t[::1] a, const uint64_t[::1] b, uint64_t q):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t i, j, k
    cdef uint64_t ai, prod
    out = np.zeros(n, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    with nogil:
        for i in range(n):
            ai = a[i]
            if ai == 0:
                continue
            for j in range(n):
                prod = _mulmod(ai, b[j], q)
                k = i + j
                if k < n:
                    o[k] = _addmod(o[k], prod, q)
                else:
                    o[k - n] = _submod(o[k - n], prod, q)
    return out


def ntt_forward(const uint64_t[::1] a, const uint64_t[::1] psi_rev, uint64_t q):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t t = n, m = 1, i, j, j1
    cdef uint64_t s, u, v
    out = np.array(a, dtype=np.uint64, copy=True)
    cdef uint64_t[::1] f = out
    with nogil:
        while m < n:
            t >>= 1
            for i in range(m):
                j1 = 2 * i * t
                s = psi_rev[m + i]
                for j in range(j1, j1 + t):
                    u = f[j]
                    v = _mulmod(f[j + t], s, q)
                    f[j] = _addmod(u, v, q)
                    f[j + t] = _submod(u, v, q)
            m <<= 1
    return out


def ntt_inverse(const uint64_t[::1] a, const uint64_t[::1] psi_inv_rev, uint64_t n_inv, uint64_t q):
    cdef Py_ssize_t n = a.shape[0]
    cdef Py_ssize_t t = 1, m = n, h, i, j, j1
    cdef uint64_t s, u, v
    out = np.array(a, dtype=np.uint64, copy=True)
    cdef uint64_t[::1] f = out
    with nogil:
        while m > 1:
            h = m >> 1
            j1 = 0
            for i in range(h):
                s = psi_inv_rev[h + i]
                for j in range(j1, j1 + t):
                    u = f[j]
                    v = f[j + t]
                    f[j] = _addmod(u, v, q)
                    f[j + t] = _mulmod(_submod(u, v, q), s, q)
                j1 += 2 * t
            t <<= 1
            m = h
        for j in range(n):
            f[j] = _mulmod(f[j], n_inv, q)
    return out


def pointwise_mul(const uint64_t[::1] a, const uint64_t[::1] b, uint64_t q):
    cdef Py_ssize_t n = a.shape[0], i
    out = np.empty(n, dtype=np.uint64)
    cdef uint64_t[::1] o = out
    with nogil:
        for i in range(n):
            o[i] = _mulmod(a[i], b[i], q)
    return out
