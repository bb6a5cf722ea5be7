# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled term arithmetic on sparse Grassmann coefficients.

Same contract as pykernel: parallel (uint32 keys, float64 vals) arrays with
strictly increasing keys and no stored zeros.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


cdef extern from *:
    int __builtin_popcount(unsigned int x) nogil
    int __builtin_ctz(unsigned int x) nogil


cdef inline int _merge_sign_c(unsigned int a, unsigned int b) nogil:
    cdef int inv = 0
    cdef unsigned int bb = b
    cdef int j
    while bb:
        j = __builtin_ctz(bb)
        inv += __builtin_popcount(a >> (j + 1))
        bb &= bb - 1
    return -1 if inv & 1 else 1


def merge_sign(unsigned int a, unsigned int b):
    return _merge_sign_c(a, b)


cdef inline Py_ssize_t _find(unsigned int* keys, Py_ssize_t n, unsigned int k) nogil:
    # lower-bound binary search
    cdef Py_ssize_t lo = 0, hi = n, mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if keys[mid] < k:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef _pack(unsigned int* keys, double* vals, Py_ssize_t n):
    cdef Py_ssize_t m = 0, i
    for i in range(n):
        if vals[i] != 0.0:
            m += 1
    out_k = np.empty(m, dtype=np.uint32)
    out_v = np.empty(m, dtype=np.float64)
    cdef unsigned int[::1] mk = out_k
    cdef double[::1] mv = out_v
    cdef Py_ssize_t j = 0
    for i in range(n):
        if vals[i] != 0.0:
            mk[j] = keys[i]
            mv[j] = vals[i]
            j += 1
    return out_k, out_v


def mul_terms(cnp.ndarray[cnp.uint32_t, ndim=1] ka,
              cnp.ndarray[cnp.float64_t, ndim=1] va,
              cnp.ndarray[cnp.uint32_t, ndim=1] kb,
              cnp.ndarray[cnp.float64_t, ndim=1] vb):
    cdef Py_ssize_t na = ka.shape[0], nb = kb.shape[0]
    if na == 0 or nb == 0:
        return np.empty(0, dtype=np.uint32), np.empty(0, dtype=np.float64)
    cdef Py_ssize_t cap = na * nb
    buf_k = np.empty(cap, dtype=np.uint32)
    buf_v = np.empty(cap, dtype=np.float64)
    cdef unsigned int[::1] bk = buf_k
    cdef double[::1] bv = buf_v
    cdef Py_ssize_t n = 0, i, j, pos, t
    cdef unsigned int a, b, k
    cdef double x, term
    for i in range(na):
        a = ka[i]
        x = va[i]
        for j in range(nb):
            b = kb[j]
            if a & b:
                continue
            k = a | b
            term = x * vb[j]
            if _merge_sign_c(a, b) < 0:
                term = -term
            pos = _find(&bk[0], n, k)
            if pos < n and bk[pos] == k:
                bv[pos] += term
            else:
                t = n
                while t > pos:
                    bk[t] = bk[t - 1]
                    bv[t] = bv[t - 1]
                    t -= 1
                bk[pos] = k
                bv[pos] = term
                n += 1
    return _pack(&bk[0], &bv[0], n)


def add_terms(cnp.ndarray[cnp.uint32_t, ndim=1] ka,
              cnp.ndarray[cnp.float64_t, ndim=1] va,
              cnp.ndarray[cnp.uint32_t, ndim=1] kb,
              cnp.ndarray[cnp.float64_t, ndim=1] vb):
    cdef Py_ssize_t na = ka.shape[0], nb = kb.shape[0]
    buf_k = np.empty(na + nb, dtype=np.uint32)
    buf_v = np.empty(na + nb, dtype=np.float64)
    cdef unsigned int[::1] bk = buf_k
    cdef double[::1] bv = buf_v
    cdef Py_ssize_t i = 0, j = 0, n = 0
    # merge of two sorted key lists
    while i < na and j < nb:
        if ka[i] < kb[j]:
            bk[n] = ka[i]; bv[n] = va[i]; i += 1; n += 1
        elif kb[j] < ka[i]:
            bk[n] = kb[j]; bv[n] = vb[j]; j += 1; n += 1
        else:
            bk[n] = ka[i]; bv[n] = va[i] + vb[j]; i += 1; j += 1; n += 1
    while i < na:
        bk[n] = ka[i]; bv[n] = va[i]; i += 1; n += 1
    while j < nb:
        bk[n] = kb[j]; bv[n] = vb[j]; j += 1; n += 1
    if n == 0:
        return np.empty(0, dtype=np.uint32), np.empty(0, dtype=np.float64)
    return _pack(&bk[0], &bv[0], n)


def scale_terms(cnp.ndarray[cnp.uint32_t, ndim=1] ka,
                cnp.ndarray[cnp.float64_t, ndim=1] va,
                double c):
    if c == 0.0 or ka.shape[0] == 0:
        return np.empty(0, dtype=np.uint32), np.empty(0, dtype=np.float64)
    return ka.copy(), va * c


def lderiv_terms(cnp.ndarray[cnp.uint32_t, ndim=1] ka,
                 cnp.ndarray[cnp.float64_t, ndim=1] va,
                 int alpha):
    cdef unsigned int bit = 1u << (alpha - 1)
    cdef unsigned int below = bit - 1
    cdef Py_ssize_t na = ka.shape[0], i, n = 0
    buf_k = np.empty(na, dtype=np.uint32)
    buf_v = np.empty(na, dtype=np.float64)
    cdef unsigned int[::1] bk = buf_k
    cdef double[::1] bv = buf_v
    cdef double v
    # keys with the bit cleared stay sorted relative to each other
    for i in range(na):
        if not (ka[i] & bit):
            continue
        v = va[i]
        if __builtin_popcount(ka[i] & below) & 1:
            v = -v
        bk[n] = ka[i] ^ bit
        bv[n] = v
        n += 1
    if n == 0:
        return np.empty(0, dtype=np.uint32), np.empty(0, dtype=np.float64)
    return _pack(&bk[0], &bv[0], n)
