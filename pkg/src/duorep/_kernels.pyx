# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled scoring kernels: max-sim over token ranges and PQ table scans.

Contracts mirror ``_kernels_py``; accumulation is float64 in both backends.
Batched max-sim goes through BLAS dgemm per candidate, dropping the
per-candidate Python dispatch overhead of the fallback path.
"""

import numpy as np

from libc.math cimport INFINITY
from scipy.linalg.cython_blas cimport dgemm

BACKEND_NAME = "native"


cdef double _maxsim_loop(const float[:, ::1] q, const float[:, ::1] tokens,
                         Py_ssize_t start, Py_ssize_t end) nogil:
    cdef Py_ssize_t i, j, t
    cdef double s, best, total = 0.0
    for i in range(q.shape[0]):
        best = -INFINITY
        for j in range(start, end):
            s = 0.0
            for t in range(q.shape[1]):
                s += <double> q[i, t] * <double> tokens[j, t]
            if s > best:
                best = s
        total += best
    return total


def maxsim(Q, D):
    """Sum over query rows of the max dot product against any document row."""
    cdef const float[:, ::1] q = np.ascontiguousarray(Q, dtype=np.float32)
    cdef const float[:, ::1] d = np.ascontiguousarray(D, dtype=np.float32)
    if q.shape[1] != d.shape[1]:
        raise ValueError(f"dim mismatch: query {q.shape[1]} vs document {d.shape[1]}")
    if d.shape[0] == 0:
        raise ValueError("document matrix has no rows")
    cdef double score
    with nogil:
        score = _maxsim_loop(q, d, 0, d.shape[0])
    return score


def maxsim_batch(Q, tokens, offsets, ordinals):
    """Max-sim scores of Q against each candidate's token rows (see _kernels_py)."""
    cdef double[:, ::1] q64 = np.ascontiguousarray(Q, dtype=np.float64)
    cdef const float[:, ::1] toks = np.ascontiguousarray(tokens, dtype=np.float32)
    cdef const long long[::1] offs = np.ascontiguousarray(offsets, dtype=np.int64)
    cdef const long long[::1] ords = np.ascontiguousarray(ordinals, dtype=np.int64)
    if q64.shape[1] != toks.shape[1]:
        raise ValueError(f"dim mismatch: query {q64.shape[1]} vs tokens {toks.shape[1]}")
    cdef Py_ssize_t n_cand = ords.shape[0]
    cdef Py_ssize_t q_len = q64.shape[0]
    cdef Py_ssize_t dim = q64.shape[1]
    out = np.empty(n_cand, dtype=np.float64)
    cdef double[::1] out_view = out
    if n_cand == 0:
        return out

    cdef Py_ssize_t i, p, length, max_len = 0
    for i in range(n_cand):
        p = <Py_ssize_t> ords[i]
        length = <Py_ssize_t> (offs[p + 1] - offs[p])
        if length <= 0:
            raise ValueError(f"passage ordinal {p} has an empty token range")
        if length > max_len:
            max_len = length
    if q_len == 0:
        out[:] = 0.0
        return out

    # reusable float64 workspaces: candidate rows and the dgemm result
    cdef double[:, ::1] work_d = np.empty((max_len, dim), dtype=np.float64)
    cdef double[::1] work_s = np.empty(max_len * q_len, dtype=np.float64)
    cdef char trans_t = b"T"[0]
    cdef char trans_n = b"N"[0]
    cdef int m_i, n_i, k_i, lda, ldb, ldc
    cdef double one = 1.0, zero = 0.0, best, val, total
    cdef Py_ssize_t start, r, t, j, base
    with nogil:
        for i in range(n_cand):
            p = <Py_ssize_t> ords[i]
            start = <Py_ssize_t> offs[p]
            length = <Py_ssize_t> (offs[p + 1] - offs[p])
            for r in range(length):
                for t in range(dim):
                    work_d[r, t] = <double> toks[start + r, t]
            # row-major S[q, d] seen by BLAS as column-major S^T = D @ Q^T
            m_i = <int> length
            n_i = <int> q_len
            k_i = <int> dim
            lda = <int> dim
            ldb = <int> dim
            ldc = <int> length
            dgemm(&trans_t, &trans_n, &m_i, &n_i, &k_i, &one,
                  &work_d[0, 0], &lda, &q64[0, 0], &ldb, &zero, &work_s[0], &ldc)
            total = 0.0
            for j in range(q_len):
                base = j * length
                best = -INFINITY
                for r in range(length):
                    val = work_s[base + r]
                    if val > best:
                        best = val
                total += best
            out_view[i] = total
    return out


def adc_scores(lut, codes, double base):
    """Asymmetric-distance scores: base + sum of per-subspace table lookups."""
    cdef const double[:, ::1] l = np.ascontiguousarray(lut, dtype=np.float64)
    cdef const unsigned char[:, ::1] c = np.ascontiguousarray(codes, dtype=np.uint8)
    if c.ndim != 2 or c.shape[1] != l.shape[0]:
        raise ValueError(f"codes shape incompatible with {l.shape[0]} subspaces")
    out = np.empty(c.shape[0], dtype=np.float64)
    cdef double[::1] out_view = out
    cdef Py_ssize_t i, j
    cdef Py_ssize_t n = c.shape[0]
    cdef Py_ssize_t m = c.shape[1]
    cdef double s
    with nogil:
        for i in range(n):
            s = base
            for j in range(m):
                s += l[j, c[i, j]]
            out_view[i] = s
    return out
