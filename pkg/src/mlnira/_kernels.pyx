# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled single-site Metropolis-Hastings chain for {0,1} Ising models."""

from libc.math cimport exp
from libc.stdint cimport int64_t


cdef inline bint _step(const double[:, ::1] W, const double[::1] theta, double beta,
                       unsigned char[::1] s, Py_ssize_t k, double u) noexcept nogil:
    cdef Py_ssize_t j
    cdef Py_ssize_t m = s.shape[0]
    cdef double field = theta[k]
    cdef double dh
    for j in range(m):
        if s[j]:
            field += W[k, j]
    dh = (2.0 * s[k] - 1.0) * field
    if dh <= 0.0 or u <= exp(-beta * dh):
        s[k] = 1 - s[k]
        return True
    return False


def sweep(const double[:, ::1] W, const double[::1] theta, double beta,
          unsigned char[::1] s, const int64_t[::1] ks, const double[::1] us):
    """Run ``len(ks)`` single-site steps in place; return the accepted count."""
    cdef Py_ssize_t i, n = ks.shape[0]
    cdef Py_ssize_t accepted = 0
    with nogil:
        for i in range(n):
            accepted += _step(W, theta, beta, s, ks[i], us[i])
    return accepted


def record(const double[:, ::1] W, const double[::1] theta, double beta,
           unsigned char[::1] s, const int64_t[::1] ks, const double[::1] us,
           Py_ssize_t thin, unsigned char[:, ::1] out):
    """Fill each row of ``out`` with the state after ``thin`` more steps."""
    cdef Py_ssize_t r, t, j, idx = 0
    cdef Py_ssize_t rows = out.shape[0], m = s.shape[0]
    if ks.shape[0] != rows * thin or us.shape[0] != rows * thin:
        raise ValueError("need exactly rows * thin draws")
    with nogil:
        for r in range(rows):
            for t in range(thin):
                _step(W, theta, beta, s, ks[idx], us[idx])
                idx += 1
            for j in range(m):
                out[r, j] = s[j]
