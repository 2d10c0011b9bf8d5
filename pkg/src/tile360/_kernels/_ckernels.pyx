# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the loops in ``_pykernels``; identical semantics."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, isinf, INFINITY

cnp.import_array()


def discounted_returns(rewards, double bootstrap_value, double gamma):
    cdef const double[::1] r = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double running = bootstrap_value
    cdef Py_ssize_t t
    for t in range(n - 1, -1, -1):
        running = r[t] + gamma * running
        o[t] = running
    return out


def gae(rewards, values, double bootstrap_value, double gamma, double lam):
    cdef const double[::1] r = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef const double[::1] v = np.ascontiguousarray(values, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef double running = 0.0
    cdef double next_value = bootstrap_value
    cdef double delta
    cdef Py_ssize_t t
    for t in range(n - 1, -1, -1):
        delta = r[t] + gamma * next_value - v[t]
        running = delta + gamma * lam * running
        o[t] = running
        next_value = v[t]
    return out


def download_time(double size_mb, times, rates, double period, double start):
    if size_mb <= 0.0:
        return 0.0
    cdef const double[::1] tm = np.ascontiguousarray(times, dtype=np.float64)
    cdef const double[::1] rt = np.ascontiguousarray(rates, dtype=np.float64)
    cdef Py_ssize_t n = tm.shape[0]
    if isinf(period):
        return size_mb / rt[0]
    cdef double base = floor(start / period) * period
    cdef double clock = start - base
    cdef Py_ssize_t idx = 0
    while idx + 1 < n and tm[idx + 1] <= clock:
        idx += 1
    cdef double remaining = size_mb
    cdef double elapsed = 0.0
    cdef double seg_end, avail
    while True:
        seg_end = tm[idx + 1] if idx + 1 < n else period
        avail = (seg_end - clock) * rt[idx]
        if avail >= remaining:
            return elapsed + remaining / rt[idx]
        remaining -= avail
        elapsed += seg_end - clock
        clock = seg_end
        idx += 1
        if idx >= n:
            idx = 0
            clock = 0.0


def assign_nearest(points, centroids):
    cdef const double[:, ::1] p = np.ascontiguousarray(points, dtype=np.float64)
    cdef const double[:, ::1] c = np.ascontiguousarray(centroids, dtype=np.float64)
    cdef Py_ssize_t n = p.shape[0]
    cdef Py_ssize_t k = c.shape[0]
    out = np.empty(n, dtype=np.int64)
    cdef cnp.int64_t[::1] o = out
    cdef Py_ssize_t i, j, best
    cdef double d, best_dot
    for i in range(n):
        best = 0
        best_dot = -INFINITY
        for j in range(k):
            d = p[i, 0] * c[j, 0] + p[i, 1] * c[j, 1] + p[i, 2] * c[j, 2]
            if d > best_dot:
                best_dot = d
                best = j
        o[i] = best
    return out
