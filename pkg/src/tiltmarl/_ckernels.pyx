# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled per-step radio kernels.

Same signatures and semantics as ``_kernels_np``; loops are fused so each
UE x cell link is touched once per pass.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log10, INFINITY

cnp.import_array()

# 10 ** (x / 10) == exp(x * DB_TO_LN)
cdef double DB_TO_LN = 0.23025850929940458

BACKEND = "cython"


def link_rsrp(const double[:, ::1] elevation, const double[:, ::1] horiz_att,
              const double[:, ::1] path_loss, const double[::1] total_tilt,
              double eirp_re_dbm, double g_max, double a_max,
              double v_beamwidth, double v_floor):
    cdef Py_ssize_t n_ue = elevation.shape[0], n_cell = elevation.shape[1]
    cdef Py_ssize_t u, c
    cdef double theta, a_v, att
    out = np.empty((n_ue, n_cell), dtype=np.float64)
    cdef double[:, ::1] rsrp = out
    with nogil:
        for u in range(n_ue):
            for c in range(n_cell):
                theta = (elevation[u, c] - total_tilt[c]) / v_beamwidth
                a_v = 12.0 * theta * theta
                if a_v > v_floor:
                    a_v = v_floor
                att = a_v - horiz_att[u, c]
                if att > a_max:
                    att = a_max
                rsrp[u, c] = eirp_re_dbm + (g_max - att) - path_loss[u, c]
    return out


def serve(const double[:, ::1] rsrp, double noise_mw):
    cdef Py_ssize_t n_ue = rsrp.shape[0], n_cell = rsrp.shape[1]
    cdef Py_ssize_t u, c, arg
    cdef double best, second, v, total, signal
    serving_arr = np.empty(n_ue, dtype=np.int64)
    sinr_arr = np.empty(n_ue, dtype=np.float64)
    best_arr = np.empty(n_ue, dtype=np.float64)
    second_arr = np.empty(n_ue, dtype=np.float64)
    cdef long long[::1] serving = serving_arr
    cdef double[::1] sinr = sinr_arr
    cdef double[::1] best_out = best_arr
    cdef double[::1] second_out = second_arr
    with nogil:
        for u in range(n_ue):
            arg = 0
            best = rsrp[u, 0]
            second = -INFINITY
            for c in range(1, n_cell):
                v = rsrp[u, c]
                if v > best:
                    second = best
                    best = v
                    arg = c
                elif v > second:
                    second = v
            total = 0.0
            for c in range(n_cell):
                if c != arg:
                    total = total + exp(rsrp[u, c] * DB_TO_LN)
            signal = exp(best * DB_TO_LN)
            serving[u] = arg
            sinr[u] = 10.0 * log10(signal / (total + noise_mw))
            best_out[u] = best
            second_out[u] = second
    return serving_arr, sinr_arr, best_arr, second_arr


def window_counts(const double[:, ::1] rsrp, const long long[::1] serving,
                  const double[::1] best, double window_db):
    cdef Py_ssize_t n_ue = rsrp.shape[0], n_cell = rsrp.shape[1]
    cdef Py_ssize_t u, c, s
    cdef double floor_
    cdef long long k
    overlap_arr = np.zeros((n_cell, n_cell), dtype=np.int64)
    count_arr = np.zeros(n_ue, dtype=np.int64)
    cdef long long[:, ::1] overlap = overlap_arr
    cdef long long[::1] count = count_arr
    with nogil:
        for u in range(n_ue):
            s = serving[u]
            floor_ = best[u] - window_db
            k = 0
            for c in range(n_cell):
                if c != s and rsrp[u, c] >= floor_:
                    overlap[s, c] += 1
                    k += 1
            count[u] = k
    return overlap_arr, count_arr


def share_resources(const long long[::1] serving, const double[::1] need, Py_ssize_t n_cell):
    cdef Py_ssize_t n_ue = need.shape[0]
    cdef Py_ssize_t i, g0, g1, c
    order_arr = np.lexsort((np.asarray(need), np.asarray(serving)))
    cdef long long[::1] order = order_arr.astype(np.int64)
    alloc_arr = np.empty(n_ue, dtype=np.float64)
    sat_arr = np.zeros(n_ue, dtype=np.uint8)
    cdef double[::1] alloc = alloc_arr
    cdef unsigned char[::1] sat = sat_arr
    cdef double used, level, x
    with nogil:
        g0 = 0
        while g0 < n_ue:
            c = serving[order[g0]]
            g1 = g0
            while g1 < n_ue and serving[order[g1]] == c:
                g1 += 1
            used = 0.0
            level = -1.0
            for i in range(g0, g1):
                x = need[order[i]]
                if level < 0.0 and x <= (1.0 - used) / (g1 - i):
                    alloc[order[i]] = x
                    sat[order[i]] = 1
                    used = used + x
                else:
                    if level < 0.0:
                        level = (1.0 - used) / (g1 - i)
                    alloc[order[i]] = level
            g0 = g1
    return alloc_arr, sat_arr.astype(bool)
