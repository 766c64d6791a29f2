# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled matching kernels.

Twin of ``_matchpy``: same algorithm, same uniform consumption, bit-
identical outputs. See that module for the interface contract.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _bisect_left(const double[::1] a, double v, Py_ssize_t lo, Py_ssize_t hi) nogil:
    cdef Py_ssize_t mid
    while lo < hi:
        mid = (lo + hi) // 2
        if a[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def nn_match_counts(const double[::1] lp_sorted, const double[::1] lp_treated,
                    const long long[::1] lo, const long long[::1] hi, int ratio):
    cdef Py_ssize_t nc = lp_sorted.shape[0]
    cdef Py_ssize_t nt = lp_treated.shape[0]
    counts_arr = np.zeros(nc, dtype=np.int64)
    pruned_arr = np.zeros(nt, dtype=bool)
    cdef long long[::1] counts = counts_arr
    cdef cnp.uint8_t[::1] pruned = pruned_arr.view(np.uint8)

    cdef Py_ssize_t j, m, left, right, window_lo, window_hi
    cdef int s
    cdef double lp_t, dl, dr
    with nogil:
        for j in range(nt):
            window_lo = lo[j]
            window_hi = hi[j]
            if window_hi - window_lo < ratio:
                pruned[j] = 1
                continue
            lp_t = lp_treated[j]
            m = _bisect_left(lp_sorted, lp_t, 0, nc)
            left = m - 1
            right = m
            for s in range(ratio):
                if left < window_lo:
                    counts[right] += 1
                    right += 1
                elif right >= window_hi:
                    counts[left] += 1
                    left -= 1
                else:
                    dl = lp_t - lp_sorted[left]
                    dr = lp_sorted[right] - lp_t
                    if dl <= dr:
                        counts[left] += 1
                        left -= 1
                    else:
                        counts[right] += 1
                        right += 1
    return counts_arr, pruned_arr


def random_match_counts(Py_ssize_t nc, const long long[::1] lo, const long long[::1] hi,
                        int ratio, const double[:, ::1] uniforms):
    cdef Py_ssize_t nt = lo.shape[0]
    counts_arr = np.zeros(nc, dtype=np.int64)
    pruned_arr = np.zeros(nt, dtype=bool)
    cdef long long[::1] counts = counts_arr
    cdef cnp.uint8_t[::1] pruned = pruned_arr.view(np.uint8)

    # sparse partial Fisher-Yates: at most `ratio` overrides live at a time
    over_keys_arr = np.empty(ratio, dtype=np.int64)
    over_vals_arr = np.empty(ratio, dtype=np.int64)
    cdef long long[::1] over_keys = over_keys_arr
    cdef long long[::1] over_vals = over_vals_arr

    cdef Py_ssize_t j, window_lo, m
    cdef int s, q, n_over
    cdef long long span, idx, value, last
    cdef bint found
    with nogil:
        for j in range(nt):
            window_lo = lo[j]
            m = hi[j] - window_lo
            if m < ratio:
                pruned[j] = 1
                continue
            n_over = 0
            for s in range(ratio):
                span = m - s
                idx = <long long>(uniforms[j, s] * span)
                if idx >= span:
                    idx = span - 1
                value = idx
                last = span - 1
                for q in range(n_over):
                    if over_keys[q] == idx:
                        value = over_vals[q]
                    if over_keys[q] == span - 1:
                        last = over_vals[q]
                found = False
                for q in range(n_over):
                    if over_keys[q] == idx:
                        over_vals[q] = last
                        found = True
                        break
                if not found:
                    over_keys[n_over] = idx
                    over_vals[n_over] = last
                    n_over += 1
                counts[window_lo + value] += 1
    return counts_arr, pruned_arr
