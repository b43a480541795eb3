# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled scan for the best axis-aligned split of a regression-tree node.

Mirrors the NumPy fallback in ``_split.py``: identical candidate set,
identical left-to-right accumulation order, identical first-maximum tie
break, so the two backends grow identical trees.
"""

from libc.math cimport INFINITY

import numpy as np

cimport numpy as cnp


def scan_split(
    const double[::1] x_sorted,
    const double[::1] y,
    const cnp.intp_t[::1] order,
    const unsigned char[::1] in_node,
    Py_ssize_t n_node,
    Py_ssize_t min_leaf,
):
    """Best split of one node along one presorted feature.

    ``x_sorted`` holds the full column in ascending order, ``order`` the
    matching row indices, ``in_node`` a per-row membership mask and
    ``n_node`` the number of member rows. Returns
    ``(score, n_left, x_lo, x_hi)`` where ``score`` is the maximal
    sum_left^2/n_left + sum_right^2/n_right over admissible boundaries
    (both children >= min_leaf, boundary values distinct), and
    ``(x_lo, x_hi)`` bound the winning boundary. ``score`` is -inf and
    ``n_left`` is -1 when no admissible split exists.
    """
    cdef Py_ssize_t n_total = x_sorted.shape[0]
    cdef Py_ssize_t i, r, j
    cdef double total = 0.0
    cdef double sl, sr, score, xv, prev_x
    cdef double best = -INFINITY
    cdef Py_ssize_t best_nl = -1
    cdef double best_lo = 0.0, best_hi = 0.0

    if n_node < 2 * min_leaf:
        return -INFINITY, -1, 0.0, 0.0

    for i in range(n_total):
        r = order[i]
        if in_node[r]:
            total += y[r]

    sl = 0.0
    j = 0
    prev_x = 0.0
    for i in range(n_total):
        r = order[i]
        if not in_node[r]:
            continue
        xv = x_sorted[i]
        if j >= min_leaf and j <= n_node - min_leaf and xv != prev_x:
            sr = total - sl
            score = sl * sl / j + sr * sr / (n_node - j)
            if score > best:
                best = score
                best_nl = j
                best_lo = prev_x
                best_hi = xv
        sl += y[r]
        j += 1
        prev_x = xv

    return best, best_nl, best_lo, best_hi
