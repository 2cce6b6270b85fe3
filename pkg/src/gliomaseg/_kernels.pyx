# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled flood-fill and 4-connected labeling kernels."""

import numpy as np
cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()


def flood_fill(const double[:, ::1] gray, Py_ssize_t seed_row, Py_ssize_t seed_col, double tolerance):
    cdef Py_ssize_t h = gray.shape[0], w = gray.shape[1]
    out_arr = np.zeros((h, w), dtype=np.uint8)
    cdef cnp.uint8_t[:, ::1] out = out_arr
    cdef cnp.intp_t[::1] stack = np.empty(h * w, dtype=np.intp)
    cdef Py_ssize_t top = 0, idx, r, c
    cdef double seed = gray[seed_row, seed_col]

    with nogil:
        out[seed_row, seed_col] = 1
        stack[0] = seed_row * w + seed_col
        top = 1
        while top > 0:
            top -= 1
            idx = stack[top]
            r = idx // w
            c = idx - r * w
            if r > 0 and not out[r - 1, c] and fabs(gray[r - 1, c] - seed) <= tolerance:
                out[r - 1, c] = 1
                stack[top] = idx - w
                top += 1
            if r < h - 1 and not out[r + 1, c] and fabs(gray[r + 1, c] - seed) <= tolerance:
                out[r + 1, c] = 1
                stack[top] = idx + w
                top += 1
            if c > 0 and not out[r, c - 1] and fabs(gray[r, c - 1] - seed) <= tolerance:
                out[r, c - 1] = 1
                stack[top] = idx - 1
                top += 1
            if c < w - 1 and not out[r, c + 1] and fabs(gray[r, c + 1] - seed) <= tolerance:
                out[r, c + 1] = 1
                stack[top] = idx + 1
                top += 1
    return out_arr


def label_components(const cnp.uint8_t[:, ::1] mask):
    cdef Py_ssize_t h = mask.shape[0], w = mask.shape[1]
    labels_arr = np.zeros((h, w), dtype=np.int32)
    cdef cnp.int32_t[:, ::1] labels = labels_arr
    cdef cnp.intp_t[::1] stack = np.empty(max(h * w, 1), dtype=np.intp)
    cdef Py_ssize_t top, idx, r, c, r0, c0
    cdef cnp.int32_t n = 0

    with nogil:
        for r0 in range(h):
            for c0 in range(w):
                if not mask[r0, c0] or labels[r0, c0]:
                    continue
                n += 1
                labels[r0, c0] = n
                stack[0] = r0 * w + c0
                top = 1
                while top > 0:
                    top -= 1
                    idx = stack[top]
                    r = idx // w
                    c = idx - r * w
                    if r > 0 and mask[r - 1, c] and not labels[r - 1, c]:
                        labels[r - 1, c] = n
                        stack[top] = idx - w
                        top += 1
                    if r < h - 1 and mask[r + 1, c] and not labels[r + 1, c]:
                        labels[r + 1, c] = n
                        stack[top] = idx + w
                        top += 1
                    if c > 0 and mask[r, c - 1] and not labels[r, c - 1]:
                        labels[r, c - 1] = n
                        stack[top] = idx - 1
                        top += 1
                    if c < w - 1 and mask[r, c + 1] and not labels[r, c + 1]:
                        labels[r, c + 1] = n
                        stack[top] = idx + 1
                        top += 1
    return labels_arr, int(n)
