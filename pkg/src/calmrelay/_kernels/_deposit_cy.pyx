# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of _deposit.deposit_gaussian.

Must stay op-for-op identical to the pure-python reference so both backends
produce bit-identical grids (same arithmetic order, libm exp, no FMA).
"""

from libc.math cimport ceil, exp, floor


def deposit_gaussian(double[::1] cells, Py_ssize_t grid_w, Py_ssize_t grid_h,
                     double[::1] xs, double[::1] ys, double[::1] ws,
                     double bandwidth):
    cdef double radius = 3.0 * bandwidth
    cdef double r2 = radius * radius
    cdef double inv2h2 = 1.0 / (2.0 * bandwidth * bandwidth)
    cdef double px = 1.0 / grid_w
    cdef double py = 1.0 / grid_h
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t k, i, j, i0, i1, j0, j1, ci, cj
    cdef double x, y, w, s, scale, dx, dy, dy2, d2

    for k in range(n):
        x = xs[k]
        y = ys[k]
        w = ws[k]
        i0 = <Py_ssize_t>ceil((x - radius) / px - 0.5)
        i1 = <Py_ssize_t>floor((x + radius) / px - 0.5)
        j0 = <Py_ssize_t>ceil((y - radius) / py - 0.5)
        j1 = <Py_ssize_t>floor((y + radius) / py - 0.5)
        if i0 < 0:
            i0 = 0
        if j0 < 0:
            j0 = 0
        if i1 > grid_w - 1:
            i1 = grid_w - 1
        if j1 > grid_h - 1:
            j1 = grid_h - 1
        s = 0.0
        for j in range(j0, j1 + 1):
            dy = (j + 0.5) * py - y
            dy2 = dy * dy
            for i in range(i0, i1 + 1):
                dx = (i + 0.5) * px - x
                d2 = dx * dx + dy2
                if d2 <= r2:
                    s += exp(-d2 * inv2h2)
        if s <= 0.0:
            ci = <Py_ssize_t>(x * grid_w)
            cj = <Py_ssize_t>(y * grid_h)
            if ci < 0:
                ci = 0
            elif ci > grid_w - 1:
                ci = grid_w - 1
            if cj < 0:
                cj = 0
            elif cj > grid_h - 1:
                cj = grid_h - 1
            cells[cj * grid_w + ci] += w
            continue
        scale = w / s
        for j in range(j0, j1 + 1):
            dy = (j + 0.5) * py - y
            dy2 = dy * dy
            for i in range(i0, i1 + 1):
                dx = (i + 0.5) * px - x
                d2 = dx * dx + dy2
                if d2 <= r2:
                    cells[j * grid_w + i] += exp(-d2 * inv2h2) * scale
