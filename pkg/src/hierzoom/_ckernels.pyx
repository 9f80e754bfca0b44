# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; drop-in replacements for ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def im2col(const double[:, :, :, ::1] xpad, Py_ssize_t k, Py_ssize_t stride,
           Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t n = xpad.shape[0], c = xpad.shape[1]
    cdef Py_ssize_t b, oy, ox, ch, i, j, row, col
    out_arr = np.empty((n * out_h * out_w, c * k * k))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for b in range(n):
            for oy in range(out_h):
                for ox in range(out_w):
                    row = (b * out_h + oy) * out_w + ox
                    col = 0
                    for ch in range(c):
                        for i in range(k):
                            for j in range(k):
                                out[row, col] = xpad[b, ch, oy * stride + i, ox * stride + j]
                                col = col + 1
    return out_arr


def col2im(const double[:, ::1] cols, Py_ssize_t n, Py_ssize_t c, Py_ssize_t hp,
           Py_ssize_t wp, Py_ssize_t k, Py_ssize_t stride, Py_ssize_t out_h,
           Py_ssize_t out_w):
    cdef Py_ssize_t b, oy, ox, ch, i, j, row, col
    out_arr = np.zeros((n, c, hp, wp))
    cdef double[:, :, :, ::1] out = out_arr
    with nogil:
        for b in range(n):
            for ch in range(c):
                for i in range(k):
                    for j in range(k):
                        col = (ch * k + i) * k + j
                        for oy in range(out_h):
                            for ox in range(out_w):
                                row = (b * out_h + oy) * out_w + ox
                                out[b, ch, oy * stride + i, ox * stride + j] += cols[row, col]
    return out_arr


def maxpool_forward(const double[:, :, :, ::1] x, Py_ssize_t w):
    cdef Py_ssize_t n = x.shape[0], c = x.shape[1]
    cdef Py_ssize_t oh = x.shape[2] // w, ow = x.shape[3] // w
    cdef Py_ssize_t b, ch, oy, ox, i, j, best_idx
    cdef double best, v
    out_arr = np.empty((n, c, oh, ow))
    arg_arr = np.empty((n, c, oh, ow), dtype=np.int64)
    cdef double[:, :, :, ::1] out = out_arr
    cdef cnp.int64_t[:, :, :, ::1] arg = arg_arr
    with nogil:
        for b in range(n):
            for ch in range(c):
                for oy in range(oh):
                    for ox in range(ow):
                        best = x[b, ch, oy * w, ox * w]
                        best_idx = 0
                        for i in range(w):
                            for j in range(w):
                                v = x[b, ch, oy * w + i, ox * w + j]
                                if v > best:
                                    best = v
                                    best_idx = i * w + j
                        out[b, ch, oy, ox] = best
                        arg[b, ch, oy, ox] = best_idx
    return out_arr, arg_arr


def maxpool_backward(const double[:, :, :, ::1] g, const cnp.int64_t[:, :, :, ::1] arg,
                     Py_ssize_t w):
    cdef Py_ssize_t n = g.shape[0], c = g.shape[1], oh = g.shape[2], ow = g.shape[3]
    cdef Py_ssize_t b, ch, oy, ox, idx
    out_arr = np.zeros((n, c, oh * w, ow * w))
    cdef double[:, :, :, ::1] out = out_arr
    with nogil:
        for b in range(n):
            for ch in range(c):
                for oy in range(oh):
                    for ox in range(ow):
                        idx = arg[b, ch, oy, ox]
                        out[b, ch, oy * w + idx // w, ox * w + idx % w] = g[b, ch, oy, ox]
    return out_arr


cdef inline void _axis(Py_ssize_t n_in, Py_ssize_t n_out, Py_ssize_t[::1] lo,
                       Py_ssize_t[::1] hi, double[::1] frac) noexcept nogil:
    cdef Py_ssize_t t
    cdef double scale = <double>n_in / <double>n_out
    cdef double src
    for t in range(n_out):
        src = (t + 0.5) * scale - 0.5
        if src < 0.0:
            src = 0.0
        if src > n_in - 1:
            src = n_in - 1
        lo[t] = <Py_ssize_t>floor(src)
        hi[t] = lo[t] + 1 if lo[t] + 1 < n_in else n_in - 1
        frac[t] = src - lo[t]


def resize_bilinear(const double[:, ::1] img, Py_ssize_t out_h, Py_ssize_t out_w):
    cdef Py_ssize_t in_h = img.shape[0], in_w = img.shape[1]
    cdef Py_ssize_t y, x
    cdef double a, b, c, d, upper, lower, v
    cdef double vmin = img[0, 0], vmax = img[0, 0]
    y0 = np.empty(out_h, dtype=np.intp)
    y1 = np.empty(out_h, dtype=np.intp)
    fy = np.empty(out_h)
    x0 = np.empty(out_w, dtype=np.intp)
    x1 = np.empty(out_w, dtype=np.intp)
    fx = np.empty(out_w)
    cdef Py_ssize_t[::1] vy0 = y0, vy1 = y1, vx0 = x0, vx1 = x1
    cdef double[::1] vfy = fy, vfx = fx
    out_arr = np.empty((out_h, out_w))
    cdef double[:, ::1] out = out_arr
    with nogil:
        for y in range(in_h):
            for x in range(in_w):
                v = img[y, x]
                if v < vmin:
                    vmin = v
                if v > vmax:
                    vmax = v
        _axis(in_h, out_h, vy0, vy1, vfy)
        _axis(in_w, out_w, vx0, vx1, vfx)
        for y in range(out_h):
            for x in range(out_w):
                a = img[vy0[y], vx0[x]]
                b = img[vy0[y], vx1[x]]
                c = img[vy1[y], vx0[x]]
                d = img[vy1[y], vx1[x]]
                upper = a + vfx[x] * (b - a)
                lower = c + vfx[x] * (d - c)
                v = upper + vfy[y] * (lower - upper)
                if v < vmin:
                    v = vmin
                if v > vmax:
                    v = vmax
                out[y, x] = v
    return out_arr
