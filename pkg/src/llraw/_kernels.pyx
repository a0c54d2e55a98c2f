# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernel implementations (hot-loop backend).

Signatures match ``llraw._kernels_py`` one for one. Inputs are pre-padded,
C-contiguous float64 arrays; callers own validation and padding. Loops
accumulate in the same tap order as the naive reference, so agreement with
loop oracles is exact up to float64 rounding.
"""

import numpy as np

BACKEND_NAME = "cython"


def conv2d_fwd(double[:, :, ::1] xpad, double[:, :, :, ::1] w, int stride):
    cdef Py_ssize_t ci = xpad.shape[0]
    cdef Py_ssize_t hp = xpad.shape[1]
    cdef Py_ssize_t wp = xpad.shape[2]
    cdef Py_ssize_t co = w.shape[0]
    cdef Py_ssize_t kh = w.shape[2]
    cdef Py_ssize_t kw = w.shape[3]
    cdef Py_ssize_t ho = (hp - kh) // stride + 1
    cdef Py_ssize_t wo = (wp - kw) // stride + 1
    y_arr = np.zeros((co, ho, wo))
    cdef double[:, :, ::1] y = y_arr
    cdef Py_ssize_t o, i, r, c, h, t
    cdef double acc
    with nogil:
        for o in range(co):
            for r in range(ho):
                for c in range(wo):
                    acc = 0.0
                    for i in range(ci):
                        for h in range(kh):
                            for t in range(kw):
                                acc += w[o, i, h, t] * xpad[i, r * stride + h, c * stride + t]
                    y[o, r, c] = acc
    return y_arr


def conv2d_bwd(double[:, :, ::1] xpad, double[:, :, :, ::1] w,
               double[:, :, ::1] dy, int stride):
    cdef Py_ssize_t ci = xpad.shape[0]
    cdef Py_ssize_t co = w.shape[0]
    cdef Py_ssize_t kh = w.shape[2]
    cdef Py_ssize_t kw = w.shape[3]
    cdef Py_ssize_t ho = dy.shape[1]
    cdef Py_ssize_t wo = dy.shape[2]
    dxpad_arr = np.zeros((xpad.shape[0], xpad.shape[1], xpad.shape[2]))
    dw_arr = np.zeros((co, ci, kh, kw))
    cdef double[:, :, ::1] dxpad = dxpad_arr
    cdef double[:, :, :, ::1] dw = dw_arr
    cdef Py_ssize_t o, i, r, c, h, t
    cdef double g
    with nogil:
        for o in range(co):
            for r in range(ho):
                for c in range(wo):
                    g = dy[o, r, c]
                    if g == 0.0:
                        continue
                    for i in range(ci):
                        for h in range(kh):
                            for t in range(kw):
                                dw[o, i, h, t] += g * xpad[i, r * stride + h, c * stride + t]
                                dxpad[i, r * stride + h, c * stride + t] += g * w[o, i, h, t]
    return dxpad_arr, dw_arr


def depthwise_fwd(double[:, :, ::1] xpad, double[:, :, ::1] kern, int stride):
    cdef Py_ssize_t ch = xpad.shape[0]
    cdef Py_ssize_t hp = xpad.shape[1]
    cdef Py_ssize_t wp = xpad.shape[2]
    cdef Py_ssize_t kh = kern.shape[1]
    cdef Py_ssize_t kw = kern.shape[2]
    cdef Py_ssize_t ho = (hp - kh) // stride + 1
    cdef Py_ssize_t wo = (wp - kw) // stride + 1
    y_arr = np.zeros((ch, ho, wo))
    cdef double[:, :, ::1] y = y_arr
    cdef Py_ssize_t i, r, c, h, t
    cdef double acc
    with nogil:
        for i in range(ch):
            for r in range(ho):
                for c in range(wo):
                    acc = 0.0
                    for h in range(kh):
                        for t in range(kw):
                            acc += kern[i, h, t] * xpad[i, r * stride + h, c * stride + t]
                    y[i, r, c] = acc
    return y_arr


def depthwise_bwd(double[:, :, ::1] xpad, double[:, :, ::1] kern,
                  double[:, :, ::1] dy, int stride):
    cdef Py_ssize_t ch = xpad.shape[0]
    cdef Py_ssize_t kh = kern.shape[1]
    cdef Py_ssize_t kw = kern.shape[2]
    cdef Py_ssize_t ho = dy.shape[1]
    cdef Py_ssize_t wo = dy.shape[2]
    dxpad_arr = np.zeros((xpad.shape[0], xpad.shape[1], xpad.shape[2]))
    dkern_arr = np.zeros((ch, kh, kw))
    cdef double[:, :, ::1] dxpad = dxpad_arr
    cdef double[:, :, ::1] dkern = dkern_arr
    cdef Py_ssize_t i, r, c, h, t
    cdef double g
    with nogil:
        for i in range(ch):
            for r in range(ho):
                for c in range(wo):
                    g = dy[i, r, c]
                    if g == 0.0:
                        continue
                    for h in range(kh):
                        for t in range(kw):
                            dkern[i, h, t] += g * xpad[i, r * stride + h, c * stride + t]
                            dxpad[i, r * stride + h, c * stride + t] += g * kern[i, h, t]
    return dxpad_arr, dkern_arr


def awd_combine_fwd(double[:, :, ::1] xpad, double[:, :, :, ::1] wts,
                    int kh, int kw, int stride):
    cdef Py_ssize_t ch = xpad.shape[0]
    cdef Py_ssize_t ho = wts.shape[1]
    cdef Py_ssize_t wo = wts.shape[2]
    y_arr = np.zeros((ch, ho, wo))
    cdef double[:, :, ::1] y = y_arr
    cdef Py_ssize_t i, r, c, h, t
    cdef double acc
    with nogil:
        for i in range(ch):
            for r in range(ho):
                for c in range(wo):
                    acc = 0.0
                    for h in range(kh):
                        for t in range(kw):
                            acc += wts[i, r, c, h * kw + t] * xpad[i, r * stride + h, c * stride + t]
                    y[i, r, c] = acc
    return y_arr


def awd_combine_bwd(double[:, :, ::1] xpad, double[:, :, :, ::1] wts,
                    double[:, :, ::1] dy, int kh, int kw, int stride):
    cdef Py_ssize_t ch = xpad.shape[0]
    cdef Py_ssize_t ho = dy.shape[1]
    cdef Py_ssize_t wo = dy.shape[2]
    dxpad_arr = np.zeros((xpad.shape[0], xpad.shape[1], xpad.shape[2]))
    dwts_arr = np.zeros((ch, ho, wo, kh * kw))
    cdef double[:, :, ::1] dxpad = dxpad_arr
    cdef double[:, :, :, ::1] dwts = dwts_arr
    cdef Py_ssize_t i, r, c, h, t
    cdef double g
    with nogil:
        for i in range(ch):
            for r in range(ho):
                for c in range(wo):
                    g = dy[i, r, c]
                    for h in range(kh):
                        for t in range(kw):
                            dwts[i, r, c, h * kw + t] = g * xpad[i, r * stride + h, c * stride + t]
                            dxpad[i, r * stride + h, c * stride + t] += g * wts[i, r, c, h * kw + t]
    return dxpad_arr, dwts_arr
