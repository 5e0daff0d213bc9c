"""Numba @njit convolution/pooling kernels.

Tap-major loop order: the innermost sweep runs along the output width with
stride-1 access into both input and output, so it vectorizes. Serial on
purpose (no prange), a run is literally single threaded. Signatures match
kernels_numpy exactly.
"""

import numpy as np
from numba import njit


@njit(cache=True, fastmath=True)
def conv2d_forward(x, k, b):
    n, c, h, w = x.shape
    f, _, kh, kw = k.shape
    oh, ow = h - kh + 1, w - kw + 1
    out = np.empty((n, f, oh, ow), dtype=x.dtype)
    for nn in range(n):
        for ff in range(f):
            for i in range(oh):
                for j in range(ow):
                    out[nn, ff, i, j] = b[ff]
            for cc in range(c):
                for a in range(kh):
                    for bb in range(kw):
                        kv = k[ff, cc, a, bb]
                        for i in range(oh):
                            for j in range(ow):
                                out[nn, ff, i, j] += kv * x[nn, cc, i + a, j + bb]
    return out


@njit(cache=True, fastmath=True)
def conv2d_grad_kernel(gout, x, kh, kw):
    n, f, oh, ow = gout.shape
    c = x.shape[1]
    gk = np.zeros((f, c, kh, kw), dtype=gout.dtype)
    for nn in range(n):
        for ff in range(f):
            for cc in range(c):
                for a in range(kh):
                    for bb in range(kw):
                        acc = 0.0
                        for i in range(oh):
                            for j in range(ow):
                                acc += gout[nn, ff, i, j] * x[nn, cc, i + a, j + bb]
                        gk[ff, cc, a, bb] += acc
    return gk


@njit(cache=True, fastmath=True)
def conv2d_grad_input(gout, k, h, w):
    n, f, oh, ow = gout.shape
    c = k.shape[1]
    kh, kw = k.shape[2], k.shape[3]
    gin = np.zeros((n, c, h, w), dtype=gout.dtype)
    for nn in range(n):
        for ff in range(f):
            for cc in range(c):
                for a in range(kh):
                    for bb in range(kw):
                        kv = k[ff, cc, a, bb]
                        for i in range(oh):
                            for j in range(ow):
                                gin[nn, cc, i + a, j + bb] += kv * gout[nn, ff, i, j]
    return gin


@njit(cache=True, fastmath=True)
def avgpool_forward(x, wh, ww, sh, sw):
    n, c, h, w = x.shape
    oh, ow = (h - wh) // sh + 1, (w - ww) // sw + 1
    out = np.empty((n, c, oh, ow), dtype=x.dtype)
    inv = 1.0 / (wh * ww)
    for nn in range(n):
        for cc in range(c):
            for i in range(oh):
                for j in range(ow):
                    acc = 0.0
                    for a in range(wh):
                        for b in range(ww):
                            acc += x[nn, cc, i * sh + a, j * sw + b]
                    out[nn, cc, i, j] = acc * inv
    return out


@njit(cache=True, fastmath=True)
def avgpool_grad_input(gout, h, w, wh, ww, sh, sw):
    n, c, oh, ow = gout.shape
    gin = np.zeros((n, c, h, w), dtype=gout.dtype)
    inv = 1.0 / (wh * ww)
    for nn in range(n):
        for cc in range(c):
            for i in range(oh):
                for j in range(ow):
                    g = gout[nn, cc, i, j] * inv
                    for a in range(wh):
                        for b in range(ww):
                            gin[nn, cc, i * sh + a, j * sw + b] += g
    return gin
