"""Pure numpy convolution/pooling kernels (BLAS backed).

Two layouts cover every layer of the network:

* full-height kernels (oh == 1, kw == 1) reduce to one batched channel
  matmul over the flattened (channel, height) axis, no im2col copy at all;
* everything else goes through im2col + one large GEMM, with the input
  gradient as a single GEMM followed by a short col2im tap loop (a padded
  im2col of the upstream gradient would need N*H*W*F*kh*kw scratch floats,
  which blows up for wide temporal kernels).
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _im2col(x, kh, kw):
    # (N,C,H,W) -> (N*OH*OW, C*kh*kw), rows in (n, i, j) order
    n, c, h, w = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw), oh, ow


def conv2d_forward(x, k, b):
    n, c, h, w = x.shape
    f, _, kh, kw = k.shape
    oh, ow = h - kh + 1, w - kw + 1
    if oh == 1 and kw == 1:
        x2 = x.reshape(n, c * h, w)
        out = np.matmul(k.reshape(f, c * kh), x2)  # (N,F,W)
        out += b[:, None]
        return np.ascontiguousarray(out.reshape(n, f, 1, ow))
    cols, oh, ow = _im2col(x, kh, kw)
    out = cols @ k.reshape(f, -1).T
    out += b
    return np.ascontiguousarray(out.reshape(n, oh, ow, f).transpose(0, 3, 1, 2))


def conv2d_grad_kernel(gout, x, kh, kw):
    n, f, oh, ow = gout.shape
    c = x.shape[1]
    if oh == 1 and kw == 1:
        g = gout.reshape(n, f, ow)
        x2 = x.reshape(n, c * kh, ow)
        gk = np.matmul(g, x2.transpose(0, 2, 1)).sum(axis=0)
        return np.ascontiguousarray(gk.reshape(f, c, kh, kw))
    cols, _, _ = _im2col(x, kh, kw)
    g = gout.transpose(0, 2, 3, 1).reshape(n * oh * ow, f)
    return (g.T @ cols).reshape(f, c, kh, kw)


def conv2d_grad_input(gout, k, h, w):
    n, f, oh, ow = gout.shape
    _, c, kh, kw = k.shape
    if oh == 1 and kw == 1:
        g = gout.reshape(n, f, ow)
        gin = np.matmul(k.reshape(f, c * kh).T, g)  # (N,C*H,W)
        return np.ascontiguousarray(gin.reshape(n, c, h, w))
    g = gout.transpose(0, 2, 3, 1).reshape(n * oh * ow, f)
    cols = g @ k.reshape(f, -1)  # (N*OH*OW, C*kh*kw)
    cols = cols.reshape(n, oh, ow, c, kh, kw)
    gin = np.zeros((n, c, h, w), dtype=gout.dtype)
    for a in range(kh):
        for b in range(kw):
            gin[:, :, a:a + oh, b:b + ow] += cols[:, :, :, :, a, b].transpose(0, 3, 1, 2)
    return gin


def avgpool_forward(x, wh, ww, sh, sw):
    h, w = x.shape[2], x.shape[3]
    oh, ow = (h - wh) // sh + 1, (w - ww) // sw + 1
    win = sliding_window_view(x, (wh, ww), axis=(2, 3))[:, :, ::sh, ::sw]
    out = win.mean(axis=(-2, -1))
    return np.ascontiguousarray(out[:, :, :oh, :ow])


def avgpool_grad_input(gout, h, w, wh, ww, sh, sw):
    n, c, oh, ow = gout.shape
    gin = np.zeros((n, c, h, w), dtype=gout.dtype)
    g = gout * (np.asarray(1.0, dtype=gout.dtype) / (wh * ww))
    for a in range(wh):
        for b in range(ww):
            gin[:, :, a:a + sh * oh:sh, b:b + sw * ow:sw] += g
    return gin
