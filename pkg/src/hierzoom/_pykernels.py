"""Pure-numpy implementations of the hot kernels.

Each function has a compiled twin in ``_ckernels.pyx`` with the same
signature and semantics. Inputs are float64 C-contiguous arrays.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(xpad, k, stride, out_h, out_w):
    """Unfold ``(N, C, Hp, Wp)`` into ``(N*out_h*out_w, C*k*k)`` patch rows."""
    n, c = xpad.shape[:2]
    win = sliding_window_view(xpad, (k, k), axis=(2, 3))
    win = win[:, :, : (out_h - 1) * stride + 1 : stride, : (out_w - 1) * stride + 1 : stride]
    # (N, C, Ho, Wo, k, k) -> (N, Ho, Wo, C, k, k)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(
        n * out_h * out_w, c * k * k
    )


def col2im(cols, n, c, hp, wp, k, stride, out_h, out_w):
    """Scatter-add patch rows back into a padded ``(N, C, Hp, Wp)`` array."""
    out = np.zeros((n, c, hp, wp))
    cols = cols.reshape(n, out_h, out_w, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    h_end = (out_h - 1) * stride + 1
    w_end = (out_w - 1) * stride + 1
    for i in range(k):
        for j in range(k):
            out[:, :, i : i + h_end : stride, j : j + w_end : stride] += cols[:, :, i, j]
    return out


def maxpool_forward(x, w):
    n, c, h, wd = x.shape
    oh, ow = h // w, wd // w
    blocks = x.reshape(n, c, oh, w, ow, w).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh, ow, w * w)
    arg = np.argmax(blocks, axis=-1)
    out = np.take_along_axis(blocks, arg[..., None], axis=-1)[..., 0]
    return np.ascontiguousarray(out), arg.astype(np.int64)


def maxpool_backward(g, arg, w):
    n, c, oh, ow = g.shape
    blocks = np.zeros((n, c, oh, ow, w * w))
    np.put_along_axis(blocks, arg[..., None], g[..., None], axis=-1)
    return np.ascontiguousarray(
        blocks.reshape(n, c, oh, ow, w, w).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, oh * w, ow * w)
    )


def _axis_weights(n_in, n_out):
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0.0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    return lo, hi, src - lo


def resize_bilinear(img, out_h, out_w):
    """Half-pixel-centre bilinear resampling of a 2-D array."""
    in_h, in_w = img.shape
    y0, y1, fy = _axis_weights(in_h, out_h)
    x0, x1, fx = _axis_weights(in_w, out_w)
    top = img[y0]
    bot = img[y1]
    a = top[:, x0]
    b = top[:, x1]
    c = bot[:, x0]
    d = bot[:, x1]
    upper = a + fx * (b - a)
    lower = c + fx * (d - c)
    out = upper + fy[:, None] * (lower - upper)
    return np.clip(out, img.min(), img.max())
