"""Backend selection for the hot kernels.

The compiled ``_ckernels`` extension is used when it imports; otherwise the
numpy implementations in ``_pykernels`` are used. Set
``HIERZOOM_BACKEND=python`` to force the fallback.
"""

import os

from . import _pykernels

python = _pykernels

try:
    from . import _ckernels as compiled
except ImportError:  # extension not built
    compiled = None

if compiled is not None and os.environ.get("HIERZOOM_BACKEND", "").lower() != "python":
    active = compiled
    BACKEND = "cython"
else:
    active = _pykernels
    BACKEND = "python"


def im2col(xpad, k, stride, out_h, out_w):
    return active.im2col(xpad, k, stride, out_h, out_w)


def col2im(cols, n, c, hp, wp, k, stride, out_h, out_w):
    return active.col2im(cols, n, c, hp, wp, k, stride, out_h, out_w)


def maxpool_forward(x, w):
    return active.maxpool_forward(x, w)


def maxpool_backward(g, arg, w):
    return active.maxpool_backward(g, arg, w)


def resize_bilinear(img, out_h, out_w):
    return active.resize_bilinear(img, out_h, out_w)
