"""Pure-numpy convolution kernels.

All three kernels share one geometry: output site ``(i, j)`` of feature ``f``
sees input rows ``i*sh + p - oh`` and columns ``j*sw + q - ow``; sites outside
the input read as zero.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _pads(extent, out, kernel, stride, offset):
    after = max(0, (out - 1) * stride + kernel - offset - extent)
    return offset, after


def _windows(x, kh, kw, sh, sw, oh, ow):
    _, h, w = x.shape
    ho, wo = h // sh, w // sw
    pt, pb = _pads(h, ho, kh, sh, oh)
    pl, pr = _pads(w, wo, kw, sw, ow)
    xp = np.pad(x, ((0, 0), (pt, pb), (pl, pr)))
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))
    # [C, Ho, Wo, kh, kw]
    return win[:, ::sh, ::sw][:, :ho, :wo]


def conv_forward(x, k, sh, sw, oh, ow):
    f, c, kh, kw = k.shape
    win = _windows(x, kh, kw, sh, sw, oh, ow)
    return np.ascontiguousarray(np.tensordot(k, win, axes=([1, 2, 3], [0, 3, 4])))


def conv_transpose(a, k, h, w, sh, sw, oh, ow):
    f, c, kh, kw = k.shape
    _, ho, wo = a.shape
    pt, pb = _pads(h, ho, kh, sh, oh)
    pl, pr = _pads(w, wo, kw, sw, ow)
    contrib = np.tensordot(k, a, axes=([0], [0]))  # [C, kh, kw, Ho, Wo]
    xp = np.zeros((c, h + pt + pb, w + pl + pr))
    for p in range(kh):
        for q in range(kw):
            xp[:, p:p + sh * ho:sh, q:q + sw * wo:sw] += contrib[:, p, q]
    return np.ascontiguousarray(xp[:, pt:pt + h, pl:pl + w])


def weight_correlation(res, a, kh, kw, sh, sw, oh, ow):
    win = _windows(res, kh, kw, sh, sw, oh, ow)
    return np.ascontiguousarray(np.tensordot(a, win, axes=([1, 2], [1, 2])))


def dense_forward(k2, x1):
    return k2 @ x1


def dense_transpose(k2, a1):
    return a1 @ k2


def dense_weight(r1, a1):
    return np.outer(a1, r1)
