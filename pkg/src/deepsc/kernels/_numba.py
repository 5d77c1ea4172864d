"""numba kernels; same geometry and semantics as ``_numpy``.

Each output element is reduced in a fixed loop order, so results are
bit-reproducible regardless of the thread count. Kernel-tap ranges are
clipped to the input once per output site, leaving branch-free inner loops.
"""
import os

import numba
import numpy as np
from numba import njit, prange

if "NUMBA_THREADING_LAYER" not in os.environ:
    numba.config.THREADING_LAYER_PRIORITY = ["omp", "tbb", "workqueue"]

# reassociation lets LLVM vectorize reductions; the order is fixed at compile
# time, so repeated runs still agree bit for bit
_FM = {"reassoc", "contract"}


@njit(cache=True, inline="always")
def _tap_range(site, stride, offset, ksize, extent):
    start = site * stride - offset
    lo = max(0, -start)
    hi = min(ksize, extent - start)
    return start, lo, hi


@njit(cache=True, parallel=True, fastmath=_FM)
def conv_forward(x, k, sh, sw, oh, ow):
    nf, nc, kh, kw = k.shape
    h = x.shape[1]
    w = x.shape[2]
    ho = h // sh
    wo = w // sw
    out = np.zeros((nf, ho, wo))
    for f in prange(nf):
        for i in range(ho):
            r0, plo, phi = _tap_range(i, sh, oh, kh, h)
            for j in range(wo):
                s0, qlo, qhi = _tap_range(j, sw, ow, kw, w)
                acc = 0.0
                for c in range(nc):
                    for p in range(plo, phi):
                        for q in range(qlo, qhi):
                            acc += k[f, c, p, q] * x[c, r0 + p, s0 + q]
                out[f, i, j] = acc
    return out


@njit(cache=True, parallel=True, fastmath=_FM)
def conv_transpose(a, k, h, w, sh, sw, oh, ow):
    nf, nc, kh, kw = k.shape
    ho = a.shape[1]
    wo = a.shape[2]
    out = np.zeros((nc, h, w))
    for c in prange(nc):
        for f in range(nf):
            for i in range(ho):
                r0, plo, phi = _tap_range(i, sh, oh, kh, h)
                for j in range(wo):
                    v = a[f, i, j]
                    if v == 0.0:
                        continue
                    s0, qlo, qhi = _tap_range(j, sw, ow, kw, w)
                    for p in range(plo, phi):
                        for q in range(qlo, qhi):
                            out[c, r0 + p, s0 + q] += k[f, c, p, q] * v
    return out


@njit(cache=True, parallel=True, fastmath=_FM)
def weight_correlation(res, a, kh, kw, sh, sw, oh, ow):
    nc, h, w = res.shape
    nf, ho, wo = a.shape
    out = np.zeros((nf, nc, kh, kw))
    for f in prange(nf):
        for i in range(ho):
            r0, plo, phi = _tap_range(i, sh, oh, kh, h)
            for j in range(wo):
                v = a[f, i, j]
                if v == 0.0:
                    continue
                s0, qlo, qhi = _tap_range(j, sw, ow, kw, w)
                for c in range(nc):
                    for p in range(plo, phi):
                        for q in range(qlo, qhi):
                            out[f, c, p, q] += v * res[c, r0 + p, s0 + q]
    return out


# fully connected geometry: kernels cover the whole input, output is 1x1

@njit(cache=True, parallel=True, fastmath=_FM)
def dense_forward(k2, x1):
    nf, n = k2.shape
    out = np.zeros(nf)
    for f in prange(nf):
        acc = 0.0
        for m in range(n):
            acc += k2[f, m] * x1[m]
        out[f] = acc
    return out


@njit(cache=True, fastmath=_FM)
def dense_transpose(k2, a1):
    nf, n = k2.shape
    out = np.zeros(n)
    for f in range(nf):
        v = a1[f]
        if v == 0.0:
            continue
        for m in range(n):
            out[m] += v * k2[f, m]
    return out


@njit(cache=True, parallel=True, fastmath=_FM)
def dense_weight(r1, a1):
    nf = a1.shape[0]
    n = r1.shape[0]
    out = np.zeros((nf, n))
    for f in prange(nf):
        v = a1[f]
        if v == 0.0:
            continue
        for m in range(n):
            out[f, m] = v * r1[m]
    return out
