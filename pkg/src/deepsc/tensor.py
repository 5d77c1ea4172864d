"""Shape-checked dense tensor math and the convolution pair.

Tensors are plain ``float64`` numpy arrays. Signals on a layer are laid out
``[channels, height, width]``; a :class:`KernelStack` maps such a signal to a
``[features, height/stride_h, width/stride_w]`` map.

``conv_forward`` is cross-correlation (no kernel flip) and ``conv_transpose``
is its exact adjoint. Boundaries are zero-padded with the kernel centred on
each stride cell, offset ``(kernel - stride) // 2`` per axis.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import GeometryError, NumericDivergenceError


def as_tensor(values, shape=None) -> np.ndarray:
    """Copy ``values`` into a C-contiguous float64 array, optionally reshaped."""
    arr = np.array(values, dtype=np.float64, order="C")
    if shape is not None:
        shape = tuple(int(s) for s in shape)
        if arr.size != int(np.prod(shape)):
            raise GeometryError(f"cannot view {arr.size} values as shape {shape}")
        arr = arr.reshape(shape)
    return arr


def check_finite(arr: np.ndarray, what: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(arr)):
        raise NumericDivergenceError(f"non-finite values in {what}")
    return arr


def _same_shape(x, y, op):
    if x.shape != y.shape:
        raise GeometryError(f"{op}: shape {x.shape} does not match {y.shape}")


def add(x, y):
    _same_shape(x, y, "add")
    return check_finite(x + y, "add")


def subtract(x, y):
    _same_shape(x, y, "subtract")
    return check_finite(x - y, "subtract")


def scale(x, alpha):
    with np.errstate(over="ignore", invalid="ignore"):
        out = x * float(alpha)
    return check_finite(out, "scale")


def dot(x, y) -> float:
    _same_shape(x, y, "dot")
    return float(np.dot(np.ravel(x), np.ravel(y)))


def l1_norm(x) -> float:
    return float(np.sum(np.abs(x)))


def l2_norm(x) -> float:
    return float(np.sqrt(np.dot(np.ravel(x), np.ravel(x))))


def _pair(v):
    if np.isscalar(v):
        return int(v), int(v)
    a, b = v
    return int(a), int(b)


@dataclass(frozen=True)
class KernelStack:
    """A bank of ``features`` kernels of shape ``[in_channels, kh, kw]``.

    ``input_shape`` is the ``[in_channels, H, W]`` signal the stack reads;
    the geometry is checked here once so convolutions never see a bad shape.
    """

    weights: np.ndarray
    stride: tuple[int, int]
    input_shape: tuple[int, int, int]
    offset: tuple[int, int] = field(init=False)

    def __post_init__(self):
        w = np.ascontiguousarray(self.weights, dtype=np.float64)
        if w.ndim != 4:
            raise GeometryError(f"kernel weights must be 4-d [F, C, kh, kw], got shape {w.shape}")
        stride = _pair(self.stride)
        shape = tuple(int(s) for s in self.input_shape)
        if len(shape) != 3 or min(shape) < 1:
            raise GeometryError(f"input shape must be [C, H, W] with positive extents, got {shape}")
        if min(stride) < 1:
            raise GeometryError(f"stride must be positive, got {stride}")
        f, c, kh, kw = w.shape
        if c != shape[0]:
            raise GeometryError(
                f"kernel in_channels {c} (weights {w.shape}) does not match input {shape}")
        for axis, (extent, k, s) in enumerate(zip(shape[1:], (kh, kw), stride)):
            if extent % s:
                raise GeometryError(
                    f"stride {s} does not divide input extent {extent} on axis {axis + 1} of {shape}")
            if k < s:
                raise GeometryError(f"kernel extent {k} smaller than stride {s} on axis {axis + 1}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "stride", stride)
        object.__setattr__(self, "input_shape", shape)
        object.__setattr__(self, "offset", ((kh - stride[0]) // 2, (kw - stride[1]) // 2))

    @property
    def features(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_size(self) -> tuple[int, int]:
        return self.weights.shape[2], self.weights.shape[3]

    @property
    def output_shape(self) -> tuple[int, int, int]:
        _, h, w = self.input_shape
        return self.features, h // self.stride[0], w // self.stride[1]

    def with_weights(self, weights) -> "KernelStack":
        return KernelStack(weights, self.stride, self.input_shape)

    def norms(self) -> np.ndarray:
        return np.sqrt(np.sum(self.weights.reshape(self.features, -1) ** 2, axis=1))


def random_kernel_stack(rng, features, input_shape, kernel_size, stride) -> KernelStack:
    """Gaussian kernels rescaled to unit Euclidean norm."""
    kh, kw = _pair(kernel_size)
    w = rng.standard_normal((features, input_shape[0], kh, kw))
    w /= np.sqrt(np.sum(w.reshape(features, -1) ** 2, axis=1))[:, None, None, None]
    return KernelStack(w, stride, input_shape)


def conv_forward(x: np.ndarray, k: KernelStack) -> np.ndarray:
    """Correlate every kernel with ``x``: the ``Phi^T x`` drive."""
    if x.shape != k.input_shape:
        raise GeometryError(f"conv_forward: input shape {x.shape} does not match kernel input {k.input_shape}")
    out = kernels.conv_forward(np.ascontiguousarray(x, dtype=np.float64), k.weights,
                               k.stride[0], k.stride[1], k.offset[0], k.offset[1])
    return check_finite(out, "conv_forward output")


def conv_transpose(a: np.ndarray, k: KernelStack) -> np.ndarray:
    """Stamp each kernel scaled by its activation: the ``Phi a`` reconstruction."""
    if a.shape != k.output_shape:
        raise GeometryError(
            f"conv_transpose: activation shape {a.shape} does not match kernel output {k.output_shape}")
    _, h, w = k.input_shape
    out = kernels.conv_transpose(np.ascontiguousarray(a, dtype=np.float64), k.weights, h, w,
                                 k.stride[0], k.stride[1], k.offset[0], k.offset[1])
    return check_finite(out, "conv_transpose output")


def weight_correlation(residual: np.ndarray, a: np.ndarray, k: KernelStack) -> np.ndarray:
    """Correlate ``residual`` patches with activations; shape of ``k.weights``."""
    if residual.shape != k.input_shape:
        raise GeometryError(
            f"weight_correlation: residual shape {residual.shape} does not match {k.input_shape}")
    if a.shape != k.output_shape:
        raise GeometryError(
            f"weight_correlation: activation shape {a.shape} does not match {k.output_shape}")
    kh, kw = k.kernel_size
    out = kernels.weight_correlation(np.ascontiguousarray(residual, dtype=np.float64),
                                     np.ascontiguousarray(a, dtype=np.float64), kh, kw,
                                     k.stride[0], k.stride[1], k.offset[0], k.offset[1])
    return check_finite(out, "weight gradient")


def dense_matrix(k: KernelStack) -> np.ndarray:
    """Materialize ``Phi`` as a ``[prod(input_shape), prod(output_shape)]`` matrix.

    Column ``m`` is the transposed convolution of the ``m``-th unit activation.
    Only meant for small geometries in tests and oracles.
    """
    n_out = int(np.prod(k.output_shape))
    cols = np.empty((int(np.prod(k.input_shape)), n_out))
    unit = np.zeros(n_out)
    for m in range(n_out):
        unit[m] = 1.0
        cols[:, m] = conv_transpose(unit.reshape(k.output_shape), k).ravel()
        unit[m] = 0.0
    return cols
