"""Single-layer LCA dynamics.

The membrane ``u`` integrates

    du/dt = -u + Phi^T x - (Phi^T Phi a - a) - r

with ``a = T(u)``. The inhibition is evaluated in residual form,
``Phi^T (x - Phi a) + a``, so no Gram matrix is ever built.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, NumericDivergenceError
from .layer import DictionaryLayer, LcaParams
from .tensor import KernelStack, conv_forward, conv_transpose


def threshold(u, lam, nonnegative=False, transfer="soft"):
    """Elementwise transfer ``a = T(u)``.

    Soft: ``sign(u) * max(|u| - lam, 0)``; with ``nonnegative`` only the
    positive side survives. Hard keeps ``u`` unchanged above threshold.
    """
    u = np.asarray(u, dtype=np.float64)
    if transfer == "hard":
        keep = u > lam if nonnegative else np.abs(u) > lam
        return np.where(keep, u, 0.0)
    if nonnegative:
        return np.maximum(u - lam, 0.0)
    return np.sign(u) * np.maximum(np.abs(u) - lam, 0.0)


def _transfer(u, params: LcaParams):
    return threshold(u, params.lam, params.nonnegative, params.transfer)


def _as_layer(layer) -> DictionaryLayer:
    if isinstance(layer, KernelStack):
        return DictionaryLayer.single("layer", layer)
    return layer


def _as_inputs(x, layer: DictionaryLayer) -> tuple:
    inputs = (x,) if isinstance(x, np.ndarray) else tuple(x)
    if len(inputs) != len(layer.kernel_stacks):
        raise GeometryError(
            f"layer {layer.name!r} expects {len(layer.kernel_stacks)} inputs, got {len(inputs)}")
    return inputs


@dataclass(frozen=True)
class LayerState:
    """Membrane ``u`` and code ``a = T(u)`` of one layer.

    ``recon`` caches ``Phi a`` per input so the next step and the layer above
    can reuse it; it is derived data and never compared.
    """

    u: np.ndarray
    a: np.ndarray
    iteration: int = 0
    recon: tuple | None = field(default=None, compare=False, repr=False)

    @classmethod
    def zeros(cls, shape):
        return cls(np.zeros(shape), np.zeros(shape))

    @classmethod
    def from_membrane(cls, u, params: LcaParams, iteration=0):
        u = np.asarray(u, dtype=np.float64)
        return cls(u, _transfer(u, params), iteration)


def reconstruct(layer, a) -> tuple:
    """``Phi a`` for every kernel stack of ``layer``."""
    layer = _as_layer(layer)
    return tuple(conv_transpose(a, k) for k in layer.kernel_stacks)


def energy_terms(x, layer, a, lam=None, recon=None) -> tuple[float, float]:
    """Return (reconstruction term, sparsity term) of the layer energy."""
    layer = _as_layer(layer)
    inputs = _as_inputs(x, layer)
    lam = layer.params.lam if lam is None else lam
    recon = reconstruct(layer, a) if recon is None else recon
    rec = 0.0
    for xb, rb, s in zip(inputs, recon, layer.branch_scales):
        if xb.shape != rb.shape:
            raise GeometryError(f"energy: input shape {xb.shape} does not match reconstruction {rb.shape}")
        d = (xb - rb).ravel()
        rec += 0.5 * s * float(np.dot(d, d))
    return rec, float(lam) * float(np.sum(np.abs(a)))


def energy(x, layer, a, lam=None) -> float:
    """``1/2 ||x - Phi a||^2 + lam ||a||_1`` (summed over inputs for the joint layer)."""
    rec, sp = energy_terms(x, layer, a, lam)
    return rec + sp


def drive(x, layer, a, recon=None, feedback=None):
    """Right-hand side without the leak: ``Phi^T (x - Phi a) + a - r``."""
    layer = _as_layer(layer)
    inputs = _as_inputs(x, layer)
    recon = reconstruct(layer, a) if recon is None else recon
    total = np.array(a, dtype=np.float64, copy=True)
    for k, xb, rb, s in zip(layer.kernel_stacks, inputs, recon, layer.branch_scales):
        g = conv_forward(xb - rb, k)
        total += g if s == 1.0 else s * g
    if feedback is not None:
        if feedback.shape != total.shape:
            raise GeometryError(
                f"feedback shape {feedback.shape} does not match membrane {total.shape} in layer {layer.name!r}")
        total -= feedback
    return total


def lca_step(state: LayerState, x, layer, feedback=None, params: LcaParams | None = None) -> LayerState:
    """One explicit Euler step of the membrane dynamics."""
    layer = _as_layer(layer)
    p = layer.params if params is None else params
    if state.u.shape != layer.output_shape:
        raise GeometryError(
            f"state shape {state.u.shape} does not match layer {layer.name!r} output {layer.output_shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        d = drive(x, layer, state.a, state.recon, feedback)
        u = state.u + p.dt_over_tau * (d - state.u)
    iteration = state.iteration + 1
    if not np.all(np.isfinite(u)):
        raise NumericDivergenceError(
            f"membrane of layer {layer.name!r} diverged at iteration {iteration}",
            layer=layer.name, iteration=iteration)
    a = _transfer(u, p)
    return LayerState(u, a, iteration, reconstruct(layer, a))


def fixed_point_residual(state: LayerState, x, layer, feedback=None) -> float:
    """``max |u - (Phi^T (x - Phi a) + a - r)|``; zero at an equilibrium."""
    d = drive(x, layer, state.a, state.recon, feedback)
    return float(np.max(np.abs(state.u - d)))


@dataclass
class EnergyTrace:
    """Per-iteration energy split into reconstruction and sparsity terms."""

    reconstruction: list = field(default_factory=list)
    sparsity: list = field(default_factory=list)

    def append(self, rec, sp):
        self.reconstruction.append(rec)
        self.sparsity.append(sp)

    @property
    def total(self) -> np.ndarray:
        return np.asarray(self.reconstruction) + np.asarray(self.sparsity)

    def __len__(self):
        return len(self.reconstruction)

    def __getitem__(self, i):
        return self.reconstruction[i] + self.sparsity[i]

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "reconstruction_term", "sparsity_term", "total"])
            for i, (r, s) in enumerate(zip(self.reconstruction, self.sparsity), start=1):
                w.writerow([i, repr(r), repr(s), repr(r + s)])


def solve_single_layer(x, layer, params: LcaParams | None = None):
    """Run ``n_iterations`` LCA steps from ``u = 0``.

    Returns the final :class:`LayerState` and the :class:`EnergyTrace`
    recorded after every step.
    """
    layer = _as_layer(layer)
    p = layer.params if params is None else params
    state = LayerState.zeros(layer.output_shape)
    trace = EnergyTrace()
    for _ in range(int(p.n_iterations)):
        state = lca_step(state, x, layer, None, p)
        trace.append(*energy_terms(x, layer, state.a, p.lam, state.recon))
    return state, trace
