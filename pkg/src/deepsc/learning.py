"""Dictionary learning alternating with network inference."""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericDivergenceError, PreconditionError
from .hierarchy import LayerGraph, _active_plan, _present, _sample_inputs, feedforward_input, solve_network
from .lca import _as_inputs, _as_layer, energy_terms, reconstruct
from .tensor import weight_correlation

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainSchedule:
    epochs: int = 3
    learning_rate: float = 0.01
    update_every: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 0:
            raise PreconditionError(f"epochs must be >= 0, got {self.epochs}")
        if not self.learning_rate >= 0:
            raise PreconditionError(f"learning_rate must be >= 0, got {self.learning_rate}")
        if self.update_every < 1:
            raise PreconditionError(f"update_every must be >= 1, got {self.update_every}")


def dictionary_gradient(x, a, layer) -> tuple[np.ndarray, ...]:
    """Gradient of ``1/2 ||x - Phi a||^2`` with respect to each kernel stack.

    Returns one array per kernel stack of ``layer`` (a 1-tuple for branch
    layers), each shaped like that stack's weights.
    """
    layer = _as_layer(layer)
    inputs = _as_inputs(x, layer)
    grads = []
    for k, xb, rb, s in zip(layer.kernel_stacks, inputs, reconstruct(layer, a), layer.branch_scales):
        g = weight_correlation(xb - rb, a, k)
        grads.append(-s * g)
    return tuple(grads)


def _unit(w):
    n = np.sqrt(np.sum(w.reshape(w.shape[0], -1) ** 2, axis=1))
    n[n == 0] = 1.0
    return w / n[:, None, None, None]


def apply_update(layer, gradient, learning_rate):
    """Gradient step on every kernel followed by renormalization to unit norm.

    A zero step (zero rate or all-zero gradient) returns ``layer`` untouched.
    """
    if isinstance(gradient, np.ndarray):
        gradient = (gradient,)
    if len(gradient) != len(layer.kernel_stacks):
        raise PreconditionError(
            f"layer {layer.name!r}: {len(gradient)} gradients for {len(layer.kernel_stacks)} stacks")
    if learning_rate == 0 or not any(np.any(g) for g in gradient):
        return layer
    weights = []
    for k, g in zip(layer.kernel_stacks, gradient):
        if g.shape != k.weights.shape:
            raise PreconditionError(f"gradient shape {g.shape} does not match kernels {k.weights.shape}")
        weights.append(_unit(k.weights - learning_rate * g))
    return layer.with_weights(weights)


@dataclass
class MetricsLog:
    rows: list = field(default_factory=list)

    def add(self, epoch, input_index, layer, recon_energy, sparsity):
        self.rows.append((epoch, input_index, layer, recon_energy, sparsity))

    def to_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "input_index", "layer", "recon_energy", "sparsity_fraction"])
            for e, i, name, r, s in self.rows:
                w.writerow([e, i, name, repr(r), repr(s)])

    def column(self, layer, name):
        j = {"recon_energy": 3, "sparsity_fraction": 4}[name]
        return np.array([row[j] for row in self.rows if row[2] == layer])


def epoch_order(n, seed, epoch):
    return np.random.default_rng([seed, epoch]).permutation(n)


def train(dataset, graph: LayerGraph, schedule: TrainSchedule, on_update=None, start_epoch=0):
    """Alternate full network inference and per-layer dictionary updates.

    Every layer is updated against its own reconstruction target (the raw
    input or its parents' final membranes). ``on_update(graph, epoch, index)``
    is called after each dictionary update. Returns ``(graph, MetricsLog)``.
    """
    samples = list(dataset)
    if not samples:
        raise PreconditionError("training set is empty")
    log = MetricsLog()
    pending = {}
    count = 0
    for epoch in range(start_epoch, schedule.epochs):
        for index in epoch_order(len(samples), schedule.seed, epoch):
            sample = samples[index]
            try:
                net = solve_network(sample, graph, record_energy=False)
            except NumericDivergenceError as err:
                raise NumericDivergenceError(
                    f"{err} (epoch {epoch}, input {index})", layer=err.layer, iteration=err.iteration) from err
            present = _present(graph, _sample_inputs(sample), None)
            for layer, view in _active_plan(graph, present):
                x = feedforward_input(view, net)
                a = net[layer.name].a
                rec, _ = energy_terms(x, view, a)
                log.add(epoch, int(index), layer.name, rec, float(np.count_nonzero(a)) / a.size)
                grads = dict(zip(view.parent_inputs, dictionary_gradient(x, a, view)))
                acc = pending.setdefault(layer.name, {})
                for parent, g in grads.items():
                    acc[parent] = g if parent not in acc else acc[parent] + g
            count += 1
            if count % schedule.update_every == 0:
                graph = _flush(graph, pending, schedule.learning_rate)
                pending = {}
                if on_update is not None:
                    on_update(graph, epoch, int(index))
        logger.info("epoch %d done", epoch)
    if pending:
        graph = _flush(graph, pending, schedule.learning_rate)
        if on_update is not None:
            on_update(graph, schedule.epochs - 1, -1)
    return graph, log


def _flush(graph, pending, lr):
    layers = []
    for layer in graph.layers:
        acc = pending.get(layer.name)
        if acc:
            grads = tuple(acc.get(p, np.zeros_like(k.weights))
                          for p, k in zip(layer.parent_inputs, layer.kernel_stacks))
            layer = apply_update(layer, grads, lr)
        layers.append(layer)
    return graph.replace_layers(layers)
