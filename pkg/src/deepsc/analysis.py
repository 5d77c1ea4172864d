"""Measurements on a trained network: codes, selectivity, ATA, sparsity, generation."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import PreconditionError
from .hierarchy import MODALITIES, LayerGraph, _sample_inputs, extract_code, solve_network
from .lca import threshold
from .tensor import conv_transpose

SELECTIVITY_EPS = 1e-9


def sparsity_fraction(code) -> float:
    """Fraction of nonzero entries."""
    code = np.asarray(code)
    if code.size == 0:
        return 0.0
    return float(np.count_nonzero(np.abs(code) > 0)) / code.size


def pooled(code) -> np.ndarray:
    """Per-feature mean over spatial positions of a ``[F, H, W]`` code."""
    code = np.asarray(code, dtype=np.float64)
    return code.reshape(code.shape[0], -1).mean(axis=1)


def only(modality) -> dict:
    """Override flags presenting just ``modality``."""
    if modality not in MODALITIES:
        raise PreconditionError(f"unknown modality {modality!r}")
    return {m: m == modality for m in MODALITIES}


def encode(graph: LayerGraph, samples, layers, overrides=None, pool=False) -> dict:
    """Codes of ``layers`` for every sample: ``{layer: array [N, ...]}``."""
    layers = [layers] if isinstance(layers, str) else list(layers)
    out = {name: [] for name in layers}
    for sample in samples:
        net = solve_network(sample, graph, overrides, record_energy=False)
        for name in layers:
            a = extract_code(name, net)
            out[name].append(pooled(a) if pool else a.ravel().copy())
    return {name: np.array(v) for name, v in out.items()}


def class_average_activation(graph, samples, layer, overrides=None) -> np.ndarray:
    """Mean spatially pooled code of ``layer`` over ``samples``."""
    samples = list(samples)
    if not samples:
        raise PreconditionError("class_average_activation needs a nonempty subset")
    return encode(graph, samples, layer, overrides, pool=True)[layer].mean(axis=0)


def group_by_label(codes, labels) -> dict:
    groups = {}
    for code, lab in zip(codes, labels):
        groups.setdefault(lab, []).append(code)
    return {lab: np.array(v) for lab, v in groups.items()}


def nearest_centroid(codes_by_class, query):
    """Label of the closest class centroid and the distance to every centroid.

    Ties go to the lexicographically first label.
    """
    classes = {lab: np.asarray(c, dtype=np.float64) for lab, c in codes_by_class.items() if len(c)}
    if not classes:
        raise PreconditionError("nearest_centroid needs at least one class with one code")
    q = np.ravel(query)
    distances = {}
    for lab in sorted(classes):
        centre = classes[lab].reshape(len(classes[lab]), -1).mean(axis=0)
        if centre.shape != q.shape:
            raise PreconditionError(f"query has {q.size} dims, class {lab!r} codes have {centre.size}")
        distances[lab] = float(np.linalg.norm(q - centre))
    best = min(sorted(distances), key=lambda lab: distances[lab])
    return best, distances


@dataclass
class ActivationProfile:
    """Per-condition mean pooled activation of one neuron.

    ``means[condition] = (target mean, other mean)``; selectivity is
    ``target / max(other, eps)``.
    """

    neuron: int
    means: dict = field(default_factory=dict)

    def selectivity(self, condition) -> float:
        target, other = self.means[condition]
        return target / max(other, SELECTIVITY_EPS)

    @property
    def selectivity_ratio(self) -> float:
        return min(self.selectivity(c) for c in ("vision", "text"))


def activation_profiles(graph, samples, target_label, layer=None) -> list:
    """Profiles of every neuron of ``layer`` (default: joint) under image-only, text-only and both."""
    samples = list(samples)
    layer = layer or graph.top.name
    is_target = np.array([s.label == target_label for s in samples])
    if not is_target.any() or is_target.all():
        raise PreconditionError(f"need both target ({target_label!r}) and non-target samples")
    means = {}
    for condition, overrides in (("vision", only("vision")), ("text", only("text")), ("both", None)):
        codes = encode(graph, samples, layer, overrides, pool=True)[layer]
        means[condition] = (codes[is_target].mean(axis=0), codes[~is_target].mean(axis=0))
    n = means["both"][0].shape[0]
    return [ActivationProfile(i, {c: (float(t[i]), float(o[i])) for c, (t, o) in means.items()})
            for i in range(n)]


def find_invariant_neurons(graph, samples, target_label, ratio_threshold, layer=None,
                           profiles=None) -> list:
    """Neurons active for the target under both single-modality presentations
    with selectivity >= ``ratio_threshold`` in each. Sorted by weakest selectivity, descending.
    """
    profiles = profiles if profiles is not None else activation_profiles(graph, samples, target_label, layer)
    hits = [p for p in profiles
            if p.means["vision"][0] > 0 and p.means["text"][0] > 0
            and p.selectivity("vision") >= ratio_threshold and p.selectivity("text") >= ratio_threshold]
    return sorted(hits, key=lambda p: (-p.selectivity_ratio, p.neuron))


def activity_triggered_average(graph, samples, layer, neuron, overrides=None):
    """Activation-weighted mean image and text; zero tensors if the neuron never fires."""
    samples = list(samples)
    if not samples:
        raise PreconditionError("activity_triggered_average needs a nonempty corpus")
    weights = encode(graph, samples, layer, overrides, pool=True)[layer][:, neuron]
    return weighted_inputs(samples, weights)


def weighted_inputs(samples, weights):
    total = float(np.sum(weights))
    out = []
    for attr in ("image", "text"):
        shape = next((getattr(s, attr).shape for s in samples if getattr(s, attr) is not None), None)
        if shape is None:
            out.append(None)
            continue
        acc = np.zeros(shape)
        if total != 0.0:
            for s, w in zip(samples, weights):
                x = getattr(s, attr)
                if w != 0.0 and x is not None:
                    acc += w * x
            acc /= total
        out.append(acc)
    return tuple(out)


@dataclass
class Generation:
    """Output of :func:`generate_missing_modality`."""

    generated: dict
    reconstructions: dict
    state: object


def decode_branch(graph: LayerGraph, modality, a_joint) -> np.ndarray:
    """Top-down generative pass from a joint code to the external ``modality`` signal.

    Each branch layer's membrane is estimated as its child's reconstruction;
    the layer's code is that membrane thresholded.
    """
    chain = list(graph.branch_layers(modality))
    if not chain:
        raise PreconditionError(f"graph has no {modality} branch")
    joint = graph.joint
    top = chain[-1]
    a = a_joint
    child = joint
    parent_name = top.name
    for layer in reversed(chain):
        u_est = conv_transpose(a, child.kernel_stacks[child.parent_inputs.index(parent_name)])
        p = layer.params
        a = threshold(u_est, p.lam, p.nonnegative, p.transfer)
        child = layer
        parent_name = layer.parent_inputs[0]
    return conv_transpose(a, chain[0].kernel_stack)


def generate_missing_modality(graph: LayerGraph, sample, absent=None) -> Generation:
    """Infer from the present modality, then decode the absent one top-down."""
    inputs = _sample_inputs(sample)
    missing = [m for m in graph.modalities if inputs.get(m) is None]
    if absent is not None and absent not in missing:
        missing = sorted(set(missing) | {absent}, key=MODALITIES.index)
    if len(missing) == len(graph.modalities):
        raise PreconditionError("every modality is absent; nothing to generate from")
    if graph.joint is None and missing:
        raise PreconditionError("generation needs a joint layer")
    overrides = {m: m not in missing for m in graph.modalities}
    net = solve_network(sample, graph, overrides, record_energy=False)
    recon = {}
    for m in graph.modalities:
        if m in missing:
            continue
        bottom = graph.branch_layers(m)[0]
        recon[m] = conv_transpose(net[bottom.name].a, bottom.kernel_stack)
    generated = {m: decode_branch(graph, m, net[graph.joint.name].a) for m in missing}
    return Generation(generated, recon, net)


def export_features(graph, samples, layer, path, overrides=None) -> int:
    """Write ``label,f0,f1,...`` rows of flattened codes; returns the row count."""
    samples = list(samples)
    if not samples:
        raise PreconditionError("export_features needs a nonempty corpus")
    codes = encode(graph, samples, layer, overrides)[layer]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["label"] + [f"f{i}" for i in range(codes.shape[1])])
            for s, row in zip(samples, codes):
                w.writerow([s.label] + [repr(float(v)) for v in row])
    except OSError as err:
        raise OSError(f"cannot write features to {path}: {err}") from err
    return len(samples)
