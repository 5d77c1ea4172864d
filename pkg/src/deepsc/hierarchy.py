"""Multimodal layer graph and the coupled network solver.

Each branch layer reconstructs the dense membrane of the layer below it; the
joint layer reconstructs the top membrane of every branch from one shared
activation map. With feedback on, a layer's dynamics are inhibited by the
residual ``u - Phi_child a_child`` left by the layer above it.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Mapping

import numpy as np

from .errors import GeometryError, GraphError, PreconditionError
from .layer import BRANCHES, EXTERNAL, DictionaryLayer
from .lca import EnergyTrace, LayerState, energy_terms, lca_step
from .tensor import conv_transpose

MODALITIES = ("vision", "text")


@dataclass(frozen=True)
class LayerGraph:
    """Layers in topological order plus the feedback switch."""

    layers: tuple[DictionaryLayer, ...]
    feedback_enabled: bool = True
    feedback_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        self._validate()

    def _validate(self):
        names = [layer.name for layer in self.layers]
        if not names:
            raise GraphError("graph has no layers")
        dupes = {n for n in names if names.count(n) > 1}
        if dupes:
            raise GraphError(f"duplicate layer names: {sorted(dupes)}")
        seen = {}
        children = {n: [] for n in names}
        for layer in self.layers:
            if layer.branch not in BRANCHES:
                raise GraphError(f"layer {layer.name!r}: unknown branch {layer.branch!r}")
            parents = layer.parent_inputs
            if layer.is_joint:
                if len(parents) < 2 or EXTERNAL in parents:
                    raise GraphError(f"joint layer {layer.name!r} needs >= 2 parent layers, got {list(parents)}")
            elif len(parents) != 1:
                raise GraphError(f"layer {layer.name!r} must have exactly one parent, got {list(parents)}")
            for i, p in enumerate(parents):
                if p == EXTERNAL:
                    if layer.branch not in MODALITIES:
                        raise GraphError(f"layer {layer.name!r}: external input needs a modality branch")
                    continue
                if p not in seen:
                    where = "unknown" if p not in children else "listed after it"
                    raise GraphError(f"layer {layer.name!r}: parent {p!r} is {where} (graph must be a DAG in order)")
                parent = seen[p]
                if layer.kernel_stacks[i].input_shape != parent.output_shape:
                    raise GraphError(
                        f"layer {layer.name!r}: kernel input {layer.kernel_stacks[i].input_shape} "
                        f"does not match parent {p!r} output {parent.output_shape}")
                if not layer.is_joint and parent.branch != layer.branch:
                    raise GraphError(
                        f"layer {layer.name!r} ({layer.branch}) cannot read parent {p!r} ({parent.branch})")
                children[p].append(layer.name)
            seen[layer.name] = layer
        joints = [layer for layer in self.layers if layer.is_joint]
        if len(joints) > 1:
            raise GraphError(f"graph has {len(joints)} joint layers: {[j.name for j in joints]}")
        if joints:
            branches = [seen[p].branch for p in joints[0].parent_inputs]
            if len(set(branches)) != len(branches):
                raise GraphError(f"joint layer {joints[0].name!r} has two parents on one branch")
        for name, kids in children.items():
            if len(kids) > 1:
                raise GraphError(f"layer {name!r} feeds several layers {kids}; feedback would be ambiguous")
        sinks = [n for n, kids in children.items() if not kids]
        if joints:
            stray = [n for n in sinks if n != joints[0].name]
            if stray:
                raise GraphError(f"layer(s) {stray} do not lead to joint layer {joints[0].name!r}")
        elif len(sinks) != 1:
            raise GraphError(f"graph without a joint layer must be a single chain; sinks {sinks}")
        object.__setattr__(self, "_by_name", seen)
        object.__setattr__(self, "_child", {n: (k[0] if k else None) for n, k in children.items()})

    def layer(self, name) -> DictionaryLayer:
        try:
            return self._by_name[name]
        except KeyError:
            raise GraphError(f"unknown layer {name!r}") from None

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(layer.name for layer in self.layers)

    def child(self, name) -> DictionaryLayer | None:
        self.layer(name)
        c = self._child[name]
        return None if c is None else self._by_name[c]

    @property
    def joint(self) -> DictionaryLayer | None:
        for layer in self.layers:
            if layer.is_joint:
                return layer
        return None

    @property
    def top(self) -> DictionaryLayer:
        return self.joint or self.layers[-1]

    def branch_layers(self, branch) -> tuple[DictionaryLayer, ...]:
        return tuple(layer for layer in self.layers if layer.branch == branch)

    @property
    def modalities(self) -> tuple[str, ...]:
        return tuple(b for b in MODALITIES if self.branch_layers(b))

    @property
    def n_iterations(self) -> int:
        return max(layer.params.n_iterations for layer in self.layers)

    def replace_layers(self, layers) -> "LayerGraph":
        return replace(self, layers=tuple(layers))

    def with_feedback(self, enabled: bool) -> "LayerGraph":
        return replace(self, feedback_enabled=bool(enabled))

    def subgraph(self, names) -> "LayerGraph":
        """Keep only ``names`` (must be closed under parents)."""
        keep = set(names)
        return replace(self, layers=tuple(layer for layer in self.layers if layer.name in keep))


@dataclass
class NetworkState:
    """Per-layer states and energy traces of one network solve."""

    states: dict
    inputs: dict
    active: tuple
    iteration: int = 0
    traces: dict = field(default_factory=dict)

    def __getitem__(self, name) -> LayerState:
        try:
            return self.states[name]
        except KeyError:
            raise GraphError(f"no state for layer {name!r}") from None

    def total_energy(self, index=-1) -> float:
        return float(sum(t.total[index] for t in self.traces.values() if len(t)))


def _sample_inputs(sample) -> dict:
    if isinstance(sample, Mapping):
        return {b: sample.get(b) for b in MODALITIES}
    return {"vision": getattr(sample, "image", None), "text": getattr(sample, "text", None)}


def _restrict(layer: DictionaryLayer, parents) -> DictionaryLayer:
    if tuple(parents) == layer.parent_inputs:
        return layer
    idx = [layer.parent_inputs.index(p) for p in parents]
    return replace(layer,
                   kernel_stacks=tuple(layer.kernel_stacks[i] for i in idx),
                   parent_inputs=tuple(parents),
                   branch_scales=tuple(layer.branch_scales[i] for i in idx))


def _canonical(layer: DictionaryLayer) -> DictionaryLayer:
    # sum branch terms in name order so reordering parents in config is invisible
    order = sorted(layer.parent_inputs)
    return _restrict(layer, order) if len(order) > 1 else layer


def feedforward_input(layer: DictionaryLayer, states: NetworkState, parents=None):
    """Reconstruction target of ``layer``: the raw signal or the parents' dense membranes."""
    if layer.is_external:
        x = states.inputs.get(layer.branch)
        if x is None:
            raise GraphError(f"no external {layer.branch} input for layer {layer.name!r}")
        return x
    parents = layer.parent_inputs if parents is None else parents
    missing = [p for p in parents if p not in states.states]
    if missing:
        raise GraphError(f"layer {layer.name!r}: missing parent state(s) {missing}")
    us = tuple(states.states[p].u for p in parents)
    return us if layer.is_joint else us[0]


def topdown_residual(u_parent, child: DictionaryLayer, a_child, parent=None):
    """``u_parent - Phi_child a_child`` for the stack of ``child`` that reads ``parent``."""
    i = 0 if parent is None else child.parent_inputs.index(parent)
    k = child.kernel_stacks[i]
    if u_parent.shape != k.input_shape:
        raise GeometryError(f"parent membrane {u_parent.shape} does not match child input {k.input_shape}")
    return u_parent - conv_transpose(a_child, k)


def _present(graph: LayerGraph, inputs, overrides):
    present = {}
    for b in graph.modalities:
        flag = True if overrides is None else bool(overrides.get(b, True))
        present[b] = flag and inputs.get(b) is not None
    if not any(present.values()):
        raise PreconditionError("no modality branch present; nothing to infer")
    return present


def _active_plan(graph: LayerGraph, present):
    """Active layers and, for each, the subset of parents it reads."""
    plan = []
    for layer in graph.layers:
        if layer.is_joint:
            parents = [p for p in layer.parent_inputs if present.get(graph.layer(p).branch, False)]
            plan.append((layer, _canonical(_restrict(layer, parents))))
        elif present.get(layer.branch, False):
            plan.append((layer, layer))
    return plan


def solve_network(sample, graph: LayerGraph, overrides=None, n_iterations=None,
                  record_energy=True) -> NetworkState:
    """Run the coupled dynamics of every active layer on one global clock.

    ``overrides`` maps modality -> bool; a False (or a missing input) removes
    that branch's layers from the update and drops its term from the joint
    layer. All layers read the previous iteration's states.
    """
    inputs = _sample_inputs(sample)
    present = _present(graph, inputs, overrides)
    plan = _active_plan(graph, present)
    active = tuple(layer.name for layer, _ in plan)
    states = {layer.name: LayerState.zeros(layer.output_shape) for layer in graph.layers}
    traces = {name: EnergyTrace() for name in active}
    net = NetworkState(states, {b: inputs[b] for b in present if present[b]}, active, 0, traces)
    n = graph.n_iterations if n_iterations is None else int(n_iterations)
    fb_on = graph.feedback_enabled and graph.feedback_scale != 0.0
    views = {layer.name: view for layer, view in plan}
    children = {layer.name: graph.child(layer.name) for layer, _ in plan}
    for t in range(n):
        prev = net.states
        new = dict(prev)
        for layer, view in plan:
            x = feedforward_input(view, net)
            feedback = None
            child = children[layer.name]
            if fb_on and child is not None and child.name in views:
                cview = views[child.name]
                j = cview.parent_inputs.index(layer.name)
                cstate = prev[child.name]
                if cstate.recon is not None:
                    r = prev[layer.name].u - cstate.recon[j]
                else:
                    r = topdown_residual(prev[layer.name].u, cview, cstate.a, layer.name)
                s = graph.feedback_scale * cview.branch_scales[j]
                feedback = r if s == 1.0 else s * r
            st = lca_step(prev[layer.name], x, view, feedback)
            new[layer.name] = st
            if record_energy:
                traces[layer.name].append(*energy_terms(x, view, st.a, None, st.recon))
        net.states = new
        net.iteration = t + 1
    return net


def extract_code(layer_name, state: NetworkState) -> np.ndarray:
    """Sparse code ``a = T(u)`` of ``layer_name``."""
    return state[layer_name].a
