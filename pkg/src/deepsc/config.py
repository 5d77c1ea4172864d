"""INI-style model configuration.

Sections: ``[data]`` (input shapes), ``[solver]``, ``[training]`` and one
``[layer:NAME]`` per layer, listed parents-first. Example::

    [layer:V1]
    branch = vision
    parents = external
    features = 16
    kernel = 8x8
    stride = 4
    lambda = 0.1
    nonnegative = true

``kernel = full`` makes a layer fully connected to each parent (kernel and
stride equal to the parent's spatial extent), which is how the joint layer
links parents of different sizes.
"""
from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigError, DeepSCError
from .hierarchy import LayerGraph
from .layer import BRANCHES, EXTERNAL, TRANSFERS, DictionaryLayer, LcaParams
from .learning import TrainSchedule
from .tensor import random_kernel_stack


@dataclass(frozen=True)
class LayerSpec:
    name: str
    branch: str
    parents: tuple[str, ...]
    features: int
    kernel: tuple[int, int] | None  # None means fully connected
    stride: tuple[int, int] | None
    lam: float
    nonnegative: bool = False
    transfer: str = "soft"
    branch_scales: tuple[float, ...] | None = None


@dataclass(frozen=True)
class SolverSpec:
    iterations: int = 400
    dt_over_tau: float = 0.05
    feedback_enabled: bool = True
    feedback_scale: float = 1.0


@dataclass(frozen=True)
class ModelConfig:
    layers: tuple[LayerSpec, ...]
    solver: SolverSpec = field(default_factory=SolverSpec)
    training: TrainSchedule = field(default_factory=TrainSchedule)
    image_shape: tuple[int, int, int] = (3, 64, 64)
    text_shape: tuple[int, int, int] = (1, 16, 128)

    def layer(self, name) -> LayerSpec:
        for spec in self.layers:
            if spec.name == name:
                return spec
        raise ConfigError(f"no layer {name!r} in config")

    def with_solver(self, **changes) -> "ModelConfig":
        return replace(self, solver=replace(self.solver, **changes))

    def with_training(self, **changes) -> "ModelConfig":
        return replace(self, training=replace(self.training, **changes))

    def with_layer(self, name, **changes) -> "ModelConfig":
        self.layer(name)
        return replace(self, layers=tuple(replace(s, **changes) if s.name == name else s for s in self.layers))

    def to_text(self) -> str:
        """Canonical serialization; parsing it back gives an equal config."""
        out = io.StringIO()
        out.write("[data]\n")
        out.write(f"image_shape = {_fmt_shape(self.image_shape)}\n")
        out.write(f"text_shape = {_fmt_shape(self.text_shape)}\n\n")
        s = self.solver
        out.write("[solver]\n")
        out.write(f"iterations = {s.iterations}\n")
        out.write(f"dt_over_tau = {s.dt_over_tau!r}\n")
        out.write(f"feedback_enabled = {str(s.feedback_enabled).lower()}\n")
        out.write(f"feedback_scale = {s.feedback_scale!r}\n\n")
        t = self.training
        out.write("[training]\n")
        out.write(f"epochs = {t.epochs}\n")
        out.write(f"learning_rate = {t.learning_rate!r}\n")
        out.write(f"update_every = {t.update_every}\n")
        out.write(f"seed = {t.seed}\n")
        for spec in self.layers:
            out.write(f"\n[layer:{spec.name}]\n")
            out.write(f"branch = {spec.branch}\n")
            out.write(f"parents = {', '.join(spec.parents)}\n")
            out.write(f"features = {spec.features}\n")
            if spec.kernel is None:
                out.write("kernel = full\n")
            else:
                out.write(f"kernel = {spec.kernel[0]}x{spec.kernel[1]}\n")
                out.write(f"stride = {spec.stride[0]}x{spec.stride[1]}\n")
            out.write(f"lambda = {spec.lam!r}\n")
            out.write(f"nonnegative = {str(spec.nonnegative).lower()}\n")
            out.write(f"transfer = {spec.transfer}\n")
            if spec.branch_scales is not None:
                out.write(f"branch_scales = {', '.join(repr(v) for v in spec.branch_scales)}\n")
        return out.getvalue()


def _fmt_shape(shape):
    return "x".join(str(v) for v in shape)


def _where(section, key):
    return f"[{section}] {key}"


def _get(sec, section, key, conv, default=None, required=False):
    if key not in sec:
        if required:
            raise ConfigError(f"{_where(section, key)}: missing required field")
        return default
    raw = sec[key].strip()
    try:
        return conv(raw)
    except (ValueError, TypeError) as err:
        raise ConfigError(f"{_where(section, key)}: invalid value {raw!r} ({err})") from None


def _bool(raw):
    v = raw.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true/false")


def _dims(n):
    def conv(raw):
        parts = [int(p) for p in raw.lower().replace(",", "x").split("x") if p.strip()]
        if len(parts) == 1 and n == 2:
            parts = parts * 2
        if len(parts) != n or min(parts) < 1:
            raise ValueError(f"expected {n} positive integers like {'x'.join(['4'] * n)}")
        return tuple(parts)
    return conv


def _positive_int(raw):
    v = int(raw)
    if v < 1:
        raise ValueError("must be >= 1")
    return v


def _nonneg_int(raw):
    v = int(raw)
    if v < 0:
        raise ValueError("must be >= 0")
    return v


def _floats(raw):
    return tuple(float(p) for p in raw.split(","))


def parse_config(text: str) -> ModelConfig:
    """Parse and validate; raises :class:`ConfigError` naming the offending field."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as err:
        raise ConfigError(f"config syntax error: {err}") from None
    known = {"data", "solver", "training"}
    for name in cp.sections():
        if name not in known and not name.startswith("layer:"):
            raise ConfigError(f"unknown section [{name}]")
    data = cp["data"] if cp.has_section("data") else {}
    image_shape = _get(data, "data", "image_shape", _dims(3), (3, 64, 64))
    text_shape = _get(data, "data", "text_shape", _dims(3), (1, 16, 128))
    sv = cp["solver"] if cp.has_section("solver") else {}
    solver = SolverSpec(
        iterations=_get(sv, "solver", "iterations", _positive_int, 400),
        dt_over_tau=_get(sv, "solver", "dt_over_tau", float, 0.05),
        feedback_enabled=_get(sv, "solver", "feedback_enabled", _bool, True),
        feedback_scale=_get(sv, "solver", "feedback_scale", float, 1.0),
    )
    if not 0 < solver.dt_over_tau <= 1:
        raise ConfigError(f"[solver] dt_over_tau: must lie in (0, 1], got {solver.dt_over_tau}")
    if solver.feedback_scale < 0:
        raise ConfigError(f"[solver] feedback_scale: must be >= 0, got {solver.feedback_scale}")
    tr = cp["training"] if cp.has_section("training") else {}
    lr = _get(tr, "training", "learning_rate", float, 0.01)
    if not lr >= 0:
        raise ConfigError(f"[training] learning_rate: must be >= 0, got {lr}")
    training = TrainSchedule(
        epochs=_get(tr, "training", "epochs", _nonneg_int, 3),
        learning_rate=lr,
        update_every=_get(tr, "training", "update_every", _positive_int, 1),
        seed=_get(tr, "training", "seed", int, 0),
    )
    layers = []
    for section in cp.sections():
        if not section.startswith("layer:"):
            continue
        name = section.split(":", 1)[1].strip()
        sec = cp[section]
        where = f"[{section}]"
        if not name:
            raise ConfigError(f"{where}: empty layer name")
        branch = _get(sec, section, "branch", str, required=True)
        if branch not in BRANCHES:
            raise ConfigError(f"{where} branch: layer {name!r} has unknown branch {branch!r}; expected {BRANCHES}")
        parents = _get(sec, section, "parents", lambda r: tuple(p.strip() for p in r.split(",") if p.strip()),
                       required=True)
        kernel_raw = _get(sec, section, "kernel", str, required=True)
        if kernel_raw.lower() == "full":
            kernel = stride = None
            if "stride" in sec:
                raise ConfigError(f"{where} stride: layer {name!r} uses kernel = full, which fixes the stride")
        else:
            kernel = _get(sec, section, "kernel", _dims(2))
            stride = _get(sec, section, "stride", _dims(2), (1, 1))
        transfer = _get(sec, section, "transfer", str, "soft")
        if transfer not in TRANSFERS:
            raise ConfigError(f"{where} transfer: layer {name!r} has unknown transfer {transfer!r}")
        lam = _get(sec, section, "lambda", float, required=True)
        if not lam >= 0:
            raise ConfigError(f"{where} lambda: layer {name!r} needs lambda >= 0, got {lam}")
        layers.append(LayerSpec(
            name=name, branch=branch, parents=parents,
            features=_get(sec, section, "features", _positive_int, required=True),
            kernel=kernel, stride=stride, lam=lam,
            nonnegative=_get(sec, section, "nonnegative", _bool, False),
            transfer=transfer,
            branch_scales=_get(sec, section, "branch_scales", _floats, None),
        ))
    if not layers:
        raise ConfigError("config defines no [layer:NAME] sections")
    config = ModelConfig(tuple(layers), solver, training, image_shape, text_shape)
    # geometry and topology are validated by building a graph once
    build_graph(config)
    return config


def load_config(path_or_name) -> ModelConfig:
    """Read a config file, or a bundled config by name (``toy``, ``faces``)."""
    p = Path(str(path_or_name))
    if p.exists():
        return parse_config(p.read_text(encoding="utf-8"))
    name = str(path_or_name)
    bundled = resources.files("deepsc") / "configs" / f"{name.removesuffix('.cfg')}.cfg"
    if bundled.is_file():
        return parse_config(bundled.read_text(encoding="utf-8"))
    raise ConfigError(f"config not found: {path_or_name}")


def _input_shape(config, spec, parent, shapes):
    if parent == EXTERNAL:
        if spec.branch == "vision":
            return config.image_shape
        if spec.branch == "text":
            return config.text_shape
        raise ConfigError(f"[layer:{spec.name}] parents: joint layer {spec.name!r} cannot read external input")
    if parent not in shapes:
        raise ConfigError(
            f"[layer:{spec.name}] parents: layer {spec.name!r} reads {parent!r}, which is undefined or listed later")
    return shapes[parent]


def build_graph(config: ModelConfig, seed=None) -> LayerGraph:
    """Instantiate the graph with seeded unit-norm Gaussian kernels."""
    rng = np.random.default_rng(config.training.seed if seed is None else seed)
    shapes = {}
    layers = []
    for spec in config.layers:
        params = LcaParams(spec.lam, config.solver.dt_over_tau, config.solver.iterations,
                           spec.nonnegative, spec.transfer)
        stacks = []
        for parent in spec.parents:
            in_shape = _input_shape(config, spec, parent, shapes)
            if spec.kernel is None:
                kernel = stride = in_shape[1:]
            else:
                kernel, stride = spec.kernel, spec.stride
            try:
                stacks.append(random_kernel_stack(rng, spec.features, in_shape, kernel, stride))
            except DeepSCError as err:
                raise ConfigError(f"[layer:{spec.name}] kernel/stride: layer {spec.name!r}: {err}") from None
        try:
            layer = DictionaryLayer(spec.name, tuple(stacks), params, spec.parents, spec.branch,
                                    spec.branch_scales)
        except DeepSCError as err:
            raise ConfigError(f"[layer:{spec.name}]: {err}") from None
        shapes[spec.name] = layer.output_shape
        layers.append(layer)
    try:
        return LayerGraph(tuple(layers), config.solver.feedback_enabled, config.solver.feedback_scale)
    except DeepSCError as err:
        raise ConfigError(f"graph: {err}") from None


