"""Solver parameters and the single sparse-coding layer."""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import GeometryError, PreconditionError
from .tensor import KernelStack

EXTERNAL = "external"
BRANCHES = ("vision", "text", "joint")
TRANSFERS = ("soft", "hard")


@dataclass(frozen=True)
class LcaParams:
    """Per-layer LCA settings.

    ``lam`` is the threshold, ``dt_over_tau`` the Euler step in units of the
    membrane time constant. ``transfer`` picks the soft (L1) or hard threshold.
    """

    lam: float = 0.1
    dt_over_tau: float = 0.05
    n_iterations: int = 400
    nonnegative: bool = False
    transfer: str = "soft"

    def __post_init__(self):
        if not self.lam >= 0:
            raise PreconditionError(f"lambda must be >= 0, got {self.lam}")
        if not 0 < self.dt_over_tau <= 1:
            raise PreconditionError(f"dt_over_tau must lie in (0, 1], got {self.dt_over_tau}")
        if int(self.n_iterations) < 1:
            raise PreconditionError(f"n_iterations must be >= 1, got {self.n_iterations}")
        if self.transfer not in TRANSFERS:
            raise PreconditionError(f"transfer must be one of {TRANSFERS}, got {self.transfer!r}")


@dataclass(frozen=True)
class DictionaryLayer:
    """One sparse-coding layer.

    A layer owns one kernel stack per entry of ``parent_inputs``. Branch layers
    have a single parent (another layer, or ``"external"`` for the raw signal);
    the joint layer has one stack per modality branch, all decoding the same
    activation map.
    """

    name: str
    kernel_stacks: tuple[KernelStack, ...]
    params: LcaParams = field(default_factory=LcaParams)
    parent_inputs: tuple[str, ...] = (EXTERNAL,)
    branch: str = "vision"
    branch_scales: tuple[float, ...] | None = None

    def __post_init__(self):
        stacks = tuple(self.kernel_stacks)
        parents = tuple(self.parent_inputs)
        if not stacks:
            raise GeometryError(f"layer {self.name!r} has no kernel stacks")
        if len(stacks) != len(parents):
            raise GeometryError(
                f"layer {self.name!r}: {len(stacks)} kernel stacks for {len(parents)} parent inputs")
        out = stacks[0].output_shape
        for k in stacks[1:]:
            if k.output_shape != out:
                raise GeometryError(
                    f"layer {self.name!r}: kernel stacks disagree on output shape "
                    f"({out} vs {k.output_shape})")
        scales = (1.0,) * len(stacks) if self.branch_scales is None else tuple(map(float, self.branch_scales))
        if len(scales) != len(stacks):
            raise GeometryError(f"layer {self.name!r}: {len(scales)} branch scales for {len(stacks)} stacks")
        object.__setattr__(self, "kernel_stacks", stacks)
        object.__setattr__(self, "parent_inputs", parents)
        object.__setattr__(self, "branch_scales", scales)

    @classmethod
    def single(cls, name, kernel_stack, params=None, parent=EXTERNAL, branch="vision"):
        return cls(name, (kernel_stack,), params or LcaParams(), (parent,), branch)

    @property
    def kernel_stack(self) -> KernelStack:
        if len(self.kernel_stacks) != 1:
            raise GeometryError(f"layer {self.name!r} has {len(self.kernel_stacks)} kernel stacks")
        return self.kernel_stacks[0]

    @property
    def is_external(self) -> bool:
        return self.parent_inputs == (EXTERNAL,)

    @property
    def is_joint(self) -> bool:
        return self.branch == "joint"

    @property
    def output_shape(self) -> tuple[int, int, int]:
        return self.kernel_stacks[0].output_shape

    @property
    def input_shapes(self) -> tuple[tuple[int, int, int], ...]:
        return tuple(k.input_shape for k in self.kernel_stacks)

    def with_weights(self, weights) -> "DictionaryLayer":
        stacks = tuple(k.with_weights(w) for k, w in zip(self.kernel_stacks, weights))
        return replace(self, kernel_stacks=stacks)

    def with_params(self, **changes) -> "DictionaryLayer":
        return replace(self, params=replace(self.params, **changes))

    def kernel_norms(self) -> np.ndarray:
        return np.concatenate([k.norms() for k in self.kernel_stacks])
