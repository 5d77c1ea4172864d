"""Hierarchical, multimodal convolutional sparse coding solved with the LCA."""
from .errors import (CheckpointError, ConfigError, DeepSCError, GeometryError, GraphError, IngestionError,
                     NumericDivergenceError, PreconditionError, RenderError)
from .kernels import get_backend, set_backend
from .tensor import KernelStack, random_kernel_stack
from .layer import DictionaryLayer, LcaParams
from .lca import LayerState, energy, lca_step, solve_single_layer, threshold
from .hierarchy import LayerGraph, NetworkState, solve_network
from .learning import TrainSchedule, train
from .data import Corpus, Sample, generate_synthetic_faces, generate_toy_corpus, render_text
from .config import build_graph, load_config, parse_config
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint

__version__ = "0.1.0"
