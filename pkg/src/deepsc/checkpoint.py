"""Model checkpoints and corpus caches on top of :mod:`deepsc.container`."""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import container
from .config import ModelConfig, build_graph, parse_config
from .data import Corpus, Sample
from .errors import CheckpointError, ConfigError
from .hierarchy import LayerGraph


@dataclass
class Checkpoint:
    config: ModelConfig
    graph: LayerGraph
    epochs_completed: int = 0
    inputs_seen: int = 0

    @property
    def seed(self) -> int:
        return self.config.training.seed


def checkpoint_bytes(ckpt: Checkpoint) -> bytes:
    entries = [
        ("config", ckpt.config.to_text()),
        ("progress", np.array([ckpt.epochs_completed, ckpt.inputs_seen], dtype=np.int64)),
        ("seed", np.array([ckpt.seed], dtype=np.int64)),
    ]
    for layer in ckpt.graph.layers:
        for parent, k in zip(layer.parent_inputs, layer.kernel_stacks):
            entries.append((f"kernels/{layer.name}/{parent}", k.weights))
    return container.encode(container.MAGIC_CHECKPOINT, entries)


def save_checkpoint(ckpt: Checkpoint, path):
    container.write_atomic(path, checkpoint_bytes(ckpt))


def load_checkpoint(path) -> Checkpoint:
    entries = container.read(path, container.MAGIC_CHECKPOINT)
    try:
        config = parse_config(entries["config"])
        progress = entries["progress"]
        graph = build_graph(config)
        layers = []
        for layer in graph.layers:
            weights = []
            for parent, k in zip(layer.parent_inputs, layer.kernel_stacks):
                w = entries[f"kernels/{layer.name}/{parent}"]
                if w.shape != k.weights.shape:
                    raise CheckpointError(
                        f"{path}: kernels of {layer.name!r}<-{parent!r} have shape {w.shape}, "
                        f"config implies {k.weights.shape}")
                weights.append(w)
            layers.append(layer.with_weights(weights))
    except KeyError as err:
        raise CheckpointError(f"{path}: missing entry {err}") from None
    except ConfigError as err:
        raise CheckpointError(f"{path}: embedded config invalid: {err}") from None
    graph = graph.replace_layers(layers)
    return Checkpoint(config, graph, int(progress[0]), int(progress[1]))


def corpus_bytes(corpus: Corpus) -> bytes:
    meta = {
        "labels": corpus.labels,
        "train": list(corpus.train_index),
        "test": list(corpus.test_index),
        "probes": {name: p.label for name, p in corpus.probes.items()},
    }
    entries = [("meta", json.dumps(meta, sort_keys=True))]
    if corpus.samples:
        entries.append(("images", np.stack([s.image for s in corpus.samples])))
        entries.append(("texts", np.stack([s.text for s in corpus.samples])))
    for name, p in corpus.probes.items():
        if p.image is not None:
            entries.append((f"probe/{name}/image", p.image))
        if p.text is not None:
            entries.append((f"probe/{name}/text", p.text))
    return container.encode(container.MAGIC_CORPUS, entries)


def save_corpus(corpus: Corpus, path):
    container.write_atomic(path, corpus_bytes(corpus))


def load_corpus(path) -> Corpus:
    entries = container.read(path, container.MAGIC_CORPUS)
    meta = json.loads(entries["meta"])
    samples = []
    if meta["labels"]:
        for img, txt, lab in zip(entries["images"], entries["texts"], meta["labels"]):
            samples.append(Sample(img, txt, lab))
    probes = {}
    for name, lab in meta["probes"].items():
        probes[name] = Sample(entries.get(f"probe/{name}/image"), entries.get(f"probe/{name}/text"), lab)
    return Corpus(samples, meta["train"], meta["test"], probes)
