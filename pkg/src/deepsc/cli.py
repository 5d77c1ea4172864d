"""Command-line entry point: ``deepsc <verb> ...``.

Exit codes: 0 success, 2 usage/config/input error, 3 numeric divergence.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

import numpy as np

from . import analysis, kernels
from .checkpoint import Checkpoint, load_checkpoint, load_corpus, save_checkpoint, save_corpus
from .config import build_graph, load_config
from .data import (Sample, generate_synthetic_faces, generate_toy_corpus, load_image, load_image_corpus,
                   render_text, save_png, write_corpus_images)
from .errors import DeepSCError, NumericDivergenceError
from .hierarchy import solve_network
from .learning import train

logger = logging.getLogger("deepsc")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3


class UsageError(DeepSCError):
    pass


def _set_threads(n):
    if n and kernels.get_backend() == "numba":
        import numba
        numba.set_num_threads(int(n))


# corpus specs ----------------------------------------------------------------

def _add_corpus_args(p, required=False):
    g = p.add_argument_group("corpus")
    g.add_argument("--toy-seed", type=int, help="generate the B/13 toy corpus with this seed")
    g.add_argument("--faces", metavar="CLASSES:PER_CLASS[:MULT]",
                   help="generate synthetic faces; class 0 is repeated MULT times (seed from --seed)")
    g.add_argument("--corpus", type=Path, help="corpus cache file written by toy-gen/faces-gen")
    g.add_argument("--manifest", type=Path, help="image manifest (path<TAB>label per line)")
    g.add_argument("--image-dir", type=Path, help="root for manifest paths (default: manifest's directory)")
    p.set_defaults(_corpus_required=required)


def _parse_faces(spec):
    parts = spec.split(":")
    if len(parts) not in (2, 3):
        raise UsageError(f"--faces expects CLASSES:PER_CLASS[:MULT], got {spec!r}")
    try:
        vals = [int(v) for v in parts]
    except ValueError:
        raise UsageError(f"--faces expects integers, got {spec!r}") from None
    mult = vals[2] if len(vals) == 3 else 1
    return vals[0], vals[1], mult


def _resolve_corpus(args, config=None):
    shape = config.image_shape if config is not None else None
    chosen = [n for n in ("toy_seed", "faces", "corpus", "manifest") if getattr(args, n, None) is not None]
    if len(chosen) > 1:
        raise UsageError(f"choose one corpus source, got {chosen}")
    if not chosen:
        if getattr(args, "_corpus_required", False):
            raise UsageError("a corpus is required (--toy-seed, --faces, --corpus or --manifest)")
        return None
    if args.toy_seed is not None:
        return generate_toy_corpus(args.toy_seed)
    if args.faces is not None:
        n, per, mult = _parse_faces(args.faces)
        kw = {"shape": shape} if shape is not None else {}
        return generate_synthetic_faces(n, per, {0: mult}, seed=args.seed or 0, **kw)
    if args.corpus is not None:
        return load_corpus(args.corpus)
    root = args.image_dir or args.manifest.parent
    kw = {"shape": shape} if shape is not None else {}
    return load_image_corpus(root, args.manifest, seed=args.seed or 0, **kw)


def _split(corpus, which):
    return {"train": corpus.train, "test": corpus.test, "all": list(corpus.samples)}[which]


# verbs -------------------------------------------------------------------------

def cmd_toy_gen(args):
    corpus = generate_toy_corpus(args.seed or 0)
    return _write_corpus(corpus, args.out)


def cmd_faces_gen(args):
    mult = 1
    idx = 0
    if args.overrepresent:
        try:
            idx, mult = (int(v) for v in args.overrepresent.split(":"))
        except ValueError:
            raise UsageError(f"--overrepresent expects INDEX:MULT, got {args.overrepresent!r}") from None
    corpus = generate_synthetic_faces(args.classes, args.per_class, {idx: mult}, seed=args.seed or 0)
    return _write_corpus(corpus, args.out)


def _write_corpus(corpus, out):
    if out is None:
        raise UsageError("--out DIR is required")
    out = Path(out)
    manifest = write_corpus_images(corpus, out)
    save_corpus(corpus, out / "corpus.dsc")
    print(f"wrote {len(corpus)} samples: {manifest} and {out / 'corpus.dsc'}")
    print("class_counts " + " ".join(f"{k}={v}" for k, v in sorted(corpus.class_counts.items())))
    return EXIT_OK


def cmd_train(args):
    config = load_config(args.config)
    if args.epochs is not None:
        config = config.with_training(epochs=args.epochs)
    if args.seed is not None and args.toy_seed is None and args.faces is None:
        config = config.with_training(seed=args.seed)
    corpus = _resolve_corpus(args, config)
    if args.out is None:
        raise UsageError("--out CHECKPOINT is required")
    graph = build_graph(config)
    updates = 0

    def count(*_):
        nonlocal updates
        updates += 1

    trained, log = train(corpus.train, graph, config.training, on_update=count)
    ckpt = Checkpoint(config, trained, config.training.epochs, config.training.epochs * len(corpus.train))
    save_checkpoint(ckpt, args.out)
    metrics = Path(args.metrics) if args.metrics else Path(str(args.out) + ".metrics.csv")
    log.to_csv(metrics)
    print(f"trained {config.training.epochs} epoch(s) on {len(corpus.train)} samples, {updates} updates")
    print(f"checkpoint {args.out}")
    print(f"metrics {metrics}")
    return EXIT_OK


def _query_sample(args, corpus, ckpt):
    config = ckpt.config
    image = text = None
    label = "query"
    if args.sample is not None:
        if corpus is None:
            raise UsageError("--sample needs a corpus")
        if args.sample in corpus.probes:
            base = corpus.probes[args.sample]
        else:
            try:
                base = corpus.samples[int(args.sample)]
            except (ValueError, IndexError):
                raise UsageError(f"unknown sample {args.sample!r}") from None
        image, text, label = base.image, base.text, base.label
    if args.image is not None:
        image = load_image(args.image, config.image_shape)
    if args.text is not None:
        text = render_text(args.text)
    if args.text_image is not None:
        text = load_image(args.text_image, config.text_shape)
    if image is not None and image.shape != tuple(config.image_shape):
        raise UsageError(f"image shape {image.shape} does not match model input {config.image_shape}")
    if getattr(args, "no_image", False):
        image = None
    if getattr(args, "no_text", False):
        text = None
    return Sample(image, text, label)


def cmd_infer(args):
    if args.no_image and args.no_text:
        raise UsageError("--no-image and --no-text leave nothing to infer")
    ckpt = load_checkpoint(args.checkpoint)
    graph = ckpt.graph.with_feedback(False) if args.no_feedback else ckpt.graph
    corpus = _resolve_corpus(args, ckpt.config)
    sample = _query_sample(args, corpus, ckpt)
    if sample.image is None and sample.text is None:
        raise UsageError("no input modality given (use --image/--text or --sample)")
    net = solve_network(sample, graph)
    for name in graph.names:
        if name not in net.active:
            print(f"layer {name} inactive")
            continue
        tr = net.traces[name]
        print(f"layer {name} sparsity={analysis.sparsity_fraction(net[name].a):.6f} "
              f"energy={tr[-1]:.6f} recon={tr.reconstruction[-1]:.6f}")
    if args.centroids:
        if corpus is None:
            raise UsageError("--centroids needs a corpus for the class centres")
        overrides = {m: getattr(sample, a) is not None for m, a in (("vision", "image"), ("text", "text"))}
        train_samples = corpus.train
        layers = [n for n in graph.names if n in net.active]
        codes = analysis.encode(graph, train_samples, layers, overrides)
        labels = [s.label for s in train_samples]
        for name in layers:
            lab, dist = analysis.nearest_centroid(analysis.group_by_label(codes[name], labels), net[name].a)
            ds = " ".join(f"{k}={v:.6f}" for k, v in dist.items())
            print(f"centroid {name} {ds} -> {lab}")
    if args.codes:
        with open(args.codes, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["layer", "index", "u", "a"])
            for name in net.active:
                st = net[name]
                for i, (u, a) in enumerate(zip(st.u.ravel(), st.a.ravel())):
                    w.writerow([name, i, repr(float(u)), repr(float(a))])
    if args.energy:
        out = Path(args.energy)
        out.mkdir(parents=True, exist_ok=True)
        for name in net.active:
            net.traces[name].to_csv(out / f"energy_{name}.csv")
    return EXIT_OK


def cmd_analyze(args):
    ckpt = load_checkpoint(args.checkpoint)
    graph = ckpt.graph
    corpus = _resolve_corpus(args, ckpt.config)
    samples = _split(corpus, args.split)
    layer = args.layer or graph.top.name
    graph.layer(layer)
    out = Path(args.out) if args.out else None
    if args.what == "sparsity":
        fractions = {name: [] for name in graph.names}
        for s in samples:
            net = solve_network(s, graph, record_energy=False)
            for name in net.active:
                fractions[name].append(analysis.sparsity_fraction(net[name].a))
        for name, v in fractions.items():
            if v:
                print(f"sparsity {name} {float(np.mean(v)):.6f}")
        return EXIT_OK
    if args.what == "export":
        if out is None:
            raise UsageError("--out FILE is required")
        n = analysis.export_features(graph, samples, layer, out)
        print(f"exported {n} rows to {out}")
        return EXIT_OK
    if args.what == "activations":
        if out is None:
            raise UsageError("--out FILE is required")
        labels = sorted({s.label for s in samples})
        with open(out, "w", newline="") as fh:
            w = csv.writer(fh)
            rows = []
            for lab in labels:
                sub = [s for s in samples if s.label == lab]
                rows.append([lab] + [repr(float(v)) for v in analysis.class_average_activation(graph, sub, layer)])
            w.writerow(["label"] + [f"n{i}" for i in range(len(rows[0]) - 1)])
            w.writerows(rows)
        print(f"wrote per-class mean activations of {layer} to {out}")
        return EXIT_OK
    if args.what == "ata":
        if args.neuron is None or out is None:
            raise UsageError("ata needs --neuron N and --out DIR")
        image, text = analysis.activity_triggered_average(graph, samples, layer, args.neuron)
        out.mkdir(parents=True, exist_ok=True)
        for kind, arr in (("image", image), ("text", text)):
            if arr is not None:
                peak = float(arr.max()) if arr.size else 0.0
                save_png(arr / peak if peak > 0 else arr, out / f"ata_{layer}_n{args.neuron}_{kind}.png")
        print(f"wrote activity-triggered averages for {layer} neuron {args.neuron} to {out}")
        return EXIT_OK
    if args.what == "invariants":
        if args.target is None:
            raise UsageError("invariants needs --target LABEL")
        hits = analysis.find_invariant_neurons(graph, samples, args.target, args.ratio, layer)
        for p in hits:
            print(f"neuron {p.neuron} vision={p.selectivity('vision'):.4f} text={p.selectivity('text'):.4f}")
        print(f"{len(hits)} neuron(s) with selectivity >= {args.ratio} on both modalities")
        if out is not None:
            with open(out, "w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["neuron", "vision_selectivity", "text_selectivity"])
                for p in hits:
                    w.writerow([p.neuron, repr(p.selectivity("vision")), repr(p.selectivity("text"))])
        return EXIT_OK
    raise UsageError(f"unknown analysis {args.what!r}")


def cmd_generate(args):
    ckpt = load_checkpoint(args.checkpoint)
    corpus = _resolve_corpus(args, ckpt.config)
    sample = _query_sample(args, corpus, ckpt)
    given = [m for m, v in (("vision", sample.image), ("text", sample.text)) if v is not None]
    if len(given) != 1:
        raise UsageError(f"generate needs exactly one modality, got {len(given)}")
    if args.out is None:
        raise UsageError("--out DIR is required")
    result = analysis.generate_missing_modality(ckpt.graph, sample)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = {"vision": "image", "text": "text"}
    for m, arr in result.generated.items():
        path = out / f"generated_{names[m]}.png"
        save_png(arr, path)
        print(f"generated {names[m]} {path}")
    for m, arr in result.reconstructions.items():
        path = out / f"reconstruction_{names[m]}.png"
        save_png(arr, path)
        print(f"reconstruction {names[m]} {path}")
    return EXIT_OK


# parser ------------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, help="random seed")
    common.add_argument("--threads", type=int, help="numba worker threads")
    common.add_argument("--out", help="output file or directory")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="deepsc", description="Hierarchical multimodal sparse coding")
    sub = p.add_subparsers(dest="verb", required=True)

    s = sub.add_parser("toy-gen", parents=[common], help="write the B/13 toy corpus")
    s.set_defaults(func=cmd_toy_gen)

    s = sub.add_parser("faces-gen", parents=[common], help="write a synthetic faces corpus")
    s.add_argument("--classes", type=int, default=10)
    s.add_argument("--per-class", type=int, default=20)
    s.add_argument("--overrepresent", metavar="INDEX:MULT", default="0:5")
    s.set_defaults(func=cmd_faces_gen)

    s = sub.add_parser("train", parents=[common], help="learn dictionaries")
    s.add_argument("--config", required=True, help="config file or bundled name (toy, faces)")
    s.add_argument("--epochs", type=int, help="override [training] epochs")
    s.add_argument("--metrics", help="metrics CSV (default: <out>.metrics.csv)")
    _add_corpus_args(s, required=True)
    s.set_defaults(func=cmd_train)

    def add_query(s):
        s.add_argument("--checkpoint", required=True)
        s.add_argument("--image", type=Path, help="image PNG")
        s.add_argument("--text", help="name to render as the text modality")
        s.add_argument("--text-image", type=Path, help="pre-rendered text PNG")
        s.add_argument("--sample", help="corpus sample index or probe name (e.g. ambiguous)")
        _add_corpus_args(s)

    s = sub.add_parser("infer", parents=[common], help="run inference on one input")
    add_query(s)
    s.add_argument("--no-image", action="store_true")
    s.add_argument("--no-text", action="store_true")
    s.add_argument("--no-feedback", action="store_true")
    s.add_argument("--centroids", action="store_true", help="print distances to class centroids of the train split")
    s.add_argument("--codes", help="write u/a of every active layer to this CSV")
    s.add_argument("--energy", help="directory for per-layer energy CSVs")
    s.set_defaults(func=cmd_infer)

    s = sub.add_parser("analyze", parents=[common], help="analyses over a corpus")
    s.add_argument("what", choices=["activations", "ata", "invariants", "export", "sparsity"])
    s.add_argument("--checkpoint", required=True)
    s.add_argument("--layer")
    s.add_argument("--neuron", type=int)
    s.add_argument("--target")
    s.add_argument("--ratio", type=float, default=2.0)
    s.add_argument("--split", choices=["train", "test", "all"], default="all")
    _add_corpus_args(s, required=True)
    s.set_defaults(func=cmd_analyze)

    s = sub.add_parser("generate", parents=[common], help="generate the missing modality")
    add_query(s)
    s.add_argument("--no-image", action="store_true")
    s.add_argument("--no-text", action="store_true")
    s.set_defaults(func=cmd_generate)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _set_threads(args.threads)
    try:
        return args.func(args)
    except NumericDivergenceError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DeepSCError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
