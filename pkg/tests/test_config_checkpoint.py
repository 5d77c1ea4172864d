import numpy as np
import pytest

from deepsc import container
from deepsc.checkpoint import (Checkpoint, checkpoint_bytes, load_checkpoint, load_corpus, save_checkpoint,
                               save_corpus)
from deepsc.config import build_graph, load_config, parse_config
from deepsc.data import generate_toy_corpus
from deepsc.errors import CheckpointError, ConfigError

SMALL = """
[data]
image_shape = 1x8x8
text_shape = 1x16x128

[solver]
iterations = 5

[training]
epochs = 1
seed = 4

[layer:V1]
branch = vision
parents = external
features = 3
kernel = 4x4
stride = 2
lambda = 0.1

[layer:T1]
branch = text
parents = external
features = 2
kernel = 8
stride = 8
lambda = 0.1

[layer:P1]
branch = joint
parents = V1, T1
features = 5
kernel = full
lambda = 0.2
branch_scales = 1.0, 2.0
"""


def test_bundled_configs_build():
    for name in ("toy", "faces"):
        cfg = load_config(name)
        g = build_graph(cfg)
        assert g.joint is not None
        for layer in g.layers:
            np.testing.assert_allclose(layer.kernel_norms(), 1.0, atol=1e-12)


def test_canonical_text_round_trip():
    cfg = parse_config(SMALL)
    assert parse_config(cfg.to_text()) == cfg
    assert parse_config(cfg.to_text()).to_text() == cfg.to_text()
    g = build_graph(cfg)
    assert g.layer("P1").kernel_stacks[1].kernel_size == (2, 16)
    assert g.layer("P1").branch_scales == (1.0, 2.0)


def test_seeded_init():
    cfg = parse_config(SMALL)
    a, b = build_graph(cfg), build_graph(cfg)
    c = build_graph(cfg, seed=5)
    assert a.layer("V1").kernel_stack.weights.tobytes() == b.layer("V1").kernel_stack.weights.tobytes()
    assert a.layer("V1").kernel_stack.weights.tobytes() != c.layer("V1").kernel_stack.weights.tobytes()


@pytest.mark.parametrize("old,new,where", [
    ("stride = 2\n", "stride = 3\n", "[layer:V1] kernel/stride"),
    ("lambda = 0.2", "lambda = -1", "[layer:P1] lambda"),
    ("features = 3", "features = zero", "[layer:V1] features"),
    ("parents = V1, T1", "parents = V1", "[layer:P1]"),
    ("iterations = 5", "iterations = 0", "[solver] iterations"),
    ("branch = joint", "branch = smell", "[layer:P1] branch"),
    ("parents = V1, T1", "parents = V1, Q9", "[layer:P1] parents"),
])
def test_config_errors_name_field(old, new, where):
    with pytest.raises(ConfigError) as info:
        parse_config(SMALL.replace(old, new, 1))
    assert where in str(info.value)


def test_missing_config():
    with pytest.raises(ConfigError, match="not found"):
        load_config("/nonexistent/file.cfg")


def test_checkpoint_round_trip(tmp_path):
    cfg = parse_config(SMALL)
    ckpt = Checkpoint(cfg, build_graph(cfg), 2, 40)
    save_checkpoint(ckpt, tmp_path / "a.ckpt")
    loaded = load_checkpoint(tmp_path / "a.ckpt")
    assert loaded.epochs_completed == 2 and loaded.inputs_seen == 40 and loaded.seed == 4
    save_checkpoint(loaded, tmp_path / "b.ckpt")
    assert (tmp_path / "a.ckpt").read_bytes() == (tmp_path / "b.ckpt").read_bytes()
    assert checkpoint_bytes(loaded) == checkpoint_bytes(ckpt)


def test_checkpoint_corruption(tmp_path):
    cfg = parse_config(SMALL)
    data = checkpoint_bytes(Checkpoint(cfg, build_graph(cfg)))
    (tmp_path / "t.ckpt").write_bytes(data[:-7])
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "t.ckpt")
    (tmp_path / "m.ckpt").write_bytes(b"XXXX" + data[4:])
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(tmp_path / "m.ckpt")
    with pytest.raises(CheckpointError):
        load_checkpoint(tmp_path / "absent.ckpt")


def test_container_kinds():
    data = container.encode(b"TEST", [("t", "héllo"), ("f", np.arange(6.0).reshape(2, 3)),
                                      ("i", np.array([1, -2], dtype=np.int64))])
    out = container.decode(data, b"TEST")
    assert out["t"] == "héllo"
    np.testing.assert_array_equal(out["f"], np.arange(6.0).reshape(2, 3))
    assert out["i"].dtype == np.int64 and out["i"].tolist() == [1, -2]


def test_corpus_cache_round_trip(tmp_path):
    c = generate_toy_corpus(1, n_per_class=4)
    save_corpus(c, tmp_path / "c.dsc")
    d = load_corpus(tmp_path / "c.dsc")
    assert d.labels == c.labels and d.train_index == c.train_index
    assert all(a.image.tobytes() == b.image.tobytes() for a, b in zip(c, d))
    assert d.probes["ambiguous"].image.tobytes() == c.probes["ambiguous"].image.tobytes()
    assert d.probes["ambiguous"].text is None
