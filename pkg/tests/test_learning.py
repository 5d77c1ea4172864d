import numpy as np
import pytest

from deepsc.errors import PreconditionError
from deepsc.layer import DictionaryLayer, LcaParams
from deepsc.lca import energy, solve_single_layer
from deepsc.learning import (MetricsLog, TrainSchedule, apply_update, dictionary_gradient, epoch_order, train)
from deepsc.hierarchy import LayerGraph
from deepsc.tensor import conv_transpose, random_kernel_stack

from conftest import small_graph, small_sample


def _layer(rng, lam=0.05, iterations=60):
    return DictionaryLayer.single("L", random_kernel_stack(rng, 4, (1, 8, 8), 4, 2),
                                  LcaParams(lam=lam, n_iterations=iterations, nonnegative=True))


def test_zero_residual_and_zero_code_give_zero_gradient(rng):
    layer = _layer(rng)
    a = rng.random(layer.output_shape)
    x = conv_transpose(a, layer.kernel_stack)
    assert not np.any(dictionary_gradient(x, a, layer)[0])
    assert not np.any(dictionary_gradient(rng.random((1, 8, 8)), np.zeros(layer.output_shape), layer)[0])


def _fd_check(rng, layer, x, a):
    grads = dictionary_gradient(x, a, layer)
    h = 1e-5
    for s, (k, g) in enumerate(zip(layer.kernel_stacks, grads)):
        fd = np.empty_like(g)
        for idx in np.ndindex(*k.weights.shape):
            w = [kk.weights.copy() for kk in layer.kernel_stacks]
            w[s][idx] += h
            ep = energy(x, layer.with_weights(w), a, 0.0)
            w[s][idx] -= 2 * h
            em = energy(x, layer.with_weights(w), a, 0.0)
            fd[idx] = (ep - em) / (2 * h)
        np.testing.assert_allclose(g, fd, rtol=1e-4, atol=1e-4 * np.max(np.abs(fd)))


def test_gradient_matches_finite_differences(rng):
    layer = _layer(rng)
    _fd_check(rng, layer, rng.random((1, 8, 8)), rng.random(layer.output_shape))


def test_joint_gradient_matches_finite_differences(rng):
    g = small_graph()
    p1 = g.layer("P1")
    p1 = DictionaryLayer(p1.name, p1.kernel_stacks, p1.params, p1.parent_inputs, "joint", (1.0, 3.0))
    x = tuple(rng.standard_normal(k.input_shape) for k in p1.kernel_stacks)
    _fd_check(rng, p1, x, rng.random(p1.output_shape))


def test_zero_gradient_leaves_kernels(rng):
    layer = _layer(rng)
    assert apply_update(layer, np.zeros_like(layer.kernel_stack.weights), 0.1) is layer
    assert apply_update(layer, np.ones_like(layer.kernel_stack.weights), 0.0) is layer


def test_update_keeps_unit_norm(rng):
    layer = _layer(rng)
    for _ in range(5):
        layer = apply_update(layer, 10 * rng.standard_normal(layer.kernel_stack.weights.shape), 0.5)
        np.testing.assert_allclose(layer.kernel_norms(), 1.0, atol=1e-12)


def test_update_shape_checked(rng):
    layer = _layer(rng)
    with pytest.raises(PreconditionError):
        apply_update(layer, np.ones((1, 1, 1, 1)), 0.1)


def test_learning_lowers_inference_energy(rng):
    # signals drawn from a hidden dictionary; 50 updates should fit it better than a random start
    truth = random_kernel_stack(rng, 4, (1, 8, 8), 4, 2)
    data = [conv_transpose(np.maximum(rng.standard_normal(truth.output_shape) - 1.0, 0), truth) for _ in range(10)]
    layer = _layer(np.random.default_rng(99), lam=0.02, iterations=80)

    def mean_energy(lay):
        return np.mean([solve_single_layer(x, lay)[1][-1] for x in data])

    before = mean_energy(layer)
    graph = LayerGraph((DictionaryLayer.single("L", layer.kernel_stack, layer.params),))
    trained, log = train([{"vision": x} for x in data], graph, TrainSchedule(epochs=5, learning_rate=0.05))
    assert len(log.rows) == 50
    assert mean_energy(trained.layer("L")) < before


def test_zero_rate_keeps_initial_kernels():
    g = small_graph(iterations=10)
    trained, log = train([small_sample(1), small_sample(2)], g, TrainSchedule(epochs=2, learning_rate=0.0))
    for a, b in zip(g.layers, trained.layers):
        for ka, kb in zip(a.kernel_stacks, b.kernel_stacks):
            np.testing.assert_array_equal(ka.weights, kb.weights)
    assert np.all(np.isfinite(log.column("P1", "recon_energy")))


def test_training_updates_and_callback():
    g = small_graph(iterations=10)
    calls = []
    trained, log = train([small_sample(i) for i in range(3)], g, TrainSchedule(epochs=2, learning_rate=0.05,
                                                                              update_every=2),
                         on_update=lambda gr, e, i: calls.append(gr.layer("H1").kernel_norms()))
    assert len(calls) == 3  # 6 presentations, batches of 2
    for norms in calls:
        np.testing.assert_allclose(norms, 1.0, atol=1e-12)
    assert not np.array_equal(trained.layer("H1").kernel_stack.weights, g.layer("H1").kernel_stack.weights)
    assert {row[2] for row in log.rows} == {"H1", "T1", "P1"}


def test_training_deterministic():
    data = [small_sample(i) for i in range(3)]
    sched = TrainSchedule(epochs=2, learning_rate=0.05, seed=3)
    a, _ = train(data, small_graph(iterations=10), sched)
    b, _ = train(data, small_graph(iterations=10), sched)
    for la, lb in zip(a.layers, b.layers):
        for ka, kb in zip(la.kernel_stacks, lb.kernel_stacks):
            assert ka.weights.tobytes() == kb.weights.tobytes()


def test_epoch_order_is_seeded_permutation():
    o = epoch_order(10, 4, 1)
    assert sorted(o) == list(range(10))
    np.testing.assert_array_equal(o, epoch_order(10, 4, 1))
    assert not np.array_equal(o, epoch_order(10, 4, 2))


def test_schedule_validated():
    for bad in (dict(epochs=-1), dict(learning_rate=-0.1), dict(update_every=0)):
        with pytest.raises(PreconditionError):
            TrainSchedule(**bad)
    with pytest.raises(PreconditionError):
        train([], small_graph(), TrainSchedule())


def test_metrics_csv(tmp_path):
    log = MetricsLog()
    log.add(0, 3, "H1", 1.5, 0.25)
    log.to_csv(tmp_path / "m.csv")
    assert (tmp_path / "m.csv").read_text().splitlines() == [
        "epoch,input_index,layer,recon_energy,sparsity_fraction", "0,3,H1,1.5,0.25"]
