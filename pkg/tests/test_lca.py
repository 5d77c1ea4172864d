import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from deepsc.errors import GeometryError, NumericDivergenceError, PreconditionError
from deepsc.layer import DictionaryLayer, LcaParams
from deepsc.lca import (EnergyTrace, LayerState, energy, energy_terms, fixed_point_residual, lca_step,
                        solve_single_layer, threshold)
from deepsc.tensor import conv_forward, conv_transpose, dense_matrix, random_kernel_stack

from oracles import dense_stack, fista, lasso_objective, random_dictionary


def test_threshold_examples():
    assert threshold(0.3, 0.5) == 0.0
    assert threshold(1.5, 0.5) == 1.0
    assert threshold(-2.0, 0.5) == -1.5
    assert threshold(-2.0, 0.5, nonnegative=True) == 0.0
    assert threshold(0.7, 0.5, transfer="hard") == 0.7
    assert threshold(-0.7, 0.5, transfer="hard") == -0.7
    assert threshold(-0.7, 0.5, nonnegative=True, transfer="hard") == 0.0


@given(st.floats(-1e6, 1e6), st.floats(0, 1e3))
def test_soft_threshold_shrinks(u, lam):
    a = float(threshold(u, lam))
    assert abs(a) <= abs(u)
    assert a == 0.0 or np.sign(a) == np.sign(u)
    assert abs(abs(u) - abs(a) - min(lam, abs(u))) <= 1e-9 * max(1.0, abs(u))


def test_params_validated():
    for bad in (dict(lam=-1), dict(dt_over_tau=0), dict(dt_over_tau=1.5), dict(n_iterations=0),
                dict(transfer="relu")):
        with pytest.raises(PreconditionError):
            LcaParams(**bad)


def test_energy_at_zero_code(rng):
    k = random_kernel_stack(rng, 4, (1, 8, 8), 3, 1)
    x = rng.standard_normal((1, 8, 8))
    assert energy(x, k, np.zeros(k.output_shape), 0.3) == pytest.approx(0.5 * np.sum(x**2))


def test_energy_zero_at_exact_reconstruction(rng):
    k = random_kernel_stack(rng, 4, (1, 8, 8), 3, 1)
    a = rng.standard_normal(k.output_shape)
    assert energy(conv_transpose(a, k), k, a, 0.0) == pytest.approx(0.0, abs=1e-20)


def test_energy_matches_dense_evaluation(rng):
    phi = random_dictionary(rng, 8, 16)
    k = dense_stack(phi)
    x = rng.standard_normal(8)
    a = rng.standard_normal(16) * (rng.random(16) < 0.5)
    direct = 0.0
    for i in range(8):
        direct += 0.5 * (x[i] - sum(phi[i, j] * a[j] for j in range(16))) ** 2
    direct += 0.2 * sum(abs(v) for v in a)
    got = energy(x.reshape(8, 1, 1), k, a.reshape(16, 1, 1), 0.2)
    assert got == pytest.approx(direct, rel=1e-12)


def test_first_step_with_unit_dt_is_drive(rng):
    k = random_kernel_stack(rng, 4, (1, 8, 8), 3, 1)
    x = rng.standard_normal((1, 8, 8))
    s = lca_step(LayerState.zeros(k.output_shape), x, k, params=LcaParams(dt_over_tau=1.0))
    np.testing.assert_allclose(s.u, conv_forward(x, k), atol=1e-12)
    np.testing.assert_array_equal(s.a, threshold(s.u, 0.1))


def test_exact_fixed_point_unchanged(rng):
    k = random_kernel_stack(rng, 3, (1, 6, 6), 3, 1)
    x = rng.standard_normal((1, 6, 6))
    lam = 1e6  # a = 0 for any bounded u
    layer = DictionaryLayer.single("L", k, LcaParams(lam=lam))
    u = conv_forward(x, k)
    state = LayerState(u, np.zeros_like(u))
    np.testing.assert_allclose(lca_step(state, x, layer).u, u, atol=1e-14)


def test_orthonormal_dictionary_converges_to_shrinkage(rng):
    q, _ = np.linalg.qr(rng.standard_normal((4, 4)))
    k = dense_stack(q)
    x = rng.standard_normal(4)
    lam = 0.3
    layer = DictionaryLayer.single("L", k, LcaParams(lam=lam, dt_over_tau=0.1, n_iterations=1000))
    state, _ = solve_single_layer(x.reshape(4, 1, 1), layer)
    np.testing.assert_allclose(state.a.ravel(), threshold(q.T @ x, lam), atol=1e-8)


def test_zero_input_stays_zero(rng):
    k = random_kernel_stack(rng, 4, (1, 8, 8), 3, 1)
    state, trace = solve_single_layer(np.zeros((1, 8, 8)), DictionaryLayer.single("L", k, LcaParams(n_iterations=20)))
    assert not state.u.any() and not state.a.any()
    assert len(trace) == 20 and not np.any(trace.total)


def test_state_stays_coherent(rng):
    k = random_kernel_stack(rng, 4, (1, 8, 8), 3, 1)
    p = LcaParams(lam=0.05, nonnegative=True)
    layer = DictionaryLayer.single("L", k, p)
    x = rng.random((1, 8, 8))
    s = LayerState.zeros(k.output_shape)
    for _ in range(30):
        s = lca_step(s, x, layer)
        np.testing.assert_array_equal(s.a, threshold(s.u, p.lam, True))


@pytest.mark.parametrize("lam", [0.1, 0.5])
def test_lca_matches_fista(rng, lam):
    phi = random_dictionary(rng, 16, 32)
    x = rng.standard_normal(16)
    layer = DictionaryLayer.single("L", dense_stack(phi), LcaParams(lam=lam, dt_over_tau=0.2, n_iterations=400))
    state, trace = solve_single_layer(x.reshape(16, 1, 1), layer)
    ref = lasso_objective(x, phi, fista(x, phi, lam), lam)
    got = lasso_objective(x, phi, state.a.ravel(), lam)
    assert got <= ref * 1.01
    assert trace[-1] == pytest.approx(got, rel=1e-10)


def test_energy_decreases_on_signal(rng):
    k = random_kernel_stack(rng, 8, (1, 16, 16), 4, 2)
    x = conv_transpose(threshold(rng.standard_normal(k.output_shape), 1.5), k)
    layer = DictionaryLayer.single("L", k, LcaParams(lam=0.05, n_iterations=200))
    _, trace = solve_single_layer(x, layer)
    assert trace[-1] < 0.5 * np.sum(x**2)


def test_energy_trace_csv(tmp_path):
    t = EnergyTrace()
    t.append(1.0, 0.5)
    t.append(0.75, 0.25)
    t.to_csv(tmp_path / "e.csv")
    lines = (tmp_path / "e.csv").read_text().splitlines()
    assert lines[0] == "iteration,reconstruction_term,sparsity_term,total"
    assert lines[2] == "2,0.75,0.25,1.0"


def test_divergence_reported(rng):
    k = random_kernel_stack(rng, 2, (1, 4, 4), 2, 1)
    layer = DictionaryLayer.single("L", k, LcaParams())
    state = LayerState(np.full(k.output_shape, 1e308), np.zeros(k.output_shape))
    with pytest.raises(NumericDivergenceError) as info:
        lca_step(state, np.full((1, 4, 4), 1e308), layer)
    assert info.value.layer == "L" and info.value.iteration == 1


def test_state_shape_checked(rng):
    k = random_kernel_stack(rng, 2, (1, 4, 4), 2, 1)
    with pytest.raises(GeometryError):
        lca_step(LayerState.zeros((3, 4, 4)), np.zeros((1, 4, 4)), k)


def test_energy_terms_split(rng):
    k = random_kernel_stack(rng, 2, (1, 4, 4), 2, 1)
    a = np.ones(k.output_shape)
    rec, sp = energy_terms(np.zeros((1, 4, 4)), k, a, 0.5)
    g = dense_matrix(k)
    assert rec == pytest.approx(0.5 * np.sum((g @ a.ravel()) ** 2))
    assert sp == pytest.approx(0.5 * a.size)
