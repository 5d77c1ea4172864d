import numpy as np
import pytest

from deepsc import kernels

_CRITERIA = {}


def record_criterion(number, ok, detail):
    """Remember one acceptance result; printed now and again in the session summary."""
    line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    _CRITERIA[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(_CRITERIA):
            terminalreporter.write_line(_CRITERIA[number])


@pytest.fixture(params=kernels.BACKENDS)
def backend(request):
    previous = kernels.set_backend(request.param)
    yield request.param
    kernels.set_backend(previous)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def naive_forward(x, w, stride, offset):
    """Loop-by-loop zero-padded strided correlation, independent of the kernels."""
    f, c, kh, kw = w.shape
    _, h, wd = x.shape
    sh, sw = stride
    oh, ow = offset
    out = np.zeros((f, h // sh, wd // sw))
    for n in range(f):
        for i in range(h // sh):
            for j in range(wd // sw):
                acc = 0.0
                for ch in range(c):
                    for p in range(kh):
                        for q in range(kw):
                            y, xx = i * sh - oh + p, j * sw - ow + q
                            if 0 <= y < h and 0 <= xx < wd:
                                acc += w[n, ch, p, q] * x[ch, y, xx]
                out[n, i, j] = acc
    return out


def small_graph(seed=0, feedback=True, lam=0.05, iterations=60, feedback_scale=1.0, parents=("H1", "T1")):
    """Tiny vision/text/joint network: H1 on 1x8x8, T1 on 1x4x8, P1 fully connected."""
    from deepsc.hierarchy import LayerGraph
    from deepsc.layer import DictionaryLayer, LcaParams
    from deepsc.tensor import random_kernel_stack

    rng = np.random.default_rng(seed)
    p = LcaParams(lam=lam, n_iterations=iterations, nonnegative=True)
    h1 = DictionaryLayer.single("H1", random_kernel_stack(rng, 4, (1, 8, 8), 4, 2), p, branch="vision")
    t1 = DictionaryLayer.single("T1", random_kernel_stack(rng, 3, (1, 4, 8), 4, 4), p, branch="text")
    stacks = {"H1": random_kernel_stack(rng, 6, h1.output_shape, (4, 4), 4),
              "T1": random_kernel_stack(rng, 6, t1.output_shape, (1, 2), (1, 2))}
    p1 = DictionaryLayer("P1", tuple(stacks[n] for n in parents), p, tuple(parents), "joint")
    return LayerGraph((h1, t1, p1), feedback, feedback_scale)


def small_sample(seed=1):
    rng = np.random.default_rng(seed)
    return {"vision": rng.random((1, 8, 8)), "text": rng.random((1, 4, 8))}
