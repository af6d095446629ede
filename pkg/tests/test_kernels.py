import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from erach import _pykernels, kernels

ck = pytest.importorskip("erach._ckernels")


def test_backend_flag():
    assert kernels.BACKEND in ("cython", "python")


@given(st.lists(st.tuples(st.integers(0, 3), st.integers(1, 3)), min_size=1, max_size=12))
def test_resolve_collisions_equivalent(raw):
    ch = np.array([k for k, _ in raw])
    pr = np.array([p if k else 0 for k, p in raw])
    np.testing.assert_array_equal(ck.resolve_collisions(ch, pr, 3), _pykernels.resolve_collisions(ch, pr, 3))


@given(st.integers(1, 6), st.integers(1, 10), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_stacked_logits_equivalent(J, d, seed):
    rng = np.random.default_rng(seed)
    dims = [d, 7, 5, 3]
    W = [rng.normal(size=(J, a, b)) for a, b in zip(dims[:-1], dims[1:])]
    b = [rng.normal(size=(J, n)) for n in dims[1:]]
    x = rng.normal(size=(J, d)) * (rng.random((J, d)) < 0.7)
    np.testing.assert_allclose(ck.stacked_logits(x, W, b), _pykernels.stacked_logits(x, W, b), rtol=1e-12, atol=1e-12)


def test_stacked_logits_matches_per_agent_forward():
    from erach.neural import MlpParams, forward

    rng = np.random.default_rng(0)
    dims = [4, 6, 3]
    W = [rng.normal(size=(2, a, b)) for a, b in zip(dims[:-1], dims[1:])]
    b = [rng.normal(size=(2, n)) for n in dims[1:]]
    x = rng.normal(size=(2, 4))
    out = kernels.stacked_logits(x, W, b)
    for j in range(2):
        ref, _ = forward(MlpParams([w[j] for w in W], [c[j] for c in b]), x[j])
        np.testing.assert_allclose(out[j], ref, rtol=1e-12)


@given(st.integers(1, 5), st.integers(2, 6), st.integers(0, 2**31))
def test_sample_categorical_equivalent(J, A, seed):
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(A), size=J)
    u = rng.random(J)
    np.testing.assert_array_equal(ck.sample_categorical(p, u), _pykernels.sample_categorical(p, u))


def test_sample_categorical_edges():
    p = np.array([[0.2, 0.3, 0.5]])
    for mod in (ck, _pykernels):
        assert mod.sample_categorical(p, np.array([0.0]))[0] == 0
        assert mod.sample_categorical(p, np.array([0.25]))[0] == 1
        assert mod.sample_categorical(p, np.array([0.999999]))[0] == 2


def test_sample_categorical_frequencies():
    p = np.tile([0.1, 0.6, 0.3], (100000, 1))
    u = np.random.default_rng(1).random(100000)
    counts = np.bincount(kernels.sample_categorical(p, u), minlength=3) / 100000
    np.testing.assert_allclose(counts, [0.1, 0.6, 0.3], atol=0.01)
