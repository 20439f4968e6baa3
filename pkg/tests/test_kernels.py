"""Cross-backend checks: the compiled kernels must match the numpy
fallback bit for bit."""

import numpy as np
import pytest

from compembed import kernels


def _random_case(rng, op, k=3, B=64, D=8):
    sizes = rng.integers(2, 40, size=k)
    if op == "concat":
        dims = rng.integers(2, 9, size=k)
    else:
        dims = [D] * k
    tables = [np.ascontiguousarray(rng.standard_normal((s, d))) for s, d in zip(sizes, dims)]
    indices = [rng.integers(0, s, size=B) for s in sizes]
    return tables, indices


backends = [kernels.get_backend(n) for n in kernels.available_backends()]
pair = pytest.mark.skipif(len(backends) < 2, reason="compiled backend unavailable")


@pair
@pytest.mark.parametrize("op", ["concat", "add", "mult"])
def test_forward_bit_identical(op):
    rng = np.random.default_rng(7)
    for _ in range(5):
        tables, indices = _random_case(rng, op)
        outs = [b.compose_forward(op, tables, indices) for b in backends]
        np.testing.assert_array_equal(outs[0], outs[1])


@pair
@pytest.mark.parametrize("op", ["concat", "add", "mult"])
def test_backward_bit_identical(op):
    rng = np.random.default_rng(11)
    for _ in range(5):
        tables, indices = _random_case(rng, op)
        out = backends[0].compose_forward(op, tables, indices)
        upstream = np.ascontiguousarray(rng.standard_normal(out.shape))
        grads = [[np.zeros_like(t) for t in tables] for _ in backends]
        for b, g in zip(backends, grads):
            b.compose_backward(op, tables, indices, upstream, g)
        for ga, gb in zip(*grads):
            np.testing.assert_array_equal(ga, gb)


@pair
def test_adagrad_rows_bit_identical():
    rng = np.random.default_rng(3)
    rows = np.unique(rng.integers(0, 50, size=20))
    grads = np.ascontiguousarray(rng.standard_normal((rows.size, 6)))
    results = []
    for b in backends:
        param = np.full((50, 6), 0.5)
        accum = np.zeros((50, 6))
        b.adagrad_update_rows(param, accum, rows, grads, 0.01, 1e-10)
        results.append((param, accum))
    np.testing.assert_array_equal(results[0][0], results[1][0])
    np.testing.assert_array_equal(results[0][1], results[1][1])


@pair
def test_scatter_add_sample_order():
    # duplicate rows must accumulate, in sample order, identically
    rng = np.random.default_rng(5)
    rows = np.array([3, 1, 3, 3, 0, 1], dtype=np.int64)
    vals = np.ascontiguousarray(rng.standard_normal((6, 4)))
    outs = []
    for b in backends:
        g = np.zeros((5, 4))
        b.scatter_add_rows(g, rows, vals)
        outs.append(g)
    np.testing.assert_array_equal(outs[0], outs[1])
    expected = np.zeros((5, 4))
    for r, v in zip(rows, vals):
        expected[r] += v
    np.testing.assert_allclose(outs[0], expected, rtol=1e-15)


def test_gather_rows():
    rng = np.random.default_rng(1)
    t = np.ascontiguousarray(rng.standard_normal((10, 3)))
    idx = np.array([0, 9, 4], dtype=np.int64)
    for b in backends:
        np.testing.assert_array_equal(b.gather_rows(t, idx), t[idx])


def test_unknown_op_rejected():
    with pytest.raises(ValueError):
        kernels.compose_forward("outer", [], [])
