import itertools

import numpy as np
import pytest

import permeq


def test_bell_and_partitions():
    assert [permeq.bell(l) for l in range(6)] == [1, 1, 2, 5, 15, 52]
    parts = permeq.partitions(3)
    assert parts[0] == ("000", "{{1,2,3}}")
    assert len(parts) == 5


def test_fixed_space_and_trace_moment():
    assert permeq.fixed_subspace_dim(4, 2) == 2
    assert permeq.trace_moment(5, 4) == 15
    assert permeq.trace_moment(2, 3) == 4


def test_basis_operators_partition_the_identity_support():
    ops = permeq.basis_operators(2, 2, 3)
    assert len(ops) == 15
    total = sum(ops)
    np.testing.assert_array_equal(total, np.ones((9, 9)))


def test_layer_is_equivariant():
    rng = np.random.default_rng(0)
    layer = permeq.Layer(2, 2, d_in=2, d_out=3, normalized=True)
    layer.weights = rng.uniform(-1, 1, layer.weights.shape)
    layer.bias = rng.uniform(-1, 1, layer.bias.shape)
    x = rng.uniform(-1, 1, (5, 5, 2))
    p = rng.permutation(5)
    y = layer(x)
    assert y.shape == (5, 5, 3)
    np.testing.assert_allclose(layer(x[np.ix_(p, p)]), y[np.ix_(p, p)], atol=1e-12)


def test_invariant_layer_ignores_permutations():
    rng = np.random.default_rng(1)
    layer = permeq.Layer(2, 0, d_in=1, d_out=2)
    layer.weights = rng.uniform(-1, 1, layer.weights.shape)
    x = rng.uniform(-1, 1, (4, 4, 1))
    for p in itertools.permutations(range(4)):
        p = list(p)
        np.testing.assert_allclose(layer(x[np.ix_(p, p)]), layer(x), atol=1e-12)


def test_order2_ops_and_fit():
    a = np.arange(9.0).reshape(3, 3)
    ops = permeq.order2_ops(a, normalized=False)
    names = permeq.order2_op_names()
    np.testing.assert_array_equal(ops[names.index("transpose")], a.T)
    fit = permeq.least_squares_fit("sym_projection", "full", 6)
    assert fit["coefficients"][:2] == pytest.approx([0.5, 0.5])
    assert fit["residual"] < 1e-10


def test_bad_input_raises():
    layer = permeq.Layer(2, 2)
    with pytest.raises(ValueError):
        layer(np.zeros((3, 4, 1)))
    with pytest.raises(ValueError):
        layer.weights = np.zeros(3)


def test_cli_in_process():
    code, out, _ = permeq.run_cli(["partitions", "--order", "3"])
    assert code == 0
    assert len(out.splitlines()) == 5
    code, _, _ = permeq.run_cli(["partitions"])
    assert code == 2
