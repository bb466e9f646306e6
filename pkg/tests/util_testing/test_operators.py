from math import log, sqrt

import numpy as np
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from pytest import approx, mark, raises

from livsic_tools.utils.errors import DimMismatch, NonFinite, NotInvertible
from livsic_tools.utils.operators import (InvertibleOp, ScaledProduct,
                                          deviation_from_identity, m_lower,
                                          op_metric, operator_norm,
                                          scaled_compose, scaled_metric)

# Diagonally dominant, hence invertible and well conditioned
dominant = arrays(np.float64, (3, 3), elements=st.floats(-0.9, 0.9)).map(lambda m: m + 3 * np.eye(3))


@mark.parametrize(
    argnames=['matrix', 'norm', 'expected'],
    argvalues=[
        ([[1, 2], [0, 1]], 'inf', 3.0),
        ([[2, 1], [1, 1]], 'two', (3 + sqrt(5)) / 2),
        ([[2, 1], [1, 1]], 'inf', 3.0),
    ],
)
def test_operator_norm(matrix, norm, expected):
    assert operator_norm(np.array(matrix, dtype=float), norm) == approx(expected)


def test_unknown_norm():
    with raises(ValueError):
        operator_norm(np.eye(2), 'one')


@mark.parametrize(
    argnames=['a', 'b', 'expected'],
    argvalues=[
        ([[2, 0], [0, 0.5]], [[1, 0], [0, 1]], 2.0),
        ([[0, -1], [1, 0]], [[1, 0], [0, 1]], 4.0),
        ([[1, 0], [0, 1]], [[2, 0], [0, 2]], 1.5),
    ],
)
def test_op_metric_values(a, b, expected):
    assert op_metric(InvertibleOp.from_matrix(a), InvertibleOp.from_matrix(b)) == approx(expected)


def test_op_metric_dim_mismatch():
    with raises(DimMismatch):
        op_metric(InvertibleOp.identity(2), InvertibleOp.identity(3))


@mark.parametrize(
    argnames=['matrix', 'expected'], argvalues=[([[1, 0], [0, 1]], 1.0), ([[2, 0], [0, 0.5]], 0.5)]
)
def test_m_lower(matrix, expected):
    assert m_lower(InvertibleOp.from_matrix(matrix)) == approx(expected)


@mark.parametrize(
    argnames=['matrix', 'error'],
    argvalues=[
        ([[1, 2], [2, 4]], NotInvertible),
        ([[1, 2, 3], [4, 5, 6]], DimMismatch),
        ([[1, float('nan')], [0, 1]], NonFinite),
        ([[float('inf'), 0], [0, 1]], NonFinite),
    ],
)
def test_from_matrix_rejects(matrix, error):
    with raises(error):
        InvertibleOp.from_matrix(matrix)


def test_from_pair_checks_inverse():
    with raises(NotInvertible):
        InvertibleOp.from_pair([[2, 0], [0, 1]], [[1, 0], [0, 1]])
    op = InvertibleOp.from_pair([[2, 0], [0, 1]], [[0.5, 0], [0, 1]])
    assert op.norm() == 2.0


def test_operators_are_read_only():
    op = InvertibleOp.from_matrix([[1, 1], [0, 1]])
    with raises(ValueError):
        op.forward[0, 0] = 5.0


def test_compose_order():
    shear, scale = InvertibleOp.from_matrix([[1, 1], [0, 1]]), InvertibleOp.from_matrix([[2, 0], [0, 1]])
    product = shear @ scale
    assert np.allclose(product.forward, [[2, 1], [0, 1]])
    assert np.allclose(product.forward @ product.inverse, np.eye(2))


def test_diagonal_power_log_norm():
    step = InvertibleOp.from_matrix([[2, 0], [0, 0.5]])
    product = ScaledProduct.identity(2)
    for _ in range(50):
        product = scaled_compose(product, step)
    assert product.length == 50
    assert product.log_norm() == approx(50 * log(2))
    assert product.log_inv_norm() == approx(50 * log(2))
    assert 0.5 <= operator_norm(product.unit) <= 2.0


def test_long_product_stays_finite():
    step = InvertibleOp.from_matrix([[4, 0], [0, 0.25]])
    product = ScaledProduct.identity(2)
    for _ in range(1000):
        product = product.compose(step)
    assert product.log_norm() == approx(1000 * log(4))
    with raises(NonFinite):
        product.to_op()
    assert deviation_from_identity(product) == float('inf')


def test_then_matches_compose():
    ops = [InvertibleOp.from_matrix(m) for m in ([[1, 1], [0, 1]], [[2, 0], [1, 1]], [[0, 1], [-1, 3]])]
    first = ScaledProduct.identity(2).compose(ops[0])
    second = ScaledProduct.identity(2).compose(ops[1]).compose(ops[2])
    combined = first.then(second).to_op()
    direct = ops[2] @ ops[1] @ ops[0]
    assert op_metric(combined, direct) == approx(0.0, abs=1e-12)


def test_inverse_product():
    op = InvertibleOp.from_matrix([[3, 1], [1, 1]])
    product = ScaledProduct.from_op(op).inv().to_op()
    assert op_metric(product, op.inv()) == approx(0.0, abs=1e-12)


def test_scaled_metric_is_relative():
    big = InvertibleOp.from_matrix([[1e6, 0], [0, 1e-6]])
    p = ScaledProduct.from_op(big)
    assert scaled_metric(p, p) == 0.0
    assert scaled_metric(p, ScaledProduct.identity(2)) > 0.0


@seed(20240)
@settings(max_examples=50, deadline=None)
@given(a=dominant, b=dominant, c=dominant)
def test_op_metric_is_a_metric(a, b, c):
    a, b, c = (InvertibleOp.from_matrix(m) for m in (a, b, c))
    assert op_metric(a, a) == 0.0
    assert op_metric(a, b) == approx(op_metric(b, a))
    assert op_metric(a, c) <= op_metric(a, b) + op_metric(b, c) + 1e-12


@seed(20241)
@settings(max_examples=50, deadline=None)
@given(factors=st.lists(dominant, min_size=1, max_size=8))
def test_scaled_product_matches_direct_product(factors):
    product, direct = ScaledProduct.identity(3), np.eye(3)
    for mtx in factors:
        product = product.compose(InvertibleOp.from_matrix(mtx))
        direct = mtx @ direct
    assert np.allclose(product.matrix(), direct, rtol=1e-9, atol=1e-9 * np.abs(direct).max())
    assert np.allclose(product.matrix() @ product.inverse_matrix(), np.eye(3), atol=1e-5)


@seed(20245)
@settings(max_examples=200, deadline=None)
@given(draw=st.integers(0, 2**31))
def test_long_product_matches_extended_precision(draw):
    rng = np.random.default_rng(draw)
    factors = [InvertibleOp.from_matrix(3 * np.eye(3) + rng.uniform(-0.9, 0.9, (3, 3))) for _ in range(500)]
    product = ScaledProduct.identity(3)
    forward, inverse = np.eye(3, dtype=np.longdouble), np.eye(3, dtype=np.longdouble)
    for op in factors:
        product = product.compose(op)
        forward = op.forward.astype(np.longdouble) @ forward
        inverse = inverse @ op.inverse.astype(np.longdouble)

    tracks = ((product.unit, product.log_scale, forward), (product.inv_unit, product.inv_log_scale, inverse))
    for unit, log_scale, oracle in tracks:
        size = np.abs(oracle).sum(axis=-1).max()
        assert log_scale + log(operator_norm(unit)) == approx(float(np.log(size)), abs=1e-9)
        aligned = unit * np.exp(np.longdouble(log_scale) - np.log(size))
        assert float(np.abs(aligned - oracle / size).max()) <= 1e-9
