from fractions import Fraction
from math import exp, log, tanh

import numpy as np
from hypothesis import given, seed, settings
from hypothesis import strategies as st
from pytest import approx, fixture, mark, raises

from livsic_tools.utils.cocycle import (CocycleSpec, bunching_membership,
                                        default_eps, eval_generator, eval_many,
                                        good_times, holder_constant,
                                        lyapunov_exponents, lyapunov_norm,
                                        lyapunov_norm_sandwich, norm_bound,
                                        orbit_product, parse_word,
                                        suffix_log_norms, word_key)
from livsic_tools.utils.dynamics import SymbolicPoint, TorusPoint
from livsic_tools.utils.errors import (DimMismatch, InadmissibleWord,
                                       TailNotNegligible)
from livsic_tools.utils.operators import InvertibleOp, op_metric, scaled_metric

shear = {'kind': 'exp_trig', 'dim': 2, 'terms': [{'coef': [[0, 0.3], [0, 0]], 'freq': [1, 0]}]}
table = {
    'kind': 'locally_constant',
    'window': 2,
    'table': {
        '00': [[1, 0.5], [0, 1]],
        '01': [[2, 0], [0, 0.5]],
        '10': [[1, 0], [0.3, 1]],
        '11': [[0, 1], [-1, 0]],
    },
}


@fixture(scope='module')
def diag() -> CocycleSpec:
    return CocycleSpec.from_dict({'kind': 'constant', 'matrix': [[2, 0], [0, 0.5]]})


@fixture(scope='module')
def identity() -> CocycleSpec:
    return CocycleSpec.from_dict({'kind': 'constant', 'matrix': [[1, 0], [0, 1]]})


@fixture(scope='module')
def shear_coboundary() -> CocycleSpec:
    return CocycleSpec.from_dict({'kind': 'coboundary_of', 'transfer': shear})


def test_word_keys():
    assert parse_word('011') == (0, 1, 1)
    assert parse_word('10.11.3') == (10, 11, 3)
    assert word_key((0, 1, 1)) == '011'
    assert word_key((10, 11, 3)) == '10.11.3'


@mark.parametrize(
    argnames=['block', 'error'],
    argvalues=[
        ({'kind': 'constant', 'dim': 3, 'matrix': [[1, 0], [0, 1]]}, DimMismatch),
        ({'kind': 'exp_trig', 'dim': 3, 'terms': shear['terms']}, DimMismatch),
        ({'kind': 'locally_constant', 'window': 2, 'table': {'0': [[1]]}}, InadmissibleWord),
        ({'kind': 'spline', 'dim': 2}, ValueError),
    ],
)
def test_from_dict_rejects(block, error):
    with raises(error):
        CocycleSpec.from_dict(block)


def test_from_dict_reads_regularity():
    spec = CocycleSpec.from_dict({**shear, 'alpha': 0.5, 'c0': 2})
    assert (spec.alpha, spec.c0) == (0.5, 2.0)
    assert CocycleSpec.from_dict(shear).c0 is None
    assert CocycleSpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()


def test_exp_trig_values(cat_map):
    spec = CocycleSpec.from_dict(shear)
    op = eval_generator(spec, cat_map, TorusPoint((0.25, 0.6)))
    assert np.allclose(op.forward, [[1, 0.3], [0, 1]])
    assert np.allclose(op.inverse, [[1, -0.3], [0, 1]])


def test_locally_constant_values(full_shift):
    spec = CocycleSpec.from_dict(table)
    x = SymbolicPoint(word=(0, 1, 1), origin=0, left_tail=(0,), right_tail=(0,))
    ops = eval_many(spec, full_shift, [x, x.shift(1), x.shift(2)])
    assert np.allclose(ops[0].forward, [[2, 0], [0, 0.5]])
    assert np.allclose(ops[1].forward, [[0, 1], [-1, 0]])
    assert np.allclose(ops[2].forward, [[1, 0], [0.3, 1]])


def test_coboundary_values(cat_map, shear_coboundary):
    x = TorusPoint((0.1, 0.3))
    transfer = shear_coboundary.transfer
    expected = eval_generator(transfer, cat_map, cat_map.step(x)) @ eval_generator(transfer, cat_map, x).inv()
    assert op_metric(eval_generator(shear_coboundary, cat_map, x), expected) == approx(0.0, abs=1e-14)


@mark.parametrize(argnames='n', argvalues=[1, 7, 40, -1, -7, -40])
def test_coboundary_products_telescope(cat_map, shear_coboundary, n):
    x = TorusPoint((0.41, 0.77))
    transfer = shear_coboundary.transfer
    end = cat_map.orbit(x, n)[-1]
    expected = eval_generator(transfer, cat_map, end) @ eval_generator(transfer, cat_map, x).inv()
    assert op_metric(orbit_product(shear_coboundary, cat_map, x, n).to_op(), expected) < 1e-10


def test_norm_bound(cat_map, diag, full_shift):
    assert norm_bound(diag, cat_map) == 2.0
    assert norm_bound(CocycleSpec.from_dict(table), full_shift) == approx(2.0)
    assert norm_bound(CocycleSpec.from_dict(shear), cat_map, samples=256) == approx(1.3, abs=0.01)


def test_lyapunov_exponents(cat_map, diag):
    estimate = lyapunov_exponents(diag, cat_map, TorusPoint((0.1, 0.2)), 200)
    assert estimate.lambda_plus == approx(log(2))
    assert estimate.lambda_minus == approx(-log(2))
    assert [k for k, _, _ in estimate.checkpoints] == [50, 100, 150, 200]
    with raises(ValueError):
        lyapunov_exponents(diag, cat_map, TorusPoint((0.1, 0.2)), 99)


def test_lyapunov_norm_of_identity(cat_map, identity):
    result = lyapunov_norm(identity, cat_map, TorusPoint((0.3, 0.3)), [1.0, 0.0], 1.0)
    # Σ e^{-|n|} over all n is coth(1/2)
    assert result.value == approx(1 / tanh(0.5), abs=1e-7)
    assert result.tail_bound <= 1e-8
    assert result.ratio == approx(result.value)


def test_lyapunov_norm_tail(cat_map, diag):
    with raises(TailNotNegligible):
        lyapunov_norm(diag, cat_map, TorusPoint((0.3, 0.3)), [1.0, 1.0], 0.5)
    with raises(TailNotNegligible):
        lyapunov_norm(diag, cat_map, TorusPoint((0.3, 0.3)), [1.0, 1.0], 1.0, trunc=2)
    with raises(ValueError):
        lyapunov_norm(diag, cat_map, TorusPoint((0.3, 0.3)), [1.0, 1.0], 0.0)


def test_lyapunov_norm_sandwich(cat_map, diag):
    check = lyapunov_norm_sandwich(diag, cat_map, TorusPoint((0.3, 0.3)), [1.0, -2.0], 1.0)
    assert check.holds
    assert exp(-1.0) * check.here <= check.image + check.slack


def test_budget_bounds_coboundary_tail(cat_map, shear_coboundary):
    budgeted = CocycleSpec.from_dict({**shear_coboundary.to_dict(), 'budget': 1.4})
    result = lyapunov_norm(budgeted, cat_map, TorusPoint((0.2, 0.9)), [0.0, 1.0], 0.1)
    assert result.tail_bound <= 1e-8
    assert result.value > 1.0


def test_bunching(cat_map, diag, identity):
    x = TorusPoint((0.6, 0.1))
    assert bunching_membership(identity, cat_map, x, 1, 0.5, 10).passed
    failed = bunching_membership(diag, cat_map, x, 1, 0.5, 10)
    assert not failed.passed
    # The deficit grows with every block, so the last one is the worst
    assert failed.margin == approx(10 * (0.5 - 2 * log(2)))
    assert bunching_membership(diag, cat_map, x, 2, 1.5, 5).passed
    with raises(ValueError):
        bunching_membership(diag, cat_map, x, 0, 0.5, 10)


def test_default_eps(cat_map):
    assert default_eps(cat_map, 1.0) == approx(log((3 + 5**0.5) / 2) / 8)


def test_suffix_log_norms(diag):
    ops = [diag.constant_op] * 5
    table_ = suffix_log_norms(ops)
    for n in range(6):
        for i in range(n + 1):
            assert table_[n, i] == approx((n - i) * log(2))


def test_good_times_of_constant_cocycle(cat_map, diag):
    found = good_times(diag, cat_map, TorusPoint((0.2, 0.2)), 30, which='both')
    assert found.times == tuple(range(1, 31))
    assert found.density == 1.0
    assert found.rates['norm'] == approx(log(2))
    with raises(ValueError):
        good_times(diag, cat_map, TorusPoint((0.2, 0.2)), 30, which='neither')


def test_holder_constant(cat_map, rng):
    steep = CocycleSpec.from_dict({**shear, 'c0': 0.1})
    check = holder_constant(steep, cat_map, 1.0, 50, rng)
    assert not check.consistent
    assert check.c0_est <= 0.3 * 2 * np.pi * (1 + 1e-6)
    assert holder_constant(CocycleSpec.from_dict(shear), cat_map, 1.0, 50, rng).consistent


@seed(20240)
@settings(max_examples=40, deadline=None)
@given(u=st.floats(0, 1, exclude_max=True), v=st.floats(0, 1, exclude_max=True), n=st.integers(1, 25))
def test_coboundary_products_stay_bounded(cat_map, shear_coboundary, u, v, n):
    x = TorusPoint((u, v))
    product = orbit_product(shear_coboundary, cat_map, x, n)
    transfer = shear_coboundary.transfer
    expected = eval_generator(transfer, cat_map, cat_map.orbit(x, n)[-1]) @ eval_generator(transfer, cat_map, x).inv()
    assert op_metric(product.to_op(), expected) < 1e-9
    assert product.log_norm() <= 2 * log(1.3) + 1e-9
    assert np.allclose(product.matrix() @ product.inverse_matrix(), InvertibleOp.identity(2).forward)


def random_exp_trig(draw: int, dim: int = 3, size: float = 0.4) -> dict:
    rng = np.random.default_rng(draw)
    terms = [
        {
            'coef': (size * rng.standard_normal((dim, dim))).tolist(),
            'freq': rng.integers(-2, 3, size=2).tolist(),
            'phase': float(rng.uniform(0.0, 2 * np.pi)),
        }
        for _ in range(2)
    ]
    return {'kind': 'exp_trig', 'dim': dim, 'terms': terms}


def random_cocycle(draw: int) -> CocycleSpec:
    return CocycleSpec.from_dict(random_exp_trig(draw))


def random_coboundary(draw: int) -> CocycleSpec:
    """Bounded products, so segments of opposite signs split without cancellation"""
    return CocycleSpec.from_dict({'kind': 'coboundary_of', 'transfer': random_exp_trig(draw, size=0.15)})


exact_coords = st.integers(0, 2**20 - 1).map(lambda k: k / 2**20)


def split_product(spec: CocycleSpec, base, x, m: int, n: int):
    return orbit_product(spec, base, x, m).then(orbit_product(spec, base, base.iterate(x, m), n))


def test_orbit_products_compose_at_37_steps(cat_map):
    spec, x = random_cocycle(37), TorusPoint((0.21, 0.39))
    whole, halves = orbit_product(spec, cat_map, x, 74), split_product(spec, cat_map, x, 37, 37)
    assert whole.length == halves.length == 74
    assert scaled_metric(whole, halves) <= 1e-9


@mark.parametrize(argnames=['m', 'n'], argvalues=[(-150, 170), (120, -180), (-200, 200), (37, -90)])
def test_orbit_products_compose_across_signs(cat_map, m, n):
    spec, x = random_coboundary(abs(m * n)), TorusPoint.exact(Fraction(5, 17), Fraction(3, 29))
    assert scaled_metric(orbit_product(spec, cat_map, x, m + n), split_product(spec, cat_map, x, m, n)) <= 1e-9


@seed(20242)
@settings(max_examples=400, deadline=None)
@given(draw=st.integers(0, 2**31), u=exact_coords, v=exact_coords, m=st.integers(-60, 60), n=st.integers(-60, 60))
def test_composition_law(cat_map, draw, u, v, m, n):
    spec, x = random_coboundary(draw), TorusPoint.exact(u, v)
    assert scaled_metric(orbit_product(spec, cat_map, x, m + n), split_product(spec, cat_map, x, m, n)) <= 1e-9


@seed(20244)
@settings(max_examples=200, deadline=None)
@given(
    draw=st.integers(0, 2**31),
    u=exact_coords,
    v=exact_coords,
    m=st.integers(0, 60),
    n=st.integers(0, 60),
    backwards=st.booleans(),
)
def test_composition_law_of_growing_products(cat_map, draw, u, v, m, n, backwards):
    if backwards:
        m, n = -m, -n
    spec, x = random_cocycle(draw), TorusPoint.exact(u, v)
    assert scaled_metric(orbit_product(spec, cat_map, x, m + n), split_product(spec, cat_map, x, m, n)) <= 1e-9


@seed(20243)
@settings(max_examples=400, deadline=None)
@given(draw=st.integers(0, 2**31), u=exact_coords, v=exact_coords, n=st.integers(-80, 80))
def test_inverse_track_runs_the_orbit_backwards(cat_map, draw, u, v, n):
    spec, x = random_cocycle(draw), TorusPoint.exact(u, v)
    forward = orbit_product(spec, cat_map, x, n)
    backward = orbit_product(spec, cat_map, cat_map.iterate(x, n), -n)
    assert scaled_metric(forward.inv(), backward) <= 1e-9
    assert forward.log_norm() == approx(backward.log_inv_norm(), abs=1e-9)
