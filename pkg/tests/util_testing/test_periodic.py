from dataclasses import replace
from math import isnan, log, nan

import numpy as np
from pytest import approx, fixture, mark, raises

from livsic_tools.utils.cocycle import CocycleSpec
from livsic_tools.utils.dynamics import TorusPoint
from livsic_tools.utils.errors import (ClosingFailed, ObstructionFailed,
                                       ProfileViolated)
from livsic_tools.utils.periodic import (NearClosing, NearClosingBatch,
                                         Verdict, classify, combine,
                                         distortion_batch, distortion_check,
                                         find_near_returns, near_closing_batch,
                                         near_closing_deviation,
                                         near_closing_slope, obstruction_check,
                                         periodic_exponents,
                                         periodic_good_times,
                                         shadow_norm_bounds, shadowing_point,
                                         summarize)

near_origin = TorusPoint((0.001, 0.0005))


def constant(matrix) -> CocycleSpec:
    return CocycleSpec.from_dict({'kind': 'constant', 'matrix': matrix})


@fixture(scope='module')
def shear_coboundary() -> CocycleSpec:
    transfer = {'kind': 'exp_trig', 'dim': 2, 'terms': [{'coef': [[0, 0.3], [0, 0]], 'freq': [1, 0]}]}
    return CocycleSpec.from_dict({'kind': 'coboundary_of', 'transfer': transfer})


@mark.parametrize(
    argnames=['deviation', 'verdict'],
    argvalues=[(0.0, Verdict.PASS), (1e-9, Verdict.PASS), (5e-9, Verdict.INCONCLUSIVE), (1e-6, Verdict.FAIL)],
)
def test_classify(deviation, verdict):
    assert classify(deviation, 1e-9) is verdict


@mark.parametrize(
    argnames=['verdicts', 'combined'],
    argvalues=[
        ([], Verdict.PASS),
        (['pass', 'pass'], Verdict.PASS),
        (['pass', 'inconclusive'], Verdict.INCONCLUSIVE),
        (['inconclusive', 'fail', 'pass'], Verdict.FAIL),
    ],
)
def test_combine(verdicts, combined):
    assert combine(verdicts) is combined


def test_diagonal_cocycle_is_obstructed(cat_map):
    reports = obstruction_check(constant([[2, 0], [0, 0.5]]), cat_map, 3, 1e-9)
    assert [r.period for r in reports] == [1, 2, 2, 3, 3, 3, 3, 3]
    assert reports[0].deviation == approx(2.0)
    assert all(r.verdict is Verdict.FAIL for r in reports)
    assert summarize(reports) is Verdict.FAIL


def test_rotation_vanishes_at_period_four(cat_map):
    reports = obstruction_check(constant([[0, -1], [1, 0]]), cat_map, 4, 1e-9)
    by_period = {}
    for r in reports:
        by_period.setdefault(r.period, set()).add(r.verdict)
    assert reports[0].deviation == approx(4.0)
    assert by_period == {1: {Verdict.FAIL}, 2: {Verdict.FAIL}, 3: {Verdict.FAIL}, 4: {Verdict.PASS}}


@mark.parametrize(argnames='workers', argvalues=[1, 2])
def test_coboundaries_pass(cat_map, shear_coboundary, workers):
    reports = obstruction_check(shear_coboundary, cat_map, 4, 1e-9, workers=workers)
    assert summarize(reports) is Verdict.PASS
    assert max(r.deviation for r in reports) < 1e-12


def test_locally_constant_coboundary_passes(full_shift, dirs):
    from livsic_tools.utils.synth import make_coboundary
    from livsic_tools.utils.validate import load_spec

    transfer = CocycleSpec.from_dict(load_spec(dirs['data'] / 'sft_locally_constant.json')['transfer'])
    reports = obstruction_check(make_coboundary(transfer, full_shift), full_shift, 6, 1e-9)
    assert len(reports) == sum(len(full_shift.enumerate_periodic(n)) for n in range(1, 7))
    assert summarize(reports) is Verdict.PASS


def test_worker_count_does_not_change_reports(cat_map):
    rotation = constant([[0, -1], [1, 0]])
    one, two = (obstruction_check(rotation, cat_map, 3, 1e-9, workers=w) for w in (1, 2))
    assert [r.row() for r in one] == [r.row() for r in two]


def test_report_rows(cat_map):
    row = obstruction_check(constant([[2, 0], [0, 0.5]]), cat_map, 1, 1e-9)[0].row()
    assert row['period'] == 1
    assert row['orbit_key'] == '(0,0)'
    assert row['verdict'] == 'fail'
    assert row['log_norm'] == approx(log(2))
    assert row['error'] == ''


def test_periodic_exponents(cat_map):
    exponents = periodic_exponents(constant([[2, 0], [0, 0.5]]), cat_map, 3)
    assert exponents.sup_plus == approx(log(2))
    assert exponents.inf_minus == approx(-log(2))
    assert len(exponents.table) == 8


def test_near_closing_of_coboundary(cat_map, shear_coboundary):
    result = near_closing_deviation(shear_coboundary, cat_map, near_origin, 1)
    assert result.closed.point == TorusPoint.exact(0, 0)
    assert 0.0 < result.delta < 0.01
    # C is Lipschitz, so the deviation is of the order of the shadowing distance
    assert result.deviation <= 50 * result.delta


def test_near_closing_failures(cat_map, shear_coboundary):
    with raises(ClosingFailed):
        near_closing_deviation(shear_coboundary, cat_map, TorusPoint((0.3, 0.1)), 1)
    with raises(ObstructionFailed):
        near_closing_deviation(constant([[2, 0], [0, 0.5]]), cat_map, near_origin, 1)


def test_find_near_returns(cat_map, rng):
    found = find_near_returns(cat_map, rng, 5, 4, orbit_len=2000)
    assert len(found) == 5
    for x, n in found:
        assert 1 <= n <= 4
        assert cat_map.distance(x, cat_map.iterate(x, n)) < cat_map.closing_radius


def test_find_near_returns_by_band(cat_map, rng):
    found = find_near_returns(cat_map, rng, 12, 4, strata=3)
    bands = [min(2, int(np.log2(0.1 / cat_map.distance(x, cat_map.iterate(x, n))))) for x, n in found]
    assert sorted(bands) == [0] * 4 + [1] * 4 + [2] * 4


def test_near_closing_batch(cat_map, shear_coboundary, rng):
    batch = near_closing_batch(shear_coboundary, cat_map, rng, count=10, n_max=4)
    assert 0 < len(batch.results) <= 10
    assert batch.max_constant < 50
    assert batch.max_deviation == max(r.deviation for r in batch.results)


def test_near_closing_slope_needs_two_bands():
    flat = [NearClosing(deviation=d, delta=0.0625, constant=d / 0.0625, closed=None) for d in (1e-3, 2e-3, 4e-3)]
    assert all(isnan(value) for value in near_closing_slope(flat))

    closer = NearClosing(deviation=2.5e-4, delta=0.015625, constant=0.016, closed=None)
    rounding = NearClosing(deviation=1e-13, delta=0.001, constant=1e-10, closed=None)
    slope, _ = near_closing_slope(flat + [closer, rounding])
    assert slope == approx(2.0)


@mark.parametrize(
    argnames=['slope', 'max_deviation', 'verdict'],
    argvalues=[
        (1.0, 0.1, Verdict.PASS),
        (0.6, 0.1, Verdict.PASS),
        (0.1308, 0.1, Verdict.INCONCLUSIVE),
        (nan, 0.1, Verdict.INCONCLUSIVE),
        (nan, 1e-15, Verdict.PASS),
    ],
)
def test_near_closing_slope_verdict(slope, max_deviation, verdict):
    result = NearClosing(deviation=max_deviation, delta=0.05, constant=1.0, closed=None)
    batch = NearClosingBatch(results=(result,), max_constant=1.0, max_deviation=max_deviation, slope=slope, intercept=0.0)
    assert batch.slope_verdict(alpha=1.0) is verdict
    assert replace(batch, results=()).slope_verdict(alpha=1.0) is Verdict.INCONCLUSIVE


def test_near_closing_of_locally_constant_coboundary(golden_mean, dirs, rng):
    from livsic_tools.utils.synth import make_coboundary
    from livsic_tools.utils.validate import load_spec

    transfer = CocycleSpec.from_dict(load_spec(dirs['data'] / 'sft_locally_constant3.json')['transfer'])
    cocycle = make_coboundary(transfer, golden_mean)
    batch = near_closing_batch(cocycle, golden_mean, rng, count=20)
    assert len(batch.results) == 20
    assert batch.max_deviation <= 1e-9
    assert isnan(batch.slope)
    assert batch.slope_verdict(cocycle.alpha) is Verdict.PASS


@mark.parametrize(argnames='mode', argvalues=['symmetric', 'half-rate'])
def test_distortion_along_shadowing_orbit(cat_map, shear_coboundary, mode):
    fixed = cat_map.enumerate_periodic(1)[0]
    result = distortion_check(shear_coboundary, cat_map, fixed, near_origin, 1, mode)
    assert result.within
    assert 0.5 <= result.norm_ratio <= 2.0


def test_distortion_preconditions(cat_map, shear_coboundary):
    fixed = cat_map.enumerate_periodic(1)[0]
    with raises(ProfileViolated):
        distortion_check(shear_coboundary, cat_map, fixed, near_origin, 1, 'symmetric', delta=1e-6)
    with raises(ProfileViolated):
        distortion_check(constant([[2, 0], [0, 0.5]]), cat_map, fixed, near_origin, 1, 'symmetric')
    with raises(ValueError):
        distortion_check(shear_coboundary, cat_map, fixed, near_origin, 1, 'sideways')


@mark.parametrize(argnames='system', argvalues=['cat_map', 'golden_mean'])
@mark.parametrize(argnames=['mode', 'bound'], argvalues=[('half-rate', 1.0), ('symmetric', 2.0)])
def test_shadowing_points_follow_the_orbit(request, rng, system, mode, bound):
    base = request.getfixturevalue(system)
    p = base.enumerate_periodic(2)[0]
    x = shadowing_point(base, p, 6, mode, 0.01, rng)
    profile = base.closeness_profile(p.start, x, 6)
    constant = profile.half_rate_constant() if mode == 'half-rate' else profile.symmetric_constant()
    assert constant <= bound * 0.01 * (1 + 1e-9)


def test_half_rate_distortion_of_diagonal_cocycle(cat_map, rng):
    diag = constant([[2, 0], [0, 0.5]])
    batch = distortion_batch(diag, cat_map, rng, 'half-rate')
    assert len(batch.samples) == 30
    assert batch.verdict is Verdict.PASS
    for sample in batch.samples:
        assert sample.n in periodic_good_times(diag, cat_map, sample.orbit, 12)
        assert sample.result.norm_ratio == approx(1.0)
        assert sample.result.inv_ratio == approx(1.0)


def test_symmetric_distortion_needs_vanishing_exponents(cat_map, rng):
    batch = distortion_batch(constant([[2, 0], [0, 0.5]]), cat_map, rng, 'symmetric', max_attempts=20)
    assert batch.samples == ()
    assert batch.attempts == 20
    assert batch.verdict is Verdict.INCONCLUSIVE


@mark.parametrize(argnames='mode', argvalues=['symmetric', 'half-rate'])
def test_distortion_of_coboundary(cat_map, shear_coboundary, rng, mode):
    batch = distortion_batch(shear_coboundary, cat_map, rng, mode)
    assert len(batch.samples) == 30
    assert batch.verdict is Verdict.PASS
    assert all(row['mode'] == mode for row in (s.row() for s in batch.samples))


def test_distortion_batch_fails_on_a_ratio_out_of_band(cat_map, shear_coboundary, rng):
    batch = distortion_batch(shear_coboundary, cat_map, rng, 'half-rate', count=2)
    stretched = replace(batch.samples[0], result=replace(batch.samples[0].result, norm_ratio=3.0, within=False))
    assert replace(batch, samples=(stretched,) + batch.samples[1:]).verdict is Verdict.FAIL
    with raises(ValueError):
        distortion_batch(shear_coboundary, cat_map, rng, 'sideways')


def test_shadow_norm_bounds(cat_map):
    fixed = cat_map.enumerate_periodic(1)[0]
    bounds = shadow_norm_bounds(constant([[2, 0], [0, 0.5]]), cat_map, fixed, near_origin, 5, 0.1)
    assert bounds.lambda_plus == approx(log(2))
    assert bounds.lambda_minus == approx(-log(2))
    assert bounds.constant == approx(1.0)
    assert np.isfinite(bounds.constant)
