from fractions import Fraction

import numpy as np
from pytest import approx, fixture, mark, raises

from livsic_tools.utils.cocycle import CocycleSpec, eval_generator
from livsic_tools.utils.dynamics import SymbolicPoint, TorusPoint
from livsic_tools.utils.errors import (NoConvergence, ObstructionFailed,
                                       OrbitNotDense)
from livsic_tools.utils.operators import InvertibleOp, ScaledProduct, op_metric
from livsic_tools.utils.synth import make_coboundary
from livsic_tools.utils.transfer import (TransferMap, coboundary_identity,
                                         compare_up_to_constant,
                                         holder_exponent_estimate,
                                         interpolation_budget,
                                         measure_coverage, on_orbit_residual,
                                         point_from_dict, point_to_dict,
                                         residual, solve_holonomy_extension,
                                         solve_orbit_propagation)

x0 = TorusPoint((0.3, 0.6))


@fixture(scope='module')
def transfer() -> CocycleSpec:
    return CocycleSpec.from_dict(
        {'kind': 'exp_trig', 'dim': 2, 'terms': [{'coef': [[0, 0.3], [0, 0]], 'freq': [1, 0]}]}
    )


@fixture(scope='module')
def coboundary(transfer, cat_map) -> CocycleSpec:
    return make_coboundary(transfer, cat_map)


@fixture(scope='module')
def truth(transfer, cat_map):
    return lambda x: eval_generator(transfer, cat_map, x)


@fixture(scope='module')
def probes(cat_map):
    return cat_map.probe_points(64, np.random.default_rng(0))


@fixture(scope='module')
def orbit_solution(coboundary, cat_map, probes) -> TransferMap:
    z0 = cat_map.random_point(np.random.default_rng(1))
    return solve_orbit_propagation(coboundary, cat_map, z0, 2000, 0.05, probes, period_max=3)


@fixture(scope='module')
def patch_grid(cat_map):
    return cat_map.probe_points(16, np.random.default_rng(2), around=x0, radius=0.1)


@fixture(scope='module')
def patch_solution(coboundary, cat_map, patch_grid) -> TransferMap:
    return solve_holonomy_extension(coboundary, cat_map, x0, patch_grid)


@mark.parametrize(
    argnames='point',
    argvalues=[
        TorusPoint.exact(Fraction(1, 3), Fraction(2, 7)),
        TorusPoint((0.125, 0.75)),
        SymbolicPoint(word=(0, 1, 1), origin=1, left_tail=(0, 1), right_tail=(1,)),
    ],
)
def test_points_survive_serialization(point):
    assert point_from_dict(point_to_dict(point)) == point


def test_orbit_propagation(orbit_solution, coboundary, cat_map, probes):
    assert len(orbit_solution) == 2001
    assert orbit_solution.dim == 2
    assert orbit_solution.method == 'orbit_propagation'
    assert orbit_solution.coverage_radius <= 0.05
    assert orbit_solution.coverage_radius == measure_coverage(cat_map, orbit_solution.index, probes)
    assert op_metric(orbit_solution.values[0].to_op(), InvertibleOp.identity(2)) == 0.0
    assert on_orbit_residual(coboundary, cat_map, orbit_solution) < 1e-10


@mark.parametrize(argnames=['i', 'n'], argvalues=[(0, 1), (10, 50), (500, 1000)])
def test_coboundary_identity_along_the_orbit(orbit_solution, coboundary, cat_map, i, n):
    assert coboundary_identity(coboundary, cat_map, orbit_solution, i, n) < 1e-9


def test_orbit_solution_matches_truth(orbit_solution, truth, probes):
    budget = interpolation_budget(truth, orbit_solution, probes)
    comparison = compare_up_to_constant(orbit_solution, truth, probes)
    assert op_metric(comparison.constant, truth(orbit_solution.anchor_point)) < 1e-12
    assert comparison.sup <= budget + 1e-8
    assert budget < 0.5


def test_probe_residual(orbit_solution, coboundary, cat_map, probes):
    result = residual(coboundary, cat_map, orbit_solution, probes)
    assert len(result.per_probe) == len(probes)
    assert 0.0 <= result.mean <= result.sup
    assert set(result.per_probe[0]) == {'point', 'residual', 'd_x', 'd_fx'}
    # The residual comes from nearest-sample interpolation at x and fx only
    assert result.sup < 4 * 0.3 * 2 * np.pi * 0.05 * 1.3**2


def test_orbit_propagation_refusals(coboundary, cat_map, probes):
    diag = CocycleSpec.from_dict({'kind': 'constant', 'matrix': [[2, 0], [0, 0.5]]})
    with raises(ObstructionFailed):
        solve_orbit_propagation(diag, cat_map, x0, 100, 0.05, probes, period_max=2)
    with raises(OrbitNotDense):
        solve_orbit_propagation(coboundary, cat_map, x0, 10, 0.05, probes, precheck=False)


def test_symbolic_orbit_propagation(full_shift, dirs):
    from livsic_tools.utils.validate import load_spec

    rng = np.random.default_rng(3)
    transfer = CocycleSpec.from_dict(load_spec(dirs['data'] / 'sft_locally_constant.json')['transfer'])
    cocycle = make_coboundary(transfer, full_shift)
    probes = full_shift.probe_points(64, rng)
    z0 = full_shift.random_point(rng, half_width=2032)
    solution = solve_orbit_propagation(cocycle, full_shift, z0, 2000, 0.1, probes, period_max=4)
    assert solution.coverage_radius <= 0.0625
    # Nearest samples share the window the table reads, so interpolation is exact
    assert residual(cocycle, full_shift, solution, probes).sup < 1e-9
    truth = lambda x: eval_generator(transfer, full_shift, x)
    assert compare_up_to_constant(solution, truth, probes).sup < 1e-9


def test_holonomy_extension(patch_solution, patch_grid, truth):
    assert patch_solution.method == 'holonomy_extension'
    assert len(patch_solution) == len(patch_grid) + 1
    assert patch_solution.anchor_point == x0
    assert patch_solution.coverage_radius == 0.0
    for z in patch_grid:
        assert op_metric(patch_solution(z), truth(z) @ truth(x0).inv()) < 1e-8


def test_extension_orders_agree(coboundary, cat_map, patch_grid, patch_solution):
    other = solve_holonomy_extension(coboundary, cat_map, x0, patch_grid, order='stable_first')
    assert compare_up_to_constant(patch_solution, other, patch_grid).sup < 1e-8
    with raises(ValueError):
        solve_holonomy_extension(coboundary, cat_map, x0, patch_grid, order='sideways')


def test_extension_fails_everywhere(coboundary, cat_map):
    with raises(NoConvergence):
        solve_holonomy_extension(coboundary, cat_map, x0, [TorusPoint((0.8, 0.1))])


def test_methods_agree_up_to_a_constant(orbit_solution, patch_solution, patch_grid, truth):
    between = compare_up_to_constant(patch_solution, orbit_solution, patch_grid)
    budget = interpolation_budget(truth, orbit_solution, [x0, *patch_grid])
    assert between.sup <= 2 * 1.3**3 * budget + 1e-7


def test_right_multiply(orbit_solution, probes):
    g = InvertibleOp.from_matrix([[1, 2], [0, 3]])
    shifted = orbit_solution.right_multiply(g)
    comparison = compare_up_to_constant(orbit_solution, shifted, probes)
    assert comparison.sup < 1e-9
    assert op_metric(comparison.constant, g) < 1e-12


def test_transfer_map_round_trip(orbit_solution, cat_map, probes):
    restored = TransferMap.from_dict(orbit_solution.to_dict(), cat_map)
    assert len(restored) == len(orbit_solution)
    assert restored.anchor_point == orbit_solution.anchor_point
    assert compare_up_to_constant(orbit_solution, restored, probes).sup == 0.0


def test_holder_exponent_estimate(cat_map, truth):
    rng = np.random.default_rng(4)
    points = []
    # Two clusters spanning many scales, centred where C changes fastest
    for centre in ((0.0, 0.3), (0.5, 0.7)):
        radii = np.exp(rng.uniform(np.log(1e-5), np.log(0.1), size=300))
        angles = rng.uniform(0, 2 * np.pi, size=300)
        points.extend(cat_map.displace(TorusPoint(centre), (r * np.cos(a), r * np.sin(a))) for r, a in zip(radii, angles))
    solution = TransferMap(
        base=cat_map,
        points=points,
        values=[ScaledProduct.from_op(truth(x)) for x in points],
        method='orbit_propagation',
        coverage_radius=0.0,
    )
    fit = holder_exponent_estimate(solution, 600, rng)
    assert fit.alpha == approx(1.0, abs=0.3)
