import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from fractions import Fraction
from functools import partial
from math import log

import numpy as np

from .cocycle import CocycleSpec, eval_many, orbit_product
from .dynamics import (BasePoint, BaseSystem, NearestIndex, SymbolicPoint,
                       TorusPoint)
from .errors import (BracketFailed, InadmissibleSplice, LivsicError,
                     NoConvergence, ObstructionFailed, OrbitNotDense,
                     TooFarApart)
from .holonomy import HolderFit, envelope_fit, holonomy
from .operators import InvertibleOp, Norm, ScaledProduct, op_metric
from .periodic import Verdict, obstruction_check
from .report import parallel_map

logger = logging.getLogger(__name__)

METHODS = ('orbit_propagation', 'holonomy_extension')


def point_to_dict(x: BasePoint):
    if isinstance(x, TorusPoint):
        return [str(c) if isinstance(c, Fraction) else c for c in x.coords]
    return {'word': list(x.word), 'origin': x.origin, 'left': list(x.left_tail), 'right': list(x.right_tail)}


def point_from_dict(block) -> BasePoint:
    if isinstance(block, dict):
        return SymbolicPoint(
            word=tuple(block['word']),
            origin=int(block['origin']),
            left_tail=tuple(block['left']),
            right_tail=tuple(block['right']),
        )
    return TorusPoint(tuple(Fraction(c) if isinstance(c, str) else float(c) for c in block))


@dataclass(eq=False)
class TransferMap:
    """A sampled solution C of A(x) = C(fx)·C(x)⁻¹, interpolated by nearest sample

    Each sample value is a `ScaledProduct`, so solutions of non-coboundaries
    can still be stored and inspected. `samples[anchor]` is the anchor z₀
    with C(z₀) = Id.
    """

    base: BaseSystem
    points: list
    values: list[ScaledProduct]
    method: str
    anchor: int = 0
    coverage_radius: float = float('nan')
    norm: Norm = 'inf'
    _index: list = field(default_factory=list, repr=False)

    def __len__(self) -> int:
        return len(self.points)

    @property
    def dim(self) -> int:
        return self.values[0].dim

    @property
    def anchor_point(self) -> BasePoint:
        return self.points[self.anchor]

    @property
    def index(self) -> NearestIndex:
        if not self._index:
            self._index.append(self.base.build_index(self.points))
        return self._index[0]

    def nearest(self, x: BasePoint) -> tuple[int, float]:
        return self.index.query(x)

    def evaluate(self, x: BasePoint) -> InvertibleOp:
        return self.values[self.nearest(x)[0]].to_op()

    def __call__(self, x: BasePoint) -> InvertibleOp:
        return self.evaluate(x)

    def right_multiply(self, g: InvertibleOp) -> 'TransferMap':
        """The solution x ↦ C(x)·G, same samples"""
        scaled = ScaledProduct.from_op(g)
        return TransferMap(
            base=self.base,
            points=self.points,
            values=[scaled.then(v) for v in self.values],
            method=self.method,
            anchor=self.anchor,
            coverage_radius=self.coverage_radius,
            norm=self.norm,
        )

    def to_dict(self) -> dict:
        return {
            'method': self.method,
            'anchor': point_to_dict(self.anchor_point),
            'anchor_index': self.anchor,
            'coverage_radius': self.coverage_radius,
            'norm': self.norm,
            'base': self.base.to_dict(),
            'samples': [
                {
                    'point': point_to_dict(x),
                    'matrix': v.unit.tolist(),
                    'log_scale': v.log_scale,
                    'inverse': v.inv_unit.tolist(),
                    'inv_log_scale': v.inv_log_scale,
                }
                for x, v in zip(self.points, self.values)
            ],
        }

    @classmethod
    def from_dict(cls, block: dict, base: BaseSystem) -> 'TransferMap':
        samples = block['samples']
        return cls(
            base=base,
            points=[point_from_dict(s['point']) for s in samples],
            values=[
                ScaledProduct(
                    unit=np.array(s['matrix'], dtype=float),
                    log_scale=float(s['log_scale']),
                    inv_unit=np.array(s['inverse'], dtype=float),
                    inv_log_scale=float(s['inv_log_scale']),
                )
                for s in samples
            ],
            method=block['method'],
            anchor=int(block['anchor_index']),
            coverage_radius=float(block['coverage_radius']),
            norm=block['norm'],
        )


def measure_coverage(base: BaseSystem, index: NearestIndex, probes: Sequence[BasePoint]) -> float:
    """Largest distance from a probe to its nearest sample"""
    return max(index.query(x)[1] for x in probes)


def solve_orbit_propagation(
    spec: CocycleSpec,
    base: BaseSystem,
    z0: BasePoint,
    orbit_len: int,
    grid_eps: float,
    probes: Sequence[BasePoint],
    precheck: bool = True,
    period_max: int = 8,
    tol_base: float = 1e-9,
    norm: Norm = 'inf',
) -> TransferMap:
    """C(fⁿz₀) = A_{z₀}^n with C(z₀) = Id, for 0 ≤ n ≤ orbit_len

    :param probes: Points whose nearest-sample distance defines the coverage radius
    :type probes: `Sequence[BasePoint]`
    :param precheck: Run the obstruction battery first and refuse on failure, defaults to True
    :type precheck: `bool`, optional
    :raises ObstructionFailed: If the pre-check ran and some orbit failed
    :raises OrbitNotDense: If some probe is farther than grid_eps from every orbit point
    """
    if precheck:
        failed = [r for r in obstruction_check(spec, base, period_max, tol_base, norm) if r.verdict is Verdict.FAIL]
        if failed:
            worst = max(failed, key=lambda r: r.deviation)
            raise ObstructionFailed(
                f'{len(failed)} periodic orbits fail the identity test, worst {worst.orbit.key} '
                f'(period {worst.period}, deviation {worst.deviation:.3e}); A is not a coboundary'
            )
    else:
        logger.warning('Obstruction pre-check skipped; the orbit solution may not solve anything')

    points = base.orbit(z0, orbit_len)
    values, product = [ScaledProduct.identity(spec.dim)], ScaledProduct.identity(spec.dim)
    for op in eval_many(spec, base, points[:-1]):
        product = product.compose(op)
        values.append(product)

    solution = TransferMap(base=base, points=points, values=values, method='orbit_propagation', norm=norm)
    solution.coverage_radius = measure_coverage(base, solution.index, probes)
    logger.info('Orbit of length %d covers the probes within %.4g', orbit_len, solution.coverage_radius)
    if solution.coverage_radius > grid_eps:
        raise OrbitNotDense(
            f'Orbit of length {orbit_len} leaves a probe {solution.coverage_radius:.4g} from every sample '
            f'(grid_eps={grid_eps}); increase orbit_len'
        )
    return solution


def _extend_to(z, spec, base, x0, order, tol, n_cap, norm) -> tuple[BasePoint, InvertibleOp] | str:
    try:
        if order == 'unstable_first':
            # Ĉ(z) = H^u_{[x0,z],z} H^s_{x0,[x0,z]}
            w = base.bracket(x0, z)
            first, second = ('stable', x0, w), ('unstable', w, z)
        else:
            # Ĉ(z) = H^s_{[z,x0],z} H^u_{x0,[z,x0]}
            w = base.bracket(z, x0)
            first, second = ('unstable', x0, w), ('stable', w, z)
        legs = [holonomy(spec, base, a, b, side, tol, n_cap, norm, strict=True) for side, a, b in (first, second)]
    except (TooFarApart, InadmissibleSplice) as e:
        return f'{BracketFailed.__name__}: {e}'
    except LivsicError as e:
        return f'{type(e).__name__}: {e}'
    return z, legs[1].value @ legs[0].value


def solve_holonomy_extension(
    spec: CocycleSpec,
    base: BaseSystem,
    x0: BasePoint,
    grid: Sequence[BasePoint],
    order: str = 'unstable_first',
    tol: float = 1e-9,
    n_cap: int = 400,
    norm: Norm = 'inf',
    workers: int = 1,
) -> TransferMap:
    """Extend C(x₀) = Id over a product neighbourhood by composing two holonomies

    With `order='unstable_first'` each grid point z gets
    H^u_{[x₀,z],z}·H^s_{x₀,[x₀,z]}; `order='stable_first'` goes through
    [z, x₀] instead. Grid points whose bracket or holonomies fail are
    logged and skipped.

    :param grid: The points to extend to; `base.probe_points(count, rng, around=x0, radius=r)` gives a patch
    :type grid: `Sequence[BasePoint]`
    """
    if order not in ('unstable_first', 'stable_first'):
        raise ValueError(f'order must be "unstable_first" or "stable_first", got {order!r}')
    targets = [z for z in grid if base.distance(z, x0) > 0.0]
    job = partial(_extend_to, spec=spec, base=base, x0=x0, order=order, tol=tol, n_cap=n_cap, norm=norm)

    points, values = [x0], [ScaledProduct.identity(spec.dim)]
    for z, outcome in zip(targets, parallel_map(job, targets, workers)):
        if isinstance(outcome, str):
            logger.warning('Grid point %s skipped: %s', z, outcome)
            continue
        points.append(outcome[0])
        values.append(ScaledProduct.from_op(outcome[1]))
    if len(points) == 1 and targets:
        raise NoConvergence('Holonomy extension failed at every grid point')

    solution = TransferMap(base=base, points=points, values=values, method='holonomy_extension', norm=norm)
    solution.coverage_radius = measure_coverage(base, solution.index, grid)
    return solution


@dataclass(frozen=True)
class Residual:
    sup: float
    mean: float
    per_probe: tuple[dict, ...]


def residual(spec: CocycleSpec, base: BaseSystem, solution: TransferMap, probes: Sequence[BasePoint]) -> Residual:
    """sup and mean over probes of op_metric(A(x), C(fx)·C(x)⁻¹)

    Each probe row also records how far x and fx are from their nearest
    samples, the interpolation part of the residual.
    """
    rows = []
    for x, a in zip(probes, eval_many(spec, base, list(probes))):
        fx = base.step(x)
        i, d_x = solution.nearest(x)
        j, d_fx = solution.nearest(fx)
        c_x, c_fx = solution.values[i], solution.values[j]
        value = op_metric(a, c_x.inv().then(c_fx).to_op(), solution.norm)
        rows.append({'point': str(x), 'residual': value, 'd_x': d_x, 'd_fx': d_fx})
    values = [row['residual'] for row in rows]
    return Residual(sup=max(values), mean=float(np.mean(values)), per_probe=tuple(rows))


def on_orbit_residual(spec: CocycleSpec, base: BaseSystem, solution: TransferMap) -> float:
    """Max over consecutive orbit samples of op_metric(A(x_i), C(x_{i+1})·C(x_i)⁻¹)"""
    if solution.method != 'orbit_propagation':
        raise ValueError('On-orbit residuals need an orbit propagation solution')
    worst = 0.0
    ops = eval_many(spec, base, solution.points[:-1])
    for a, here, there in zip(ops, solution.values[:-1], solution.values[1:]):
        worst = max(worst, op_metric(a, here.inv().then(there).to_op(), solution.norm))
    return worst


def coboundary_identity(spec: CocycleSpec, base: BaseSystem, solution: TransferMap, i: int, n: int) -> float:
    """op_metric(A_x^n, C(fⁿx)·C(x)⁻¹) for the samples x = points[i] and fⁿx = points[i + n]"""
    if solution.method != 'orbit_propagation':
        raise ValueError('The coboundary identity along orbits needs an orbit propagation solution')
    along = orbit_product(spec, base, solution.points[i], n).to_op()
    claimed = solution.values[i].inv().then(solution.values[i + n]).to_op()
    return op_metric(along, claimed, solution.norm)


@dataclass(frozen=True)
class Comparison:
    sup: float
    constant: InvertibleOp


def compare_up_to_constant(
    first: Callable[[BasePoint], InvertibleOp],
    second: Callable[[BasePoint], InvertibleOp],
    probes: Sequence[BasePoint],
    anchor: BasePoint | None = None,
    norm: Norm = 'inf',
) -> Comparison:
    """sup over probes of op_metric(C₂(x), C₁(x)·D) with D = C₁(a)⁻¹·C₂(a)

    Solutions of the same equation over a transitive base differ by such a
    constant right factor. `first` and `second` are `TransferMap`s or any
    point-to-operator callables, e.g. a closed-form ground truth.

    :param anchor: The point a; the anchor of `first` when it is a `TransferMap`
    :type anchor: `BasePoint | None`, optional
    """
    if anchor is None:
        anchor = first.anchor_point
    constant = first(anchor).inv() @ second(anchor)
    sup = max(op_metric(second(x), first(x) @ constant, norm) for x in probes)
    return Comparison(sup=sup, constant=constant)


def holder_exponent_estimate(
    solution: TransferMap,
    pair_budget: int,
    rng: np.random.Generator,
    d_max: float | None = None,
) -> HolderFit:
    """Fit op_metric(C(x), C(y)) ≤ c·d(x, y)^α over pairs of samples

    Pairs join a random sample to the sample nearest a perturbation of it at
    a log-uniform radius. Only distances in [4·coverage_radius, d_max] enter
    the fit; below that interpolation noise dominates.

    :param d_max: Upper end of the fitted range, 0.2 on the torus and the metric base on a symbolic base by default
    :type d_max: `float | None`, optional
    :raises InsufficientSpread: Too few usable pairs, distance decades or fitted bins
    """
    base = solution.base
    if d_max is None:
        d_max = 0.2 if base.kind == 'toral' else base.metric_base
    index = solution.index
    distances, values = [], []
    anchors = rng.integers(len(solution), size=pair_budget)
    radii = np.exp(rng.uniform(log(d_max * 1e-4), log(d_max), size=pair_budget))
    for i, r in zip(anchors, radii):
        i, x = int(i), solution.points[int(i)]
        j, _ = index.query(base.perturb(x, float(r), rng))
        if j == i:
            j, _ = index.other(x, i)
        if j == i:
            continue
        distances.append(base.distance(x, solution.points[j]))
        values.append(_scaled_distance(solution.values[i], solution.values[j], solution.norm))
    return envelope_fit(distances, values, d_min=4 * solution.coverage_radius, d_max=d_max)


def _scaled_distance(p: ScaledProduct, q: ScaledProduct, norm: Norm) -> float:
    try:
        return op_metric(p.to_op(), q.to_op(), norm)
    except LivsicError:
        return float('inf')


def interpolation_budget(
    truth: Callable[[BasePoint], InvertibleOp], solution: TransferMap, probes: Sequence[BasePoint]
) -> float:
    """sup over probes of op_metric(C(x), C(s)), s the sample nearest x, for a known C

    The error nearest-sample evaluation of `solution` is allowed at the probes.
    """
    worst = 0.0
    for x in probes:
        i, _ = solution.nearest(x)
        worst = max(worst, op_metric(truth(x), truth(solution.points[i]), solution.norm))
    return worst
