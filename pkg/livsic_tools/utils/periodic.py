import logging
from dataclasses import dataclass
from enum import Enum
from functools import partial
from math import exp, floor, isfinite, isnan, log, log2, log10

import numpy as np
from scipy.stats import linregress

from .cocycle import CocycleSpec, eval_many, fold, good_times, norm_bound, orbit_product
from .defaults import (DISTORTION_COUNT, INCONCLUSIVE_FACTOR, NEAR_CLOSING_COUNT,
                       NEAR_CLOSING_SLOPE_SLACK, NEAR_RETURN_STRATA, RATIO_BAND)
from .dynamics import BasePoint, BaseSystem, ClosedOrbit, PeriodicOrbit
from .errors import (ClosingFailed, LivsicError, NotCloseEnough,
                     ObstructionFailed, ProfileViolated)
from .operators import Norm, ScaledProduct, deviation_from_identity
from .report import parallel_map

logger = logging.getLogger(__name__)


class Verdict(str, Enum):
    PASS = 'pass'
    FAIL = 'fail'
    INCONCLUSIVE = 'inconclusive'


def classify(deviation: float, tolerance: float) -> Verdict:
    if deviation <= tolerance:
        return Verdict.PASS
    if deviation <= INCONCLUSIVE_FACTOR * tolerance:
        return Verdict.INCONCLUSIVE
    return Verdict.FAIL


@dataclass(frozen=True)
class ObstructionReport:
    """The periodic product A_p^n at one orbit, compared against Id"""

    orbit: PeriodicOrbit
    product: ScaledProduct | None
    deviation: float
    tolerance: float
    verdict: Verdict
    error: str | None = None

    @property
    def period(self) -> int:
        return self.orbit.period

    def row(self, norm: Norm = 'inf') -> dict:
        return {
            'period': self.period,
            'orbit_key': self.orbit.key,
            'deviation': self.deviation,
            'tolerance': self.tolerance,
            'verdict': self.verdict.value,
            'log_norm': self.product.log_norm(norm) if self.product else float('nan'),
            'log_inv_norm': self.product.log_inv_norm(norm) if self.product else float('nan'),
            'error': self.error or '',
        }


def periodic_product(spec: CocycleSpec, base: BaseSystem, orbit: PeriodicOrbit) -> ScaledProduct:
    """A_p^n at the exact periodic point p = orbit.start, n the period"""
    return fold(eval_many(spec, base, list(orbit.points)), spec.dim)


def _check_orbit(
    orbit: PeriodicOrbit, spec: CocycleSpec, base: BaseSystem, bound: float, tol_base: float, norm: Norm
) -> ObstructionReport:
    try:
        factors = eval_many(spec, base, list(orbit.points))
        local = max([bound] + [max(op.norm(norm), op.inv_norm(norm)) for op in factors])
        product = fold(factors, spec.dim)
        tolerance = tol_base * local ** (2 * orbit.period)
        deviation = deviation_from_identity(product, norm)
    except LivsicError as e:
        logger.warning('Orbit %s skipped: %s', orbit.key, e)
        return ObstructionReport(
            orbit=orbit,
            product=None,
            deviation=float('nan'),
            tolerance=float('nan'),
            verdict=Verdict.INCONCLUSIVE,
            error=f'{type(e).__name__}: {e}',
        )
    return ObstructionReport(
        orbit=orbit,
        product=product,
        deviation=deviation,
        tolerance=tolerance,
        verdict=classify(deviation, tolerance),
    )


def obstruction_check(
    spec: CocycleSpec,
    base: BaseSystem,
    period_max: int,
    tol_base: float,
    norm: Norm = 'inf',
    workers: int = 1,
    bound: float | None = None,
) -> list[ObstructionReport]:
    """Test A_p^n = Id at every periodic orbit of minimal period n ≤ period_max

    The tolerance at period n is tol_base·R^{2n}, R the generator norm bound
    (raised to the largest factor norm met on the orbit itself). Deviations
    within `INCONCLUSIVE_FACTOR` times the tolerance are inconclusive.

    :param workers: Number of processes to spread orbits over, defaults to 1
    :type workers: `int`, optional
    :param bound: The norm bound R; sampled with `norm_bound` if omitted
    :type bound: `float | None`, optional
    :return: One report per orbit, sorted by period then orbit key
    :rtype: `list[ObstructionReport]`
    """
    bound = norm_bound(spec, base, norm) if bound is None else bound
    orbits = [orbit for n in range(1, period_max + 1) for orbit in base.enumerate_periodic(n)]
    logger.info('Checking %d periodic orbits up to period %d', len(orbits), period_max)
    check = partial(_check_orbit, spec=spec, base=base, bound=bound, tol_base=tol_base, norm=norm)
    reports = parallel_map(check, orbits, workers)
    return sorted(reports, key=lambda r: (r.period, r.orbit.key))


def combine(verdicts) -> Verdict:
    """fail if anything failed, else inconclusive if anything was, else pass"""
    verdicts = {Verdict(v) for v in verdicts}
    if Verdict.FAIL in verdicts:
        return Verdict.FAIL
    if Verdict.INCONCLUSIVE in verdicts:
        return Verdict.INCONCLUSIVE
    return Verdict.PASS


def summarize(reports: list[ObstructionReport]) -> Verdict:
    return combine(r.verdict for r in reports)


def periodic_rates(product: ScaledProduct, period: int) -> tuple[float, float]:
    """λ₊(p) and λ₋(p): spectral radii of A_p^n and its inverse, per step"""
    rho = np.abs(np.linalg.eigvals(product.unit)).max()
    rho_inv = np.abs(np.linalg.eigvals(product.inv_unit)).max()
    return (
        (product.log_scale + log(rho)) / period,
        -(product.inv_log_scale + log(rho_inv)) / period,
    )


@dataclass(frozen=True)
class PeriodicExponents:
    sup_plus: float
    inf_minus: float
    table: tuple[dict, ...]


def periodic_exponents(
    spec: CocycleSpec, base: BaseSystem, period_max: int, norm: Norm = 'inf'
) -> PeriodicExponents:
    """max over orbits of (1/n)·log‖A_p^n‖ and min of −(1/n)·log‖(A_p^n)⁻¹‖"""
    table = []
    for n in range(1, period_max + 1):
        for orbit in base.enumerate_periodic(n):
            product = periodic_product(spec, base, orbit)
            table.append(
                {
                    'period': n,
                    'orbit_key': orbit.key,
                    'plus': product.log_norm(norm) / n,
                    'minus': -product.log_inv_norm(norm) / n,
                }
            )
    return PeriodicExponents(
        sup_plus=max(row['plus'] for row in table),
        inf_minus=min(row['minus'] for row in table),
        table=tuple(table),
    )


@dataclass(frozen=True)
class NearClosing:
    deviation: float
    delta: float
    constant: float
    closed: ClosedOrbit


def near_closing_deviation(
    spec: CocycleSpec,
    base: BaseSystem,
    x: BasePoint,
    n: int,
    alpha: float | None = None,
    tol_base: float = 1e-9,
    norm: Norm = 'inf',
) -> NearClosing:
    """d(A_x^n, Id) along a near-return x ≈ fⁿx, and the fitted constant d(A_x^n, Id)/δ^α

    δ is the measured shadowing amplitude max_i d(f^i p, f^i x) of the
    closing orbit p.

    :raises ClosingFailed: If x does not return close enough to be closed
    :raises ObstructionFailed: If the closing orbit fails the identity test itself
    """
    alpha = spec.alpha if alpha is None else alpha
    try:
        closed = base.close_orbit(x, n)
    except NotCloseEnough as e:
        raise ClosingFailed(str(e)) from e

    report = _check_orbit(closed.orbit, spec, base, 1.0, tol_base, norm)
    if report.verdict is Verdict.FAIL:
        raise ObstructionFailed(
            f'Closing orbit {closed.orbit.key} fails the identity test (deviation {report.deviation:.3e})'
        )

    deviation = deviation_from_identity(orbit_product(spec, base, x, n), norm)
    delta = closed.profile.amplitude
    if delta == 0.0:
        constant = 0.0 if deviation <= tol_base else float('inf')
    else:
        constant = deviation / delta**alpha
    return NearClosing(deviation=deviation, delta=delta, constant=constant, closed=closed)


@dataclass(frozen=True)
class NearClosingBatch:
    results: tuple[NearClosing, ...]
    max_constant: float
    max_deviation: float
    slope: float
    intercept: float

    def slope_verdict(self, alpha: float, tol_base: float = 1e-9) -> Verdict:
        """Pass when the fitted slope is at least α − `NEAR_CLOSING_SLOPE_SLACK`

        A batch whose deviations all sit at or below `tol_base` passes
        outright; no near-returns, an unfitted slope or a shallower one is
        inconclusive.
        """
        if not self.results:
            return Verdict.INCONCLUSIVE
        if self.max_deviation <= tol_base:
            return Verdict.PASS
        if isnan(self.slope) or self.slope < alpha - NEAR_CLOSING_SLOPE_SLACK:
            return Verdict.INCONCLUSIVE
        return Verdict.PASS


def find_near_returns(
    base: BaseSystem,
    rng: np.random.Generator,
    count: int,
    n_max: int,
    orbit_len: int = 20000,
    strata: int = 1,
) -> list[tuple[BasePoint, int]]:
    """Scan seeded random orbits for points x with d(x, fⁿx) below the closing radius

    With `strata > 1` the returns are spread over dyadic bands
    [r·2^{−b−1}, r·2^{−b}) of the return distance, r the closing radius,
    each band taking an equal share of `count`; the last band also takes
    every closer return. An orbit is left at its first return closer than
    r·4^{−strata}.
    """
    quota = [count // strata + (b < count % strata) for b in range(strata)]
    settled = base.closing_radius * 2.0 ** (-2 * strata)
    found: list[tuple[BasePoint, int]] = []
    attempts = 0
    while len(found) < count and attempts < 50:
        attempts += 1
        points = base.orbit(base.random_point(rng), orbit_len)
        i = 0
        while i < len(points) - n_max and len(found) < count:
            closest = base.closing_radius
            for n in range(1, n_max + 1):
                d = base.distance(points[i], points[i + n])
                closest = min(closest, d)
                if d >= base.closing_radius:
                    continue
                band = strata - 1 if d == 0.0 else min(strata - 1, int(log2(base.closing_radius / d)))
                if quota[band] == 0:
                    continue
                quota[band] -= 1
                found.append((points[i], n))
                i += n
                break
            if closest < settled:
                # The orbit has fallen onto a periodic one; its later returns are all this close
                break
            i += 1
    return found


def near_closing_slope(results, tol_base: float = 1e-9) -> tuple[float, float]:
    """Slope and intercept of log(deviation) against log(δ) over the largest deviation per dyadic band of δ

    nan for both unless at least two bands hold a deviation above `tol_base`.
    """
    bands: dict[int, NearClosing] = {}
    for r in results:
        if r.delta <= 0.0 or r.deviation <= tol_base:
            continue
        band = floor(log2(r.delta))
        if band not in bands or r.deviation > bands[band].deviation:
            bands[band] = r
    log_delta = np.log([r.delta for r in bands.values()])
    if len(bands) < 2 or np.ptp(log_delta) == 0.0:
        return float('nan'), float('nan')
    fit = linregress(log_delta, np.log([r.deviation for r in bands.values()]))
    return float(fit.slope), float(fit.intercept)


def near_closing_batch(
    spec: CocycleSpec,
    base: BaseSystem,
    rng: np.random.Generator,
    count: int = NEAR_CLOSING_COUNT,
    n_max: int = 6,
    norm: Norm = 'inf',
    strata: int = NEAR_RETURN_STRATA,
    tol_base: float = 1e-9,
) -> NearClosingBatch:
    """Near-closing deviations over a batch of near-returns with the log-log slope of deviation against δ

    The slope is fitted to the largest deviation of each dyadic band of δ,
    the envelope a bound d(A_x^n, Id) ≤ C·δ^α has to dominate. Deviations
    at or below `tol_base` are rounding and stay out of the fit; with fewer
    than two distinct bands left the slope and intercept are nan.
    """
    results = []
    for x, n in find_near_returns(base, rng, count, n_max, strata=strata):
        try:
            results.append(near_closing_deviation(spec, base, x, n, tol_base=tol_base, norm=norm))
        except LivsicError as e:
            logger.info('Near-return at %s, n=%d skipped: %s', x, n, e)

    slope, intercept = near_closing_slope(results, tol_base)
    constants = [r.constant for r in results if isfinite(r.constant)]
    return NearClosingBatch(
        results=tuple(results),
        max_constant=max(constants, default=0.0),
        max_deviation=max((r.deviation for r in results), default=0.0),
        slope=slope,
        intercept=intercept,
    )


@dataclass(frozen=True)
class DistortionResult:
    norm_ratio: float
    inv_ratio: float
    within: bool
    mode: str


def periodic_good_times(
    spec: CocycleSpec, base: BaseSystem, p: PeriodicOrbit, n_max: int, norm: Norm = 'inf', **good_time_kwargs
) -> tuple[int, ...]:
    """Good times n ≤ n_max of the periodic point p, at its own exponent λ₊(p) by default"""
    if 'lambda_est' not in good_time_kwargs:
        good_time_kwargs['lambda_est'] = periodic_rates(periodic_product(spec, base, p), p.period)[0]
    return good_times(spec, base, p.start, n_max, norm=norm, **good_time_kwargs).times


def distortion_check(
    spec: CocycleSpec,
    base: BaseSystem,
    p: PeriodicOrbit,
    x: BasePoint,
    n: int,
    mode: str,
    delta: float | None = None,
    exponent_tol: float = 1e-6,
    norm: Norm = 'inf',
    **good_time_kwargs,
) -> DistortionResult:
    """The ratios ‖A_p^n‖/‖A_x^n‖ and ‖(A_p^n)⁻¹‖/‖(A_x^n)⁻¹‖ and whether both lie in [1/2, 2]

    `mode='symmetric'` needs d(f^j p, f^j x) ≤ δ·e^{−τ·min(j, n−j)} and
    vanishing periodic exponents at p; `mode='half-rate'` needs
    d(f^j p, f^j x) ≤ δ·e^{−τj/2} and n in the good-time set of p, taken
    at the periodic exponent λ₊(p) unless `lambda_est` is given.

    :param delta: δ of the closeness profile, defaults to the closing radius
    :type delta: `float | None`, optional
    :raises ProfileViolated: If the precondition of the mode does not hold
    """
    delta = base.closing_radius if delta is None else delta
    profile = base.closeness_profile(p.start, x, n)
    match mode:
        case 'symmetric':
            measured = profile.symmetric_constant()
            if measured > delta:
                raise ProfileViolated(f'Two-sided closeness constant {measured:.3e} exceeds delta={delta:.3e}')
            plus, minus = periodic_rates(periodic_product(spec, base, p), p.period)
            if max(abs(plus), abs(minus)) > exponent_tol:
                raise ProfileViolated(f'Periodic exponents ({plus:.3e}, {minus:.3e}) at p do not vanish')
        case 'half-rate':
            measured = profile.half_rate_constant()
            if measured > delta:
                raise ProfileViolated(f'Half-rate closeness constant {measured:.3e} exceeds delta={delta:.3e}')
            if n not in periodic_good_times(spec, base, p, n, norm=norm, **good_time_kwargs):
                raise ProfileViolated(f'n={n} is not a good time of the periodic orbit {p.key}')
        case _:
            raise ValueError(f'Unknown distortion mode {mode!r}, expected "symmetric" or "half-rate"')

    at_p, at_x = orbit_product(spec, base, p.start, n), orbit_product(spec, base, x, n)
    norm_ratio = exp(at_p.log_norm(norm) - at_x.log_norm(norm))
    inv_ratio = exp(at_p.log_inv_norm(norm) - at_x.log_inv_norm(norm))
    low, high = RATIO_BAND
    return DistortionResult(
        norm_ratio=norm_ratio,
        inv_ratio=inv_ratio,
        within=low <= norm_ratio <= high and low <= inv_ratio <= high,
        mode=mode,
    )


def shadowing_point(
    base: BaseSystem, p: PeriodicOrbit, n: int, mode: str, r: float, rng: np.random.Generator
) -> BasePoint:
    """A point x following p, …, fⁿp at scale r in the closeness profile of `mode`

    Half-rate: x on the local stable leaf of p. Symmetric: x on the stable
    leaf of f⁻ⁿz, z an unstable neighbour of fⁿp, and on the unstable leaf
    of a stable neighbour of p, so the orbits part at both ends of [0, n].

    :raises TooFarApart: If the two neighbours leave the product structure radius
    """
    stable = base.leaf_neighbor(p.start, 'stable', r, rng)
    match mode:
        case 'half-rate':
            return stable
        case 'symmetric':
            unstable = base.iterate(base.leaf_neighbor(base.iterate(p.start, n), 'unstable', r, rng), -n)
            return base.bracket(unstable, stable)
        case _:
            raise ValueError(f'Unknown distortion mode {mode!r}, expected "symmetric" or "half-rate"')


@dataclass(frozen=True)
class DistortionSample:
    orbit: PeriodicOrbit
    x: BasePoint
    n: int
    radius: float
    result: DistortionResult

    def row(self) -> dict:
        return {
            'orbit_key': self.orbit.key,
            'period': self.orbit.period,
            'n': self.n,
            'radius': self.radius,
            'mode': self.result.mode,
            'norm_ratio': self.result.norm_ratio,
            'inv_ratio': self.result.inv_ratio,
            'within': self.result.within,
        }


@dataclass(frozen=True)
class DistortionBatch:
    """Verified distortion triples (p, x, n) of one mode

    Fewer than `wanted` verified triples leave the batch inconclusive; one
    ratio outside [1/2, 2] fails it.
    """

    mode: str
    samples: tuple[DistortionSample, ...]
    attempts: int
    wanted: int

    @property
    def verdict(self) -> Verdict:
        if not all(s.result.within for s in self.samples):
            return Verdict.FAIL
        if len(self.samples) < self.wanted:
            return Verdict.INCONCLUSIVE
        return Verdict.PASS


def distortion_batch(
    spec: CocycleSpec,
    base: BaseSystem,
    rng: np.random.Generator,
    mode: str,
    count: int = DISTORTION_COUNT,
    period_max: int = 4,
    n_max: int = 12,
    delta: float | None = None,
    max_attempts: int | None = None,
    norm: Norm = 'inf',
) -> DistortionBatch:
    """Draw triples (p, x, n) and run `distortion_check` until `count` pass its preconditions

    p is a periodic orbit of period at most `period_max`, x comes from
    `shadowing_point` at a radius drawn log-uniformly in [δ/1000, δ/4], and
    n ≤ `n_max` is uniform in symmetric mode and drawn from the good times
    of p in half-rate mode. Draws that fail a precondition are discarded;
    after `max_attempts` draws (10·count by default) the batch stops short.
    """
    if mode not in ('symmetric', 'half-rate'):
        raise ValueError(f'Unknown distortion mode {mode!r}, expected "symmetric" or "half-rate"')
    delta = base.closing_radius if delta is None else delta
    max_attempts = 10 * count if max_attempts is None else max_attempts
    orbits = [orbit for k in range(1, min(period_max, base.period_max) + 1) for orbit in base.enumerate_periodic(k)]
    times: dict[str, tuple[int, ...]] = {}

    samples, attempts = [], 0
    while orbits and len(samples) < count and attempts < max_attempts:
        attempts += 1
        p = orbits[rng.integers(len(orbits))]
        if mode == 'half-rate':
            if p.key not in times:
                times[p.key] = periodic_good_times(spec, base, p, n_max, norm=norm)
            if not times[p.key]:
                continue
            n = int(times[p.key][rng.integers(len(times[p.key]))])
        else:
            n = int(rng.integers(1, n_max + 1))
        radius = delta * 10.0 ** rng.uniform(-3.0, log10(0.25))
        try:
            x = shadowing_point(base, p, n, mode, radius, rng)
            result = distortion_check(spec, base, p, x, n, mode, delta=delta, norm=norm)
        except LivsicError as e:
            logger.debug('Distortion triple at %s, n=%d discarded: %s', p.key, n, e)
            continue
        samples.append(DistortionSample(orbit=p, x=x, n=n, radius=radius, result=result))

    if len(samples) < count:
        logger.warning('Only %d of %d %s distortion triples verified in %d draws', len(samples), count, mode, attempts)
    return DistortionBatch(mode=mode, samples=tuple(samples), attempts=attempts, wanted=count)


@dataclass(frozen=True)
class ShadowBounds:
    constant: float
    lambda_plus: float
    lambda_minus: float


def shadow_norm_bounds(
    spec: CocycleSpec,
    base: BaseSystem,
    p: PeriodicOrbit,
    x: BasePoint,
    n: int,
    eps: float,
    norm: Norm = 'inf',
) -> ShadowBounds:
    """Smallest c with c⁻¹e^{j(λ₋(p)−2ε)} ≤ m(A_x^j) ≤ ‖A_x^j‖ ≤ c·e^{j(λ₊(p)+2ε)} for 0 ≤ j ≤ n

    λ±(p) are the periodic exponents of p, i.e. of x's shadowing orbit.
    """
    plus, minus = periodic_rates(periodic_product(spec, base, p), p.period)
    product, worst = ScaledProduct.identity(spec.dim), 0.0
    for j, op in enumerate(eval_many(spec, base, base.orbit(x, n)[:-1]), start=1):
        product = product.compose(op)
        worst = max(
            worst,
            product.log_norm(norm) - j * (plus + 2 * eps),
            product.log_inv_norm(norm) + j * (minus - 2 * eps),
        )
    return ShadowBounds(constant=exp(worst), lambda_plus=plus, lambda_minus=minus)
