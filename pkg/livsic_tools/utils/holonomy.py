import logging
from collections.abc import Callable
from dataclasses import dataclass
from functools import partial
from itertools import islice
from math import log, log10

import numpy as np
from scipy.stats import linregress

from .cocycle import CocycleSpec, eval_many
from .defaults import (HOLDER_BINS_PER_DECADE, HOLONOMY_STRIDE,
                       MIN_HOLDER_DECADES, MIN_HOLDER_PAIRS)
from .dynamics import BasePoint, BaseSystem
from .errors import InsufficientSpread, LivsicError, NoConvergence, NonFinite
from .operators import (MAX_LOG, InvertibleOp, Norm, ScaledProduct, op_metric,
                        operator_norm)
from .report import parallel_map

logger = logging.getLogger(__name__)

SIDES = ('stable', 'unstable')


@dataclass(frozen=True)
class HolonomyResult:
    """H^s_{y,z} or H^u_{y,z} as the last iterate of its defining sequence

    `gaps` holds the Cauchy gaps at every stride, the divergence profile of
    an uncertified result.
    """

    value: InvertibleOp
    side: str
    y: BasePoint
    z: BasePoint
    iterations_used: int
    cauchy_gap: float
    certified: bool
    gaps: tuple[float, ...] = ()

    def deviation(self, norm: Norm = 'inf') -> float:
        """‖H − Id‖"""
        return operator_norm(self.value.forward - np.eye(self.value.dim), norm)


def _relative(p_y: ScaledProduct, p_z: ScaledProduct) -> InvertibleOp:
    """(P_z)⁻¹ ∘ P_y with both scales folded in at once

    :raises NonFinite: If either combined scale does not fit a double
    """
    forward_log = p_z.inv_log_scale + p_y.log_scale
    inverse_log = p_y.inv_log_scale + p_z.log_scale
    if max(forward_log, inverse_log) > MAX_LOG:
        raise NonFinite(
            f'Relative product scales e^{forward_log:.1f}, e^{inverse_log:.1f} do not fit a double'
        )
    return InvertibleOp(
        forward=np.exp(forward_log) * (p_z.inv_unit @ p_y.unit),
        inverse=np.exp(inverse_log) * (p_y.inv_unit @ p_z.unit),
    )


def holonomy(
    spec: CocycleSpec,
    base: BaseSystem,
    y: BasePoint,
    z: BasePoint,
    side: str,
    tol: float = 1e-9,
    n_cap: int = 400,
    norm: Norm = 'inf',
    strict: bool = False,
) -> HolonomyResult:
    """H_{y,z} = lim (A_z^{±n})⁻¹·A_y^{±n} along the local `side` leaf

    Iterates until two iterates `HOLONOMY_STRIDE` steps apart are within
    `tol` in the operator metric. Reaching `n_cap` first gives an
    uncertified result.

    :raises NotOnStableLeaf: If z is not on the local stable leaf of y (stable side)
    :raises NotOnUnstableLeaf: If z is not on the local unstable leaf of y (unstable side)
    :raises NoConvergence: On reaching `n_cap`, only when `strict`
    :raises NonFinite: If the relative product no longer fits a double
    """
    if side not in SIDES:
        raise ValueError(f'side must be "stable" or "unstable", got {side!r}')
    base.check_leaf(y, z, side)
    identity = InvertibleOp.identity(spec.dim)
    if base.distance(y, z) == 0.0:
        return HolonomyResult(identity, side, y, z, 0, 0.0, True)

    pairs = base.leaf_pairs(y, z, side)
    p_y, p_z = ScaledProduct.identity(spec.dim), ScaledProduct.identity(spec.dim)
    previous, gaps, n = identity, [], 0
    if side == 'unstable':
        # Backward factors are A(f^{-k}y)^{-1}, k ≥ 1
        next(pairs)

    while n < n_cap:
        chunk = list(islice(pairs, HOLONOMY_STRIDE))
        ops_y = eval_many(spec, base, [a for a, _ in chunk])
        ops_z = eval_many(spec, base, [b for _, b in chunk])
        for op_y, op_z in zip(ops_y, ops_z):
            if side == 'unstable':
                op_y, op_z = op_y.inv(), op_z.inv()
            p_y, p_z = p_y.compose(op_y), p_z.compose(op_z)
        n += HOLONOMY_STRIDE
        current = _relative(p_y, p_z)
        gap = op_metric(current, previous, norm)
        gaps.append(gap)
        previous = current
        if gap <= tol:
            return HolonomyResult(current, side, y, z, n, gap, True, tuple(gaps))

    message = f'{side} holonomy did not settle within {n_cap} steps (last gap {gaps[-1]:.3e})'
    if strict:
        raise NoConvergence(message)
    logger.info(message)
    return HolonomyResult(previous, side, y, z, n, gaps[-1], False, tuple(gaps))


def stable_holonomy(spec, base, y, z, tol=1e-9, n_cap=400, **kwargs) -> HolonomyResult:
    return holonomy(spec, base, y, z, 'stable', tol, n_cap, **kwargs)


def unstable_holonomy(spec, base, y, z, tol=1e-9, n_cap=400, **kwargs) -> HolonomyResult:
    return holonomy(spec, base, y, z, 'unstable', tol, n_cap, **kwargs)


def holonomy_chain_check(
    spec: CocycleSpec,
    base: BaseSystem,
    x: BasePoint,
    y: BasePoint,
    z: BasePoint,
    side: str,
    tol: float = 1e-9,
    n_cap: int = 400,
    norm: Norm = 'inf',
) -> float:
    """op_metric(H_{x,z}, H_{y,z}∘H_{x,y}) for three points on one local leaf"""
    h_xz = holonomy(spec, base, x, z, side, tol, n_cap, norm).value
    h_yz = holonomy(spec, base, y, z, side, tol, n_cap, norm).value
    h_xy = holonomy(spec, base, x, y, side, tol, n_cap, norm).value
    return op_metric(h_xz, h_yz @ h_xy, norm)


def holonomy_intertwining(
    spec: CocycleSpec,
    base: BaseSystem,
    y: BasePoint,
    z: BasePoint,
    side: str,
    tol: float = 1e-9,
    n_cap: int = 400,
    norm: Norm = 'inf',
) -> float:
    """op_metric(A(z)∘H_{y,z}, H_{fy,fz}∘A(y))"""
    pairs = base.leaf_pairs(y, z, side)
    next(pairs)
    if side == 'stable':
        fy, fz = next(pairs)
    else:
        fy, fz = base.step(y), base.step(z)
    a_y, a_z = eval_many(spec, base, [y, z])
    here = holonomy(spec, base, y, z, side, tol, n_cap, norm).value
    there = holonomy(spec, base, fy, fz, side, tol, n_cap, norm).value
    return op_metric(a_z @ here, there @ a_y, norm)


def holonomy_invariance_check(
    spec: CocycleSpec,
    base: BaseSystem,
    transfer: Callable[[BasePoint], InvertibleOp],
    y: BasePoint,
    z: BasePoint,
    side: str,
    tol: float = 1e-9,
    n_cap: int = 400,
    norm: Norm = 'inf',
) -> float:
    """op_metric(H_{y,z}·C(y), C(z)) for a ground-truth or recovered transfer map C"""
    h = holonomy(spec, base, y, z, side, tol, n_cap, norm).value
    return op_metric(h @ transfer(y), transfer(z), norm)


def _pair_holonomy(pair, spec, base, side, tol, n_cap, norm) -> HolonomyResult | str:
    y, z = pair
    try:
        return holonomy(spec, base, y, z, side, tol, n_cap, norm)
    except LivsicError as e:
        return f'{type(e).__name__}: {e}'


def leaf_pairs_sample(
    base: BaseSystem,
    side: str,
    count: int,
    rng: np.random.Generator,
    r_min: float | None = None,
    r_max: float | None = None,
) -> list[tuple[BasePoint, BasePoint]]:
    """Pairs (y, z) with z on the local `side` leaf of y at log-uniform distances"""
    if r_min is None or r_max is None:
        # Distances are powers of the metric base on a symbolic base
        r_min, r_max = (1e-4, 0.1) if base.kind == 'toral' else (base.metric_base**16, base.metric_base)
    pairs = []
    for r in np.exp(rng.uniform(log(r_min), log(r_max), size=count)):
        y = base.random_point(rng)
        pairs.append((y, base.leaf_neighbor(y, side, float(r), rng)))
    return pairs


def holonomy_batch(
    spec: CocycleSpec,
    base: BaseSystem,
    pairs: list[tuple[BasePoint, BasePoint]],
    side: str,
    tol: float = 1e-9,
    n_cap: int = 400,
    norm: Norm = 'inf',
    workers: int = 1,
) -> list[HolonomyResult | str]:
    """Holonomies over many pairs; a failing pair yields its error message instead of a result"""
    job = partial(_pair_holonomy, spec=spec, base=base, side=side, tol=tol, n_cap=n_cap, norm=norm)
    return parallel_map(job, pairs, workers)


def holonomy_row(base: BaseSystem, pair, side: str, result: HolonomyResult | str, norm: Norm = 'inf') -> dict:
    y, z = pair
    if isinstance(result, str):
        return {
            'y': str(y), 'z': str(z), 'side': side, 'iterations': 0, 'cauchy_gap': float('nan'),
            'norm_H_minus_Id': float('nan'), 'certified': False, 'error': result,
        }
    return {
        'y': str(y),
        'z': str(z),
        'side': side,
        'iterations': result.iterations_used,
        'cauchy_gap': result.cauchy_gap,
        'norm_H_minus_Id': result.deviation(norm),
        'certified': result.certified,
        'error': '',
    }


@dataclass(frozen=True)
class HolderFit:
    """Log-log fit value ≈ constant·distance^alpha

    `exact_zero` marks the degenerate fit where every value vanishes
    (alpha is then infinite); `zero_below` is the largest distance under
    which every sampled value is zero, the plateau of locally constant data.
    """

    alpha: float
    constant: float
    residual: float
    pairs: int
    exact_zero: bool = False
    zero_below: float = 0.0


def envelope_fit(
    distances,
    values,
    d_min: float = 0.0,
    d_max: float = float('inf'),
    bins_per_decade: int = HOLDER_BINS_PER_DECADE,
    min_pairs: int = MIN_HOLDER_PAIRS,
    min_decades: float = MIN_HOLDER_DECADES,
    zero_tol: float = 1e-13,
) -> HolderFit:
    """Regress the per-bin maximum of log(value) on log(distance)

    Distances are binned per `bins_per_decade` of log10; the largest value
    of each bin is what a Hölder bound has to dominate.

    :raises InsufficientSpread: With fewer than `min_pairs` pairs, less than `min_decades` of distance spread, or fewer than three occupied bins in [d_min, d_max]
    """
    distances, values = np.asarray(distances, dtype=float), np.asarray(values, dtype=float)
    positive = distances > 0.0
    distances, values = distances[positive], values[positive]
    if len(distances) < min_pairs:
        raise InsufficientSpread(f'{len(distances)} pairs, at least {min_pairs} needed')
    spread = log10(distances.max() / distances.min())
    if spread < min_decades:
        raise InsufficientSpread(f'Distances span {spread:.2f} decades, at least {min_decades} needed')

    nonzero = values > zero_tol
    if not nonzero.any():
        return HolderFit(
            alpha=float('inf'), constant=0.0, residual=0.0, pairs=len(values), exact_zero=True,
            zero_below=float(distances.max()),
        )
    first_nonzero = distances[nonzero].min()
    zero_below = float(distances[~nonzero & (distances < first_nonzero)].max(initial=0.0))

    window = nonzero & (distances >= d_min) & (distances <= d_max)
    log_d, log_v = np.log10(distances[window]), np.log10(values[window])
    bins = np.floor(log_d * bins_per_decade).astype(int)
    xs, ys = [], []
    for b in np.unique(bins):
        members = bins == b
        top = np.argmax(np.where(members, log_v, -np.inf))
        xs.append(log_d[top])
        ys.append(log_v[top])
    if len(xs) < 3:
        raise InsufficientSpread(f'Only {len(xs)} occupied distance bins in [{d_min:.3g}, {d_max:.3g}]')

    fit = linregress(xs, ys)
    return HolderFit(
        alpha=float(fit.slope),
        constant=float(10**fit.intercept),
        residual=float(fit.stderr),
        pairs=int(window.sum()),
        zero_below=zero_below,
    )


def holonomy_holder_fit(results: list[HolonomyResult], base: BaseSystem, norm: Norm = 'inf') -> HolderFit:
    """Fit ‖H_{y,z} − Id‖ ≤ L·d(y, z)^α over leaf samples"""
    distances = [base.distance(r.y, r.z) for r in results]
    values = [r.deviation(norm) for r in results]
    return envelope_fit(distances, values)
