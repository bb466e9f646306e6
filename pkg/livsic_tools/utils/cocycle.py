import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field, replace
from math import exp, log, sqrt

import numpy as np
from scipy.linalg import expm

from .defaults import NORM_SAMPLE_COUNT
from .dynamics import BasePoint, BaseSystem
from .errors import (DimMismatch, InadmissibleWord, NotInvertible,
                     TailNotNegligible)
from .operators import (INVERSE_CHECK_TOL, InvertibleOp, Norm, ScaledProduct,
                        operator_norm, vector_norm)

logger = logging.getLogger(__name__)

KINDS = ('constant', 'exp_trig', 'locally_constant', 'coboundary_of', 'perturbed')


@dataclass(frozen=True, eq=False)
class TrigTerm:
    """coef·sin(2π⟨freq, u(x)⟩ + phase), u(x) the base coordinates of x"""

    coef: np.ndarray
    freq: tuple[int, int]
    phase: float = 0.0

    @classmethod
    def from_dict(cls, block: dict) -> 'TrigTerm':
        return cls(
            coef=np.array(block['coef'], dtype=float),
            freq=tuple(int(f) for f in block['freq']),
            phase=float(block.get('phase', 0.0)),
        )

    def to_dict(self) -> dict:
        return {'coef': self.coef.tolist(), 'freq': list(self.freq), 'phase': self.phase}


def parse_word(key: str) -> tuple[int, ...]:
    """Table keys: '011' for alphabets below 10 symbols, '10.11.3' otherwise"""
    return tuple(int(s) for s in (key.split('.') if '.' in key else key))


def word_key(word: Sequence[int]) -> str:
    return ('' if max(word, default=0) < 10 else '.').join(map(str, word))


@dataclass(frozen=True, eq=False)
class CocycleSpec:
    """Declarative description of a generator x ↦ A(x) ∈ GL(d, R)

    `kind` selects which fields are used:

    - `constant`: `matrix`
    - `exp_trig`: `terms`, A(x) = exp(Σ coef·sin(2π⟨freq, u(x)⟩ + phase))
    - `locally_constant`: `window` k and `table`, A(x) = table[x₀…x_{k−1}]
    - `coboundary_of`: `transfer` C, A(x) = C(fx)·C(x)⁻¹
    - `perturbed`: `inner` and `terms`, A(x) = exp(G(x))·A_inner(x)

    `alpha`/`c0` are the declared Hölder exponent and constant (`c0=None`
    means estimate it); `budget` is the recorded C-norm budget B of a
    synthesized coboundary.
    """

    kind: str
    dim: int
    matrix: np.ndarray | None = None
    terms: tuple[TrigTerm, ...] = ()
    window: int = 0
    table: dict | None = None
    transfer: 'CocycleSpec | None' = None
    inner: 'CocycleSpec | None' = None
    alpha: float = 1.0
    c0: float | None = None
    budget: float | None = None
    eta: float | None = None
    _constant_op: list = field(default_factory=list, repr=False)

    @classmethod
    def from_dict(cls, block: dict) -> 'CocycleSpec':
        kind = block['kind']
        common = {
            'alpha': float(block.get('alpha', 1.0)),
            'c0': None if block.get('c0', 'auto') == 'auto' else float(block['c0']),
            'budget': block.get('budget'),
        }
        match kind:
            case 'constant':
                matrix = np.array(block['matrix'], dtype=float)
                spec = cls(kind=kind, dim=matrix.shape[0], matrix=matrix, **common)
            case 'exp_trig':
                terms = tuple(TrigTerm.from_dict(t) for t in block['terms'])
                spec = cls(kind=kind, dim=int(block['dim']), terms=terms, **common)
            case 'locally_constant':
                table = {parse_word(key): InvertibleOp.from_matrix(m) for key, m in block['table'].items()}
                if any(len(word) != block['window'] for word in table):
                    raise InadmissibleWord(f'Every table word must have length {block["window"]}')
                dim = next(iter(table.values())).dim if table else int(block['dim'])
                spec = cls(kind=kind, dim=dim, window=int(block['window']), table=table, **common)
            case 'coboundary_of':
                transfer = cls.from_dict(block['transfer'])
                spec = cls(kind=kind, dim=transfer.dim, transfer=transfer, **common)
            case 'perturbed':
                inner = cls.from_dict(block['inner'])
                terms = tuple(TrigTerm.from_dict(t) for t in block['terms'])
                spec = cls(kind=kind, dim=inner.dim, terms=terms, inner=inner, eta=block.get('eta'), **common)
            case _:
                raise ValueError(f'Unknown generator kind {kind!r}, expected one of {KINDS}')

        if 'dim' in block and int(block['dim']) != spec.dim:
            raise DimMismatch(f'Declared dim {block["dim"]} but the {kind} generator acts on dim {spec.dim}')
        spec.check_shapes()
        return spec

    def check_shapes(self) -> None:
        shapes = []
        if self.matrix is not None:
            shapes.append(self.matrix.shape)
        shapes.extend(term.coef.shape for term in self.terms)
        if self.table:
            shapes.extend(op.forward.shape for op in self.table.values())
        for child in (self.transfer, self.inner):
            if child is not None:
                shapes.append((child.dim, child.dim))
        for shape in shapes:
            if shape != (self.dim, self.dim):
                raise DimMismatch(f'{self.kind} generator of dim {self.dim} has a {shape} block')

    def to_dict(self) -> dict:
        block: dict = {'kind': self.kind, 'dim': self.dim}
        match self.kind:
            case 'constant':
                block['matrix'] = self.matrix.tolist()
            case 'exp_trig':
                block['terms'] = [t.to_dict() for t in self.terms]
            case 'locally_constant':
                block['window'] = self.window
                block['table'] = {word_key(w): op.forward.tolist() for w, op in sorted(self.table.items())}
            case 'coboundary_of':
                block['transfer'] = self.transfer.to_dict()
            case 'perturbed':
                block['inner'] = self.inner.to_dict()
                block['terms'] = [t.to_dict() for t in self.terms]
                if self.eta is not None:
                    block['eta'] = self.eta
        block['alpha'] = self.alpha
        block['c0'] = 'auto' if self.c0 is None else self.c0
        if self.budget is not None:
            block['budget'] = self.budget
        return block

    def with_c0(self, c0: float) -> 'CocycleSpec':
        return replace(self, c0=c0, _constant_op=[])

    @property
    def constant_op(self) -> InvertibleOp:
        if not self._constant_op:
            self._constant_op.append(InvertibleOp.from_matrix(self.matrix))
        return self._constant_op[0]


# A transfer map C: M → GL(d) is described by the same structural kinds
TransferSpec = CocycleSpec


def _trig_exponent(terms: Sequence[TrigTerm], coords: np.ndarray, dim: int) -> np.ndarray:
    """Σ coef·sin(2π⟨freq, u⟩ + phase) for a stack of coordinates, shape (P, d, d)"""
    total = np.zeros((coords.shape[0], dim, dim))
    for term in terms:
        angle = 2 * np.pi * (coords @ np.array(term.freq, dtype=float)) + term.phase
        total += np.sin(angle)[:, None, None] * term.coef
    return total


def generator_arrays(spec: CocycleSpec, base: BaseSystem, points: Sequence[BasePoint]) -> tuple[np.ndarray, np.ndarray]:
    """A(x) and A(x)⁻¹ at many points at once, as two (P, d, d) stacks"""
    count = len(points)
    match spec.kind:
        case 'constant':
            op = spec.constant_op
            return (
                np.broadcast_to(op.forward, (count, spec.dim, spec.dim)).copy(),
                np.broadcast_to(op.inverse, (count, spec.dim, spec.dim)).copy(),
            )
        case 'exp_trig':
            coords = np.array([base.coordinates(x) for x in points]).reshape(count, -1)
            exponent = _trig_exponent(spec.terms, coords, spec.dim)
            return expm(exponent), expm(-exponent)
        case 'locally_constant':
            forward, inverse = np.empty((count, spec.dim, spec.dim)), np.empty((count, spec.dim, spec.dim))
            for idx, x in enumerate(points):
                word = x.window(0, spec.window - 1)
                op = spec.table.get(word)
                if op is None:
                    raise InadmissibleWord(f'Window {word_key(word)} has no entry in the locally constant table')
                forward[idx], inverse[idx] = op.forward, op.inverse
            return forward, inverse
        case 'coboundary_of':
            images = [base.step(x) for x in points]
            c_here, c_here_inv = generator_arrays(spec.transfer, base, points)
            c_next, c_next_inv = generator_arrays(spec.transfer, base, images)
            return c_next @ c_here_inv, c_here @ c_next_inv
        case 'perturbed':
            coords = np.array([base.coordinates(x) for x in points]).reshape(count, -1)
            exponent = _trig_exponent(spec.terms, coords, spec.dim)
            inner, inner_inv = generator_arrays(spec.inner, base, points)
            return expm(exponent) @ inner, inner_inv @ expm(-exponent)
        case _:
            raise ValueError(f'Unknown generator kind {spec.kind!r}')


def eval_many(spec: CocycleSpec, base: BaseSystem, points: Sequence[BasePoint]) -> list[InvertibleOp]:
    """Evaluate the generator at every point, verifying each inverse

    :raises NotInvertible: If some evaluated pair is not inverse to within tolerance
    """
    if not points:
        return []
    forward, inverse = generator_arrays(spec, base, points)
    defect = np.abs(forward @ inverse - np.eye(spec.dim)).sum(axis=-1).max(axis=-1)
    worst = int(np.argmax(defect))
    if defect[worst] > INVERSE_CHECK_TOL * spec.dim or not np.all(np.isfinite(defect)):
        raise NotInvertible(f'Generator inverse is off by {defect[worst]:.3e} at {points[worst]}')
    return [InvertibleOp(forward=f, inverse=i) for f, i in zip(forward, inverse)]


def eval_generator(spec: CocycleSpec, base: BaseSystem, x: BasePoint) -> InvertibleOp:
    return eval_many(spec, base, [x])[0]


def orbit_factors(spec: CocycleSpec, base: BaseSystem, x: BasePoint, n: int) -> list[InvertibleOp]:
    """The factors of A_x^n in the order they are applied

    For n > 0 these are A(x), A(fx), …, A(f^{n−1}x); for n < 0 they are
    A(f^{−1}x)⁻¹, …, A(f^{n}x)⁻¹.
    """
    if n == 0:
        return []
    points = base.orbit(x, n)
    if n > 0:
        return eval_many(spec, base, points[:-1])
    return [op.inv() for op in eval_many(spec, base, points[1:])]


def fold(factors: Sequence[InvertibleOp], dim: int) -> ScaledProduct:
    product = ScaledProduct.identity(dim)
    for op in factors:
        product = product.compose(op)
    return product


def orbit_product(spec: CocycleSpec, base: BaseSystem, x: BasePoint, n: int) -> ScaledProduct:
    """A_x^n, both signs of n, with its inverse track"""
    return fold(orbit_factors(spec, base, x, n), spec.dim)


def norm_bound(
    spec: CocycleSpec,
    base: BaseSystem,
    norm: Norm = 'inf',
    samples: int = NORM_SAMPLE_COUNT,
    seed: int = 0,
    extra_points: Sequence[BasePoint] = (),
) -> float:
    """R = max over x of max(‖A(x)‖, ‖A(x)⁻¹‖)

    Exact for constant and locally constant generators, otherwise taken over
    `samples` seeded random points and any `extra_points`.
    """
    match spec.kind:
        case 'constant':
            ops = [spec.constant_op]
        case 'locally_constant':
            ops = list(spec.table.values())
        case _:
            rng = np.random.default_rng(seed)
            points = [base.random_point(rng) for _ in range(samples)] + list(extra_points)
            ops = eval_many(spec, base, points)
    return max(max(op.norm(norm), op.inv_norm(norm)) for op in ops)


@dataclass(frozen=True)
class ExponentEstimate:
    lambda_plus: float
    lambda_minus: float
    n: int
    checkpoints: tuple[tuple[int, float, float], ...]


def lyapunov_exponents(
    spec: CocycleSpec, base: BaseSystem, x: BasePoint, n: int, norm: Norm = 'inf'
) -> ExponentEstimate:
    """(1/n)·log‖A_x^n‖ and −(1/n)·log‖(A_x^n)⁻¹‖, with the values at n/4, n/2, 3n/4 and n

    :raises ValueError: If n is below 100
    """
    if n < 100:
        raise ValueError(f'Exponent estimates need an orbit of length at least 100, got {n}')
    marks = {n // 4, n // 2, 3 * n // 4, n}
    product, checkpoints = ScaledProduct.identity(spec.dim), []
    for k, op in enumerate(orbit_factors(spec, base, x, n), start=1):
        product = product.compose(op)
        if k in marks:
            checkpoints.append((k, product.log_norm(norm) / k, -product.log_inv_norm(norm) / k))
    _, plus, minus = checkpoints[-1]
    logger.info('Exponent estimates over %d steps: %.6g, %.6g', n, plus, minus)
    return ExponentEstimate(lambda_plus=plus, lambda_minus=minus, n=n, checkpoints=tuple(checkpoints))


def default_eps(base: BaseSystem, alpha: float) -> float:
    """ε = τα/8"""
    return base.expansion_rate * alpha / 8


@dataclass(frozen=True)
class LyapunovNorm:
    value: float
    tail_bound: float
    trunc: int
    ratio: float


def _tail(norm_u: float, q: float, trunc: int, scale: float = 1.0) -> float:
    return 2 * scale * norm_u * q ** (trunc + 1) / (1 - q)


def lyapunov_norm(
    spec: CocycleSpec,
    base: BaseSystem,
    x: BasePoint,
    u,
    eps: float,
    trunc: int | None = None,
    tail_tol: float = 1e-8,
    bound: float | None = None,
    norm: Norm = 'inf',
) -> LyapunovNorm:
    """The truncated series Σ_{|n| ≤ trunc} ‖A_x^n u‖·e^{−ε|n|}

    The tail is bounded by 2‖u‖·q^{trunc+1}/(1 − q) with q = R·e^{−ε}. A
    synthesized coboundary has ‖A_x^n‖ ≤ B² for every n, B its recorded
    budget, and then the tail is bounded by 2B²‖u‖·q^{trunc+1}/(1 − q) with
    q = e^{−ε} instead.

    :param trunc: Truncation; the smallest one meeting `tail_tol` if omitted
    :type trunc: `int | None`, optional
    :param bound: The generator norm bound R; sampled with `norm_bound` if omitted
    :type bound: `float | None`, optional
    :raises TailNotNegligible: If q ≥ 1 or the tail bound exceeds `tail_tol`
    :return: The value, the tail bound, the truncation used and ‖u‖_x/‖u‖
    :rtype: `LyapunovNorm`
    """
    if eps <= 0:
        raise ValueError(f'eps must be positive, got {eps}')
    u = np.asarray(u, dtype=float)
    norm_u = vector_norm(u, norm)
    if spec.budget is not None and bound is None:
        q, scale = exp(-min(eps, 700.0)), float(spec.budget) ** 2
    else:
        bound = norm_bound(spec, base, norm) if bound is None else bound
        q, scale = bound * exp(-min(eps, 700.0)), 1.0
    if q >= 1.0:
        raise TailNotNegligible(f'R·e^(-eps) = {q:.4g} >= 1: the series tail cannot be bounded')

    if trunc is None:
        trunc = 0
        while _tail(norm_u, q, trunc, scale) >= tail_tol:
            trunc += 1
    tail_bound = _tail(norm_u, q, trunc, scale)
    if tail_bound > tail_tol:
        raise TailNotNegligible(f'Tail bound {tail_bound:.3e} at trunc={trunc} exceeds {tail_tol:.1e}')

    value = norm_u
    for sign in (1, -1):
        vec = u
        for k, op in enumerate(orbit_factors(spec, base, x, sign * trunc), start=1):
            vec = op.forward @ vec
            value += vector_norm(vec, norm) * exp(-eps * k)
    return LyapunovNorm(
        value=value, tail_bound=tail_bound, trunc=trunc, ratio=value / norm_u if norm_u else float('nan')
    )


@dataclass(frozen=True)
class SandwichCheck:
    here: float
    image: float
    eps: float
    slack: float
    holds: bool


def lyapunov_norm_sandwich(
    spec: CocycleSpec, base: BaseSystem, x: BasePoint, u, eps: float, **kwargs
) -> SandwichCheck:
    """Check e^{−ε}‖u‖_x ≤ ‖A(x)u‖_{fx} ≤ e^{ε}‖u‖_x, truncation tails added as slack"""
    here = lyapunov_norm(spec, base, x, u, eps, **kwargs)
    pushed = eval_generator(spec, base, x).forward @ np.asarray(u, dtype=float)
    image = lyapunov_norm(spec, base, base.step(x), pushed, eps, **kwargs)
    slack = exp(eps) * here.tail_bound + image.tail_bound + 1e-12 * here.value
    holds = exp(-eps) * here.value - slack <= image.value <= exp(eps) * here.value + slack
    return SandwichCheck(here=here.value, image=image.value, eps=eps, slack=slack, holds=holds)


@dataclass(frozen=True)
class BunchingResult:
    passed: bool
    margin: float
    forward_margin: float
    backward_margin: float


def _block_margin(
    spec: CocycleSpec, base: BaseSystem, x: BasePoint, N: int, theta: float, k_max: int, sign: int, norm: Norm
) -> float:
    factors = orbit_factors(spec, base, x, sign * N * k_max)
    margin, spent = float('inf'), 0.0
    for k in range(1, k_max + 1):
        block = fold(factors[(k - 1) * N : k * N], spec.dim)
        spent += block.log_norm(norm) + block.log_inv_norm(norm)
        margin = min(margin, k * N * theta - spent)
    return margin


def bunching_membership(
    spec: CocycleSpec,
    base: BaseSystem,
    x: BasePoint,
    N: int,
    theta: float,
    k_max: int,
    norm: Norm = 'inf',
) -> BunchingResult:
    """Is x in D(N, θ)? Checks the block products along the forward and backward orbit

    Forward: Σ_{j<k} log(‖A^N_{f^{jN}x}‖·‖(A^N_{f^{jN}x})⁻¹‖) ≤ kNθ for every
    k ≤ k_max, and the same with A^{−N} along f^{−jN}x backwards.
    """
    if N < 1 or k_max < 1:
        raise ValueError(f'N and k_max must be at least 1, got N={N}, k_max={k_max}')
    forward = _block_margin(spec, base, x, N, theta, k_max, 1, norm)
    backward = _block_margin(spec, base, x, N, theta, k_max, -1, norm)
    margin = min(forward, backward)
    return BunchingResult(
        passed=margin >= -1e-9 * N * k_max, margin=margin, forward_margin=forward, backward_margin=backward
    )


def sqrt_eps(scale: float) -> Callable[[int], float]:
    """The tolerance sequence ε_i = scale/√i"""
    return lambda i: scale / sqrt(i)


@dataclass(frozen=True)
class GoodTimes:
    times: tuple[int, ...]
    n_max: int
    rates: dict
    density: float
    upper_density: float


def suffix_log_norms(factors: Sequence[InvertibleOp], norm: Norm = 'inf', inverse: bool = False) -> np.ndarray:
    """table[n, i] = log‖A^{n−i}_{f^i x}‖ (or of its inverse) for 0 ≤ i ≤ n ≤ len(factors)

    Built incrementally: when factor n is appended every suffix product is
    multiplied by it at once, keeping a per-suffix log scale.
    """
    n_max = len(factors)
    dim = factors[0].dim if factors else 1
    table = np.full((n_max + 1, n_max + 1), np.nan)
    table[0, 0] = 0.0
    units, scales = np.empty((0, dim, dim)), np.empty(0)
    for n, op in enumerate(factors, start=1):
        units = np.concatenate([units, np.eye(dim)[None]])
        scales = np.append(scales, 0.0)
        units = units @ op.inverse if inverse else op.forward @ units
        sizes = np.abs(units).sum(axis=-1).max(axis=-1)
        units, scales = units / sizes[:, None, None], scales + np.log(sizes)
        if norm == 'inf':
            table[n, :n] = scales
        else:
            table[n, :n] = scales + np.log(np.linalg.norm(units, ord=2, axis=(-2, -1)))
        table[n, n] = 0.0
    return table


def good_times(
    spec: CocycleSpec,
    base: BaseSystem,
    x: BasePoint,
    n_max: int,
    lambda_est: float | None = None,
    eps_fn: Callable[[int], float] | None = None,
    which: str = 'norm',
    lambda_minus_est: float | None = None,
    norm: Norm = 'inf',
    slack: float = 1e-9,
) -> GoodTimes:
    """Times n ≤ n_max with a_n(x) − a_{n−i}(f^i x) ≥ (λ − ε_i)·i for every 0 < i ≤ n

    a_m(y) = log‖A_y^m‖. With `which='inverse'` the same test runs on
    b_m(y) = log‖(A_y^m)⁻¹‖ at rate −λ₋; `which='both'` requires both.
    The upper density is the largest |S ∩ [1, N]|/N over N ∈ [n_max/2, n_max].

    :param lambda_est: λ₊; a_{n_max}(x)/n_max if omitted
    :type lambda_est: `float | None`, optional
    :param eps_fn: Nonincreasing tolerances i ↦ ε_i, defaults to 0.5/√i
    :type eps_fn: `Callable[[int], float] | None`, optional
    :param lambda_minus_est: λ₋; −b_{n_max}(x)/n_max if omitted
    :type lambda_minus_est: `float | None`, optional
    """
    sides = {'norm': (False,), 'inverse': (True,), 'both': (False, True)}
    if which not in sides:
        raise ValueError(f'which must be "norm", "inverse" or "both", got {which!r}')
    if n_max < 1:
        raise ValueError(f'n_max must be at least 1, got {n_max}')
    eps_fn = eps_fn or sqrt_eps(0.5)
    factors = orbit_factors(spec, base, x, n_max)
    i = np.arange(1, n_max + 1)
    eps = np.array([eps_fn(int(k)) for k in i])

    good, rates = np.ones(n_max + 1, dtype=bool), {}
    for inverse in sides[which]:
        table = suffix_log_norms(factors, norm, inverse=inverse)
        if inverse:
            rate = table[n_max, 0] / n_max if lambda_minus_est is None else -lambda_minus_est
        else:
            rate = table[n_max, 0] / n_max if lambda_est is None else lambda_est
        rates['inverse' if inverse else 'norm'] = float(rate)
        for n in range(1, n_max + 1):
            gaps = table[n, 0] - table[n, 1 : n + 1]
            good[n] &= bool(np.all(gaps >= (rate - eps[:n]) * i[:n] - slack))

    times = tuple(int(n) for n in range(1, n_max + 1) if good[n])
    running = np.cumsum(good[1:]) / i
    return GoodTimes(
        times=times,
        n_max=n_max,
        rates=rates,
        density=len(times) / n_max,
        upper_density=float(running[max(0, n_max // 2 - 1) :].max()),
    )


@dataclass(frozen=True)
class HolderCheck:
    c0_est: float
    alpha: float
    declared: float | None
    consistent: bool
    pairs: int


def holder_constant(
    spec: CocycleSpec,
    base: BaseSystem,
    alpha: float,
    samples: int,
    rng: np.random.Generator,
    r_min: float = 1e-4,
    r_max: float = 0.1,
    norm: Norm = 'inf',
) -> HolderCheck:
    """Empirical c₀ = max ‖A(x) − A(y)‖/d(x, y)^α over sampled near pairs

    Pairs are (x, y) with y at a log-uniform distance in [r_min, r_max]
    from x. The declared `spec.c0`, if any, is consistent when it bounds
    every sampled ratio.
    """
    xs = [base.random_point(rng) for _ in range(samples)]
    radii = np.exp(rng.uniform(log(r_min), log(r_max), size=samples))
    ys = [base.perturb(x, float(r), rng) for x, r in zip(xs, radii)]
    ax, ay = generator_arrays(spec, base, xs)[0], generator_arrays(spec, base, ys)[0]
    c0_est, used = 0.0, 0
    for a, b, x, y in zip(ax, ay, xs, ys):
        d = base.distance(x, y)
        if d > 0.0:
            c0_est = max(c0_est, operator_norm(a - b, norm) / d**alpha)
            used += 1
    declared = spec.c0
    consistent = declared is None or c0_est <= declared * (1 + 1e-9)
    if not consistent:
        logger.warning('Declared c0=%.4g is below the sampled Holder ratio %.4g', declared, c0_est)
    return HolderCheck(c0_est=c0_est, alpha=alpha, declared=declared, consistent=consistent, pairs=used)
