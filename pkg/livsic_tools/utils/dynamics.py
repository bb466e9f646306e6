import logging
from abc import ABC, abstractmethod
from collections import deque
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import cached_property
from math import ceil, floor, gcd, hypot, log
from typing import Iterator, Union

import numpy as np
from scipy.spatial import cKDTree

from .defaults import (CLOSING_RADIUS, LEAF_TOL, PERIOD_MAX,
                       SYMBOLIC_COORDINATE_DEPTH, SYMBOLIC_INDEX_RADIUS,
                       SYMBOLIC_PRODUCT_STRUCTURE_RADIUS,
                       TORUS_PRODUCT_STRUCTURE_RADIUS)
from .errors import (InadmissibleSplice, InadmissibleWord, NoConnector,
                     NotCloseEnough, NotMixing, NotOnStableLeaf,
                     NotOnUnstableLeaf, PeriodBudgetExceeded, SingularClosing,
                     TooFarApart)

logger = logging.getLogger(__name__)

Coord = Union[Fraction, float]
IntMatrix = tuple[tuple[int, ...], ...]


# ---------------------------------------------------------------------------
# Points and orbits
# ---------------------------------------------------------------------------
def _mod1(c: Coord) -> Coord:
    if isinstance(c, Fraction):
        return c - floor(c)
    reduced = float(c) % 1.0
    # -1e-17 % 1.0 == 1.0 in floating point
    return 0.0 if reduced >= 1.0 else reduced


@dataclass(frozen=True)
class TorusPoint:
    """A point of T² = R²/Z², coordinates reduced into [0, 1)

    Coordinates are either both `Fraction` (exact path) or both `float`.
    """

    coords: tuple[Coord, Coord]

    def __post_init__(self):
        coords = tuple(_mod1(c) for c in self.coords)
        if any(isinstance(c, Fraction) for c in coords) and not all(
            isinstance(c, Fraction) for c in coords
        ):
            coords = tuple(float(c) for c in coords)
        object.__setattr__(self, 'coords', coords)

    @classmethod
    def exact(cls, x: Coord, y: Coord) -> 'TorusPoint':
        return cls((Fraction(x), Fraction(y)))

    @property
    def is_exact(self) -> bool:
        return isinstance(self.coords[0], Fraction)

    def to_exact(self) -> 'TorusPoint':
        """Exact rational copy; floats convert without rounding"""
        return self if self.is_exact else TorusPoint.exact(*self.coords)

    def to_float(self) -> 'TorusPoint':
        return TorusPoint(tuple(float(c) for c in self.coords))

    def as_array(self) -> np.ndarray:
        return np.array([float(c) for c in self.coords])

    def __str__(self) -> str:
        return '(' + ','.join(str(c) for c in self.coords) + ')'


@dataclass(frozen=True)
class SymbolicPoint:
    """An eventually periodic bi-infinite sequence, stored exactly

    Coordinate `i` lives at position `i + origin` of `word`; left of the word
    the period word `left_tail` repeats (its last symbol sits right before
    `word[0]`), right of it `right_tail` repeats. Shifting only moves
    `origin`, so it is lossless. Equality compares representations; use
    `SFT.agreement` to compare sequences.
    """

    word: tuple[int, ...]
    origin: int
    left_tail: tuple[int, ...]
    right_tail: tuple[int, ...]

    def __post_init__(self):
        if not self.word or not self.left_tail or not self.right_tail:
            raise InadmissibleWord('Word and both tails of a symbolic point must be non-empty')

    @classmethod
    def periodic(cls, word) -> 'SymbolicPoint':
        word = tuple(word)
        return cls(word=word, origin=0, left_tail=word, right_tail=word)

    def symbol(self, i: int) -> int:
        j = i + self.origin
        if 0 <= j < len(self.word):
            return self.word[j]
        if j >= len(self.word):
            return self.right_tail[(j - len(self.word)) % len(self.right_tail)]
        return self.left_tail[j % len(self.left_tail)]

    def window(self, lo: int, hi: int) -> tuple[int, ...]:
        """Symbols at indices lo..hi inclusive"""
        return tuple(self.symbol(i) for i in range(lo, hi + 1))

    def shift(self, n: int) -> 'SymbolicPoint':
        return replace(self, origin=self.origin + n)

    @property
    def lo_edge(self) -> int:
        return -self.origin

    @property
    def hi_edge(self) -> int:
        return len(self.word) - self.origin - 1

    def __str__(self) -> str:
        return ''.join(map(str, self.window(-4, -1))) + '.' + ''.join(map(str, self.window(0, 4)))


BasePoint = Union[TorusPoint, SymbolicPoint]


@dataclass(frozen=True)
class PeriodicOrbit:
    """An orbit with f(points[i]) = points[i+1 mod period] exactly, period minimal"""

    points: tuple
    period: int
    key: str

    @property
    def start(self) -> BasePoint:
        return self.points[0]


@dataclass(frozen=True)
class Profile:
    """Distances d(f^i x, f^i y) for 0 ≤ i ≤ n along two orbit segments

    `c_prime` is the smallest c with d_i ≤ c·delta·e^{−τ·min(i, n−i)}
    for every i, i.e. the measured constant of the exponential sharpening
    of closeness in the middle of the segment.
    """

    distances: np.ndarray
    delta: float
    rate: float
    c_prime: float

    @property
    def amplitude(self) -> float:
        return float(self.distances.max())

    def half_rate_constant(self) -> float:
        """Smallest c with d_j ≤ c·e^{−τ j/2} for every j"""
        j = np.arange(len(self.distances))
        return float((self.distances * np.exp(0.5 * self.rate * j)).max())

    def symmetric_constant(self) -> float:
        """Smallest c with d_j ≤ c·e^{−τ min(j, n−j)} for every j"""
        n = len(self.distances) - 1
        j = np.arange(n + 1)
        return float((self.distances * np.exp(self.rate * np.minimum(j, n - j))).max())


@dataclass(frozen=True)
class ClosedOrbit:
    """A periodic orbit shadowing the segment x, …, f^n(x)

    `orbit.start` is the shadowing point p; `profile` holds
    d(f^i p, f^i x) with `profile.delta = d(x, f^n x)`.
    """

    orbit: PeriodicOrbit
    source: BasePoint
    n: int
    profile: Profile

    @property
    def point(self) -> BasePoint:
        return self.orbit.start

    @property
    def c_prime(self) -> float:
        return self.profile.c_prime


@dataclass(frozen=True)
class GluedOrbit:
    """A periodic orbit whose itinerary `word` contains every glued segment

    `offsets[k]` is where segment k starts in `word`. `orbit` is built from
    the primitive root of `word`, so its period divides `len(word)`.
    """

    word: tuple[int, ...]
    offsets: tuple[int, ...]
    orbit: PeriodicOrbit

    @property
    def total_period(self) -> int:
        return len(self.word)


# ---------------------------------------------------------------------------
# Common interface
# ---------------------------------------------------------------------------
class BaseSystem(ABC):
    """A uniformly hyperbolic base map f: M → M"""

    kind: str
    period_max: int
    closing_radius: float
    product_structure_radius: float

    @property
    @abstractmethod
    def expansion_rate(self) -> float:
        """τ: one-step contraction/expansion rate along leaves"""

    @abstractmethod
    def iterate(self, x: BasePoint, n: int) -> BasePoint:
        ...

    @abstractmethod
    def distance(self, x: BasePoint, y: BasePoint) -> float:
        ...

    @abstractmethod
    def bracket(self, y: BasePoint, z: BasePoint) -> BasePoint:
        ...

    @abstractmethod
    def close_orbit(self, x: BasePoint, n: int) -> ClosedOrbit:
        ...

    @abstractmethod
    def enumerate_periodic(self, n: int) -> list[PeriodicOrbit]:
        ...

    @abstractmethod
    def random_point(self, rng: np.random.Generator) -> BasePoint:
        ...

    @abstractmethod
    def perturb(self, x: BasePoint, r: float, rng: np.random.Generator) -> BasePoint:
        """A point at distance about `r` (at most `r` up to rounding) from `x`"""

    @abstractmethod
    def leaf_neighbor(
        self, y: BasePoint, side: str, r: float, rng: np.random.Generator
    ) -> BasePoint:
        """A point on the local `side` ('stable' or 'unstable') leaf of `y` at distance about `r`"""

    @abstractmethod
    def check_leaf(self, y: BasePoint, z: BasePoint, side: str) -> None:
        """Raise `NotOnStableLeaf`/`NotOnUnstableLeaf` unless z lies on the local leaf of y"""

    @abstractmethod
    def leaf_pairs(self, y: BasePoint, z: BasePoint, side: str) -> Iterator[tuple]:
        """Yield (f^{±k} y, f^{±k} z) for k = 0, 1, 2, …, forward for stable, backward for unstable"""

    @abstractmethod
    def coordinates(self, x: BasePoint) -> np.ndarray:
        """Two real coordinates of x used by trigonometric generators"""

    @abstractmethod
    def build_index(self, points: list) -> 'NearestIndex':
        ...

    @abstractmethod
    def to_dict(self) -> dict:
        ...

    @abstractmethod
    def probe_points(self, count: int, rng: np.random.Generator, around=None, radius=None) -> list:
        ...

    def step(self, x: BasePoint) -> BasePoint:
        return self.iterate(x, 1)

    def orbit(self, x: BasePoint, n: int) -> list:
        """x, f(x), …, f^n(x) (backwards for negative n)"""
        sign = 1 if n >= 0 else -1
        points = [x]
        for _ in range(abs(n)):
            points.append(self.iterate(points[-1], sign))
        return points

    def closeness_profile(
        self, x: BasePoint, y: BasePoint, n: int, delta: float | None = None
    ) -> Profile:
        """Measure d(f^i x, f^i y) for 0 ≤ i ≤ n

        :param delta: Reference amplitude for `c_prime`; the measured maximum distance if omitted
        :type delta: `float | None`, optional
        """
        xs, ys = self.orbit(x, n), self.orbit(y, n)
        distances = np.array([self.distance(a, b) for a, b in zip(xs, ys)])
        reference = float(distances.max()) if delta is None else float(delta)
        i = np.arange(n + 1)
        envelope = reference * np.exp(-self.expansion_rate * np.minimum(i, n - i))
        if reference == 0.0:
            c_prime = 0.0 if distances.max() == 0.0 else float('inf')
        else:
            c_prime = float((distances / envelope).max())
        return Profile(distances=distances, delta=reference, rate=self.expansion_rate, c_prime=c_prime)

    def _check_period(self, n: int) -> None:
        if n < 1:
            raise ValueError(f'Period must be at least 1, got {n}')
        if n > self.period_max:
            raise PeriodBudgetExceeded(
                f'Period {n} exceeds the enumeration budget period_max={self.period_max}'
            )


class NearestIndex(ABC):
    @abstractmethod
    def query(self, x: BasePoint) -> tuple[int, float]:
        """Index of the nearest indexed point and its distance"""

    def other(self, x: BasePoint, exclude: int) -> tuple[int, float]:
        """Nearest indexed point other than `exclude`, where the index can tell"""
        return self.query(x)


# ---------------------------------------------------------------------------
# Integer linear algebra
# ---------------------------------------------------------------------------
def _int_matmul(a: IntMatrix, b: IntMatrix) -> IntMatrix:
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0])))
        for i in range(len(a))
    )


def _int_identity(dim: int) -> IntMatrix:
    return tuple(tuple(int(i == j) for j in range(dim)) for i in range(dim))


def int_matrix_power(mat: IntMatrix, n: int) -> IntMatrix:
    """Exact power of a unimodular integer matrix, negative n allowed"""
    if n < 0:
        (a, b), (c, d) = mat
        det = a * d - b * c
        # det = ±1 so the adjugate times det is the integer inverse
        mat, n = ((det * d, -det * b), (-det * c, det * a)), -n
    result, square = _int_identity(len(mat)), mat
    while n:
        if n & 1:
            result = _int_matmul(result, square)
        square = _int_matmul(square, square)
        n >>= 1
    return result


def smith_normal_form(mat: IntMatrix) -> tuple[list[list[int]], list[list[int]], list[list[int]]]:
    """Smith normal form U·mat·V = D of an integer matrix

    :param mat: The integer matrix
    :type mat: `IntMatrix`
    :return: `(U, D, V)` with `U`, `V` unimodular and `D` diagonal, non-negative, each entry dividing the next
    :rtype: `tuple[list[list[int]], list[list[int]], list[list[int]]]`
    """
    diag = [list(row) for row in mat]
    rows, cols = len(diag), len(diag[0])
    left = [list(row) for row in _int_identity(rows)]
    right = [list(row) for row in _int_identity(cols)]

    def add_row(dst, src, q):
        for m in (diag, left):
            m[dst] = [x + q * y for x, y in zip(m[dst], m[src])]

    def add_col(dst, src, q):
        for m in (diag, right):
            for row in m:
                row[dst] += q * row[src]

    for t in range(min(rows, cols)):
        while True:
            # Move the smallest non-zero entry of the trailing block to (t, t)
            candidates = [
                (abs(diag[i][j]), i, j)
                for i in range(t, rows)
                for j in range(t, cols)
                if diag[i][j] != 0
            ]
            if not candidates:
                return left, diag, right
            _, i, j = min(candidates)
            diag[t], diag[i] = diag[i], diag[t]
            left[t], left[i] = left[i], left[t]
            for m in (diag, right):
                for row in m:
                    row[t], row[j] = row[j], row[t]

            pivot = diag[t][t]
            for i in range(t + 1, rows):
                add_row(i, t, -(diag[i][t] // pivot))
            for j in range(t + 1, cols):
                add_col(j, t, -(diag[t][j] // pivot))
            if any(diag[i][t] for i in range(t + 1, rows)) or any(
                diag[t][j] for j in range(t + 1, cols)
            ):
                continue

            # Divisibility of the trailing block by the pivot
            offender = next(
                (
                    i
                    for i in range(t + 1, rows)
                    for j in range(t + 1, cols)
                    if diag[i][j] % pivot
                ),
                None,
            )
            if offender is None:
                break
            add_row(t, offender, 1)

        if diag[t][t] < 0:
            diag[t] = [-x for x in diag[t]]
            left[t] = [-x for x in left[t]]

    return left, diag, right


def _primitive_root(word: tuple[int, ...]) -> tuple[int, ...]:
    n = len(word)
    for m in range(1, n + 1):
        if n % m == 0 and word[:m] * (n // m) == word:
            return word[:m]
    return word


def _rotations(word: tuple[int, ...]) -> list[tuple[int, ...]]:
    return [word[i:] + word[:i] for i in range(len(word))]


def _word_key(word) -> str:
    return ('' if max(word, default=0) < 10 else '.').join(map(str, word))


# ---------------------------------------------------------------------------
# Hyperbolic toral automorphisms
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class ToralAutomorphism(BaseSystem):
    """A hyperbolic automorphism x ↦ Mx mod Z² of the 2-torus

    :param matrix: Integer 2×2 matrix with determinant ±1 and no eigenvalue of modulus 1
    """

    matrix: IntMatrix
    product_structure_radius: float = TORUS_PRODUCT_STRUCTURE_RADIUS
    closing_radius: float = CLOSING_RADIUS
    period_max: int = PERIOD_MAX
    kind: str = field(default='toral', init=False)

    def __post_init__(self):
        matrix = tuple(tuple(int(v) for v in row) for row in self.matrix)
        if len(matrix) != 2 or any(len(row) != 2 for row in matrix):
            raise ValueError(f'Toral automorphisms must be 2×2, got {self.matrix}')
        object.__setattr__(self, 'matrix', matrix)

        (a, b), (c, d) = matrix
        if abs(a * d - b * c) != 1:
            raise ValueError(f'|det M| must be 1, got det = {a * d - b * c}')
        eigvals = np.linalg.eigvals(np.array(matrix, dtype=float))
        if np.any(np.abs(eigvals.imag) > 0) or np.any(np.isclose(np.abs(eigvals), 1.0)):
            raise ValueError(f'{matrix} is not hyperbolic: eigenvalues {eigvals}')

    @cached_property
    def _eigen(self) -> tuple[float, float, np.ndarray, np.ndarray]:
        values, vectors = np.linalg.eig(np.array(self.matrix, dtype=float))
        values, vectors = values.real, vectors.real
        order = np.argsort(np.abs(values))
        directions = []
        for k in order:
            v = vectors[:, k] / np.linalg.norm(vectors[:, k])
            # Sign convention: first non-zero component positive
            pivot = v[np.flatnonzero(np.abs(v) > 1e-12)[0]]
            directions.append(v if pivot > 0 else -v)
        return float(values[order[0]]), float(values[order[1]]), directions[0], directions[1]

    @property
    def stable_eig(self) -> float:
        return self._eigen[0]

    @property
    def unstable_eig(self) -> float:
        return self._eigen[1]

    @property
    def stable_dir(self) -> np.ndarray:
        return self._eigen[2]

    @property
    def unstable_dir(self) -> np.ndarray:
        return self._eigen[3]

    @property
    def expansion_rate(self) -> float:
        return log(abs(self.unstable_eig))

    @cached_property
    def _float_matrix(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return tuple(tuple(float(v) for v in row) for row in self.matrix)

    @cached_property
    def _float_inverse(self) -> tuple[tuple[float, float], tuple[float, float]]:
        return tuple(tuple(float(v) for v in row) for row in int_matrix_power(self.matrix, -1))

    def iterate(self, x: TorusPoint, n: int) -> TorusPoint:
        """f^n(x); exact for rational points, one float step at a time otherwise"""
        if x.is_exact:
            (a, b), (c, d) = int_matrix_power(self.matrix, n)
            u, v = x.coords
            return TorusPoint((a * u + b * v, c * u + d * v))

        (a, b), (c, d) = self._float_matrix if n >= 0 else self._float_inverse
        u, v = x.coords
        for _ in range(abs(n)):
            u, v = (a * u + b * v) % 1.0, (c * u + d * v) % 1.0
        return TorusPoint((u, v))

    def lift_difference(self, x: TorusPoint, y: TorusPoint) -> tuple[Coord, Coord]:
        """The representative of y − x in [−1/2, 1/2)²"""
        exact = x.is_exact and y.is_exact
        half = Fraction(1, 2) if exact else 0.5
        if not exact:
            x, y = x.to_float(), y.to_float()
        return tuple(dy - dx - floor(dy - dx + half) for dx, dy in zip(x.coords, y.coords))

    def distance(self, x: TorusPoint, y: TorusPoint) -> float:
        du, dv = self.lift_difference(x, y)
        return hypot(float(du), float(dv))

    def displace(self, x: TorusPoint, vec) -> TorusPoint:
        return TorusPoint((float(x.coords[0]) + float(vec[0]), float(x.coords[1]) + float(vec[1])))

    def bracket(self, y: TorusPoint, z: TorusPoint) -> TorusPoint:
        """The point w with w − y on the stable line and w − z on the unstable line

        :raises TooFarApart: If d(y, z) exceeds the product structure radius
        """
        dist = self.distance(y, z)
        if dist > self.product_structure_radius:
            raise TooFarApart(
                f'd(y, z) = {dist:.4g} exceeds the product structure radius {self.product_structure_radius}'
            )
        if dist == 0.0:
            return y
        diff = np.array([float(c) for c in self.lift_difference(y, z)])
        # y + a·v_s = z + b·v_u
        a, b = np.linalg.solve(np.column_stack([self.stable_dir, -self.unstable_dir]), diff)
        return self.displace(y, a * self.stable_dir)

    def leaf_offset(self, y: TorusPoint, z: TorusPoint, side: str) -> float:
        """Signed length s with z = y + s·v along the `side` direction"""
        direction = self.stable_dir if side == 'stable' else self.unstable_dir
        diff = np.array([float(c) for c in self.lift_difference(y, z)])
        cross = diff[0] * direction[1] - diff[1] * direction[0]
        if abs(cross) > LEAF_TOL:
            error = NotOnStableLeaf if side == 'stable' else NotOnUnstableLeaf
            raise error(f'Difference {diff} is off the {side} direction by {abs(cross):.3e}')
        return float(diff @ direction)

    def check_leaf(self, y: TorusPoint, z: TorusPoint, side: str) -> None:
        self.leaf_offset(y, z, side)

    def leaf_pairs(self, y: TorusPoint, z: TorusPoint, side: str) -> Iterator[tuple]:
        # z is carried as y plus an exact leaf offset, so rounding along the
        # orbit never leaks into the expanding direction
        offset = self.leaf_offset(y, z, side)
        if side == 'stable':
            direction, factor, sign = self.stable_dir, self.stable_eig, 1
        else:
            direction, factor, sign = self.unstable_dir, 1.0 / self.unstable_eig, -1
        current, k = y, 0
        while True:
            yield current, (current if offset == 0.0 else self.displace(current, offset * factor**k * direction))
            current, k = self.iterate(current, sign), k + 1

    def leaf_neighbor(self, y: TorusPoint, side: str, r: float, rng: np.random.Generator) -> TorusPoint:
        direction = self.stable_dir if side == 'stable' else self.unstable_dir
        sign = 1.0 if rng.random() < 0.5 else -1.0
        return self.displace(y, sign * r * direction)

    def perturb(self, x: TorusPoint, r: float, rng: np.random.Generator) -> TorusPoint:
        angle = rng.uniform(0.0, 2 * np.pi)
        return self.displace(x, (r * np.cos(angle), r * np.sin(angle)))

    def random_point(self, rng: np.random.Generator) -> TorusPoint:
        u, v = rng.random(2)
        return TorusPoint((float(u), float(v)))

    def probe_points(self, count: int, rng: np.random.Generator, around=None, radius=None) -> list:
        """Probe grid: a square lattice of about `count` points, on T² or on a square patch"""
        side = max(1, int(round(count**0.5)))
        if around is None:
            ticks = (np.arange(side) + 0.5) / side
            return [TorusPoint((float(u), float(v))) for u in ticks for v in ticks]
        ticks = np.linspace(-radius, radius, side) if side > 1 else np.zeros(1)
        return [self.displace(around, (du, dv)) for du in ticks for dv in ticks]

    def close_orbit(self, x: TorusPoint, n: int) -> ClosedOrbit:
        """Exact closing: p = x + η with (Mⁿ − I)η = −e, e the minimal lift of fⁿ(x) − x

        :raises NotCloseEnough: If d(x, fⁿx) is not below `closing_radius`
        """
        if n < 1:
            raise ValueError(f'Closing time must be at least 1, got {n}')
        exact_x = x.to_exact()
        image = self.iterate(exact_x, n)
        delta = self.distance(exact_x, image)
        if delta >= self.closing_radius:
            raise NotCloseEnough(
                f'd(x, f^{n}x) = {delta:.4g} is not below the closing radius {self.closing_radius}'
            )

        (a, b), (c, d) = int_matrix_power(self.matrix, n)
        a, d = a - 1, d - 1
        det = a * d - b * c
        if det == 0:
            raise SingularClosing(f'det(M^{n} - I) = 0; M is not hyperbolic')
        eu, ev = self.lift_difference(exact_x, image)
        eta = (Fraction(-(d * eu - b * ev), det), Fraction(-(-c * eu + a * ev), det))
        p = TorusPoint((exact_x.coords[0] + eta[0], exact_x.coords[1] + eta[1]))

        orbit = self._orbit_from(p)
        assert self.iterate(p, n) == p, 'closing produced a non-periodic point'
        profile = self.closeness_profile(p, exact_x, n, delta=delta)
        logger.debug('Closed orbit of period %d at time %d, c\' = %.3g', orbit.period, n, profile.c_prime)
        return ClosedOrbit(orbit=orbit, source=x, n=n, profile=profile)

    def _orbit_from(self, p: TorusPoint) -> PeriodicOrbit:
        points = [p]
        while True:
            nxt = self.iterate(points[-1], 1)
            if nxt == p:
                break
            points.append(nxt)
        return PeriodicOrbit(points=tuple(points), period=len(points), key=str(p))

    def periodic_point_count(self, n: int) -> int:
        """|det(Mⁿ − I)|, the number of points with fⁿ(x) = x"""
        (a, b), (c, d) = int_matrix_power(self.matrix, n)
        return abs((a - 1) * (d - 1) - b * c)

    def fixed_points(self, n: int) -> list[TorusPoint]:
        """Every x with fⁿ(x) = x, via the Smith normal form of Mⁿ − I"""
        (a, b), (c, d) = int_matrix_power(self.matrix, n)
        _, diag, right = smith_normal_form(((a - 1, b), (c, d - 1)))
        d1, d2 = diag[0][0], diag[1][1]
        points = [
            TorusPoint(
                (
                    right[0][0] * Fraction(j1, d1) + right[0][1] * Fraction(j2, d2),
                    right[1][0] * Fraction(j1, d1) + right[1][1] * Fraction(j2, d2),
                )
            )
            for j1 in range(d1)
            for j2 in range(d2)
        ]
        return sorted(points, key=lambda p: p.coords)

    def enumerate_periodic(self, n: int) -> list[PeriodicOrbit]:
        """All orbits of minimal period exactly n, each once, started at their smallest point"""
        self._check_period(n)
        seen, orbits = set(), []
        for point in self.fixed_points(n):
            if point in seen:
                continue
            orbit = self._orbit_from(point)
            seen.update(orbit.points)
            if orbit.period == n:
                orbits.append(orbit)
        return orbits

    def coordinates(self, x: TorusPoint) -> np.ndarray:
        return x.as_array()

    def build_index(self, points: list) -> 'TorusIndex':
        return TorusIndex(points)

    def to_dict(self) -> dict:
        return {'type': 'toral', 'matrix': [list(row) for row in self.matrix]}


class TorusIndex(NearestIndex):
    """Nearest-point lookup in the quotient metric of T²"""

    def __init__(self, points: list):
        data = np.array([p.as_array() for p in points]).reshape(-1, 2)
        data = np.where(data >= 1.0, 0.0, data)
        self._tree = cKDTree(data, boxsize=1.0)

    def query(self, x: TorusPoint) -> tuple[int, float]:
        dist, idx = self._tree.query(x.as_array() % 1.0)
        return int(idx), float(dist)

    def neighbors(self, x: TorusPoint, k: int) -> tuple[np.ndarray, np.ndarray]:
        dist, idx = self._tree.query(x.as_array() % 1.0, k=k)
        return np.atleast_1d(idx), np.atleast_1d(dist)

    def other(self, x: TorusPoint, exclude: int) -> tuple[int, float]:
        idx, dist = self.neighbors(x, 2)
        keep = 0 if idx[0] != exclude else 1
        return int(idx[keep]), float(dist[keep])


# ---------------------------------------------------------------------------
# Subshifts of finite type
# ---------------------------------------------------------------------------
@dataclass(frozen=True, eq=False)
class SFT(BaseSystem):
    """The two-sided subshift of finite type of a 0/1 transition matrix

    :param adjacency: `adjacency[a][b] == 1` iff symbol b may follow symbol a
    :param metric_base: β in d(x, y) = β^k, k the smallest |i| with x_i ≠ y_i
    :param require_mixing: Raise `NotMixing` unless some power of `adjacency` is strictly positive
    """

    adjacency: IntMatrix
    metric_base: float = 0.5
    require_mixing: bool = False
    product_structure_radius: float = SYMBOLIC_PRODUCT_STRUCTURE_RADIUS
    closing_radius: float = CLOSING_RADIUS
    period_max: int = PERIOD_MAX
    kind: str = field(default='sft', init=False)

    def __post_init__(self):
        adjacency = tuple(tuple(int(bool(v)) for v in row) for row in self.adjacency)
        size = len(adjacency)
        if size == 0 or any(len(row) != size for row in adjacency):
            raise ValueError('Adjacency matrix must be square and non-empty')
        object.__setattr__(self, 'adjacency', adjacency)
        if not 0.0 < self.metric_base < 1.0:
            raise ValueError(f'metric_base must lie in (0, 1), got {self.metric_base}')

        matrix = self.matrix
        dead = [s for s in range(size) if not matrix[s].any() or not matrix[:, s].any()]
        if dead:
            raise ValueError(f'Symbols {dead} lack an incoming or an outgoing edge')
        if not self.is_irreducible:
            logger.warning(
                'Transition graph is reducible; transfer maps are only unique per component'
            )
        if self.require_mixing and self.mixing_time is None:
            raise NotMixing('Adjacency matrix is not primitive (no strictly positive power)')

    @property
    def alphabet_size(self) -> int:
        return len(self.adjacency)

    @cached_property
    def matrix(self) -> np.ndarray:
        return np.array(self.adjacency, dtype=np.int64)

    @property
    def expansion_rate(self) -> float:
        return -log(self.metric_base)

    @cached_property
    def is_irreducible(self) -> bool:
        size = self.alphabet_size
        reach = np.linalg.matrix_power(np.eye(size, dtype=np.int64) + self.matrix, size - 1)
        return bool((reach > 0).all())

    @cached_property
    def mixing_time(self) -> int | None:
        """Smallest m with adjacencyᵐ strictly positive, or None if not mixing"""
        size = self.alphabet_size
        power = np.eye(size, dtype=np.int64)
        # Wielandt's bound on the exponent of a primitive matrix
        for m in range(1, (size - 1) ** 2 + 2):
            power = np.minimum(power @ self.matrix, 1)
            if (power > 0).all():
                return m
        return None

    def sft_period(self) -> tuple[int, list[list[int]]]:
        """Period of an irreducible SFT (gcd of its cycle lengths) and its cyclic classes

        f^period maps each class to itself and is mixing there.
        """
        size = self.alphabet_size
        level = {0: 0}
        queue, period = deque([0]), 0
        while queue:
            a = queue.popleft()
            for b in np.flatnonzero(self.matrix[a]):
                b = int(b)
                if b not in level:
                    level[b] = level[a] + 1
                    queue.append(b)
                else:
                    period = gcd(period, level[a] + 1 - level[b])
        period = period or 1
        classes = [[s for s in range(size) if level.get(s, -1) % period == k] for k in range(period)]
        return period, classes

    def is_admissible(self, word, cyclic: bool = False) -> bool:
        word = tuple(word)
        pairs = list(zip(word, word[1:]))
        if cyclic and word:
            pairs.append((word[-1], word[0]))
        return all(self.adjacency[a][b] for a, b in pairs)

    def admissible_words(self, length: int) -> list[tuple[int, ...]]:
        """Every admissible word of the given length, in lexicographic order"""
        words = [(s,) for s in range(self.alphabet_size)]
        for _ in range(length - 1):
            words = [w + (b,) for w in words for b in self._successors(w[-1])]
        return words

    def validate_point(self, x: SymbolicPoint) -> SymbolicPoint:
        """Check every adjacent pair of x, tails and junctions included

        :raises InadmissibleWord: On any forbidden transition or unknown symbol
        """
        symbols = set(x.word) | set(x.left_tail) | set(x.right_tail)
        if not symbols <= set(range(self.alphabet_size)):
            raise InadmissibleWord(f'Symbols {symbols} outside alphabet of size {self.alphabet_size}')
        ok = (
            self.is_admissible(x.left_tail, cyclic=True)
            and self.is_admissible(x.right_tail, cyclic=True)
            and self.is_admissible((x.left_tail[-1],) + x.word + (x.right_tail[0],))
        )
        if not ok:
            raise InadmissibleWord(f'Point {x} contains a forbidden transition')
        return x

    def iterate(self, x: SymbolicPoint, n: int) -> SymbolicPoint:
        return x.shift(n)

    def _horizon(self, *points: SymbolicPoint) -> int:
        """An index beyond which all the given points are inside their periodic tails"""
        reach = max(max(abs(p.lo_edge), abs(p.hi_edge)) for p in points)
        period = 1
        for p in points:
            for tail in (p.left_tail, p.right_tail):
                period = period * len(tail) // gcd(period, len(tail))
        return reach + period + 1

    def agreement(self, x: SymbolicPoint, y: SymbolicPoint) -> int | None:
        """Smallest |i| with x_i ≠ y_i, or None when the sequences are equal"""
        for k in range(self._horizon(x, y) + 1):
            if x.symbol(k) != y.symbol(k) or x.symbol(-k) != y.symbol(-k):
                return k
        return None

    def distance(self, x: SymbolicPoint, y: SymbolicPoint) -> float:
        k = self.agreement(x, y)
        return 0.0 if k is None else self.metric_base**k

    def _assemble(self, symbol_at, reach: int, left_period: int, right_period: int) -> SymbolicPoint:
        """Build the point whose i-th symbol is `symbol_at(i)`, periodic beyond ±reach"""
        word = tuple(symbol_at(i) for i in range(-reach, reach + 1))
        left = tuple(symbol_at(-reach - left_period + r) for r in range(left_period))
        right = tuple(symbol_at(reach + 1 + r) for r in range(right_period))
        return self.validate_point(SymbolicPoint(word=word, origin=reach, left_tail=left, right_tail=right))

    def bracket(self, y: SymbolicPoint, z: SymbolicPoint) -> SymbolicPoint:
        """Splice: coordinates i ≥ 0 from y, i < 0 from z

        :raises TooFarApart: If d(y, z) exceeds the product structure radius
        :raises InadmissibleSplice: If z₋₁ → y₀ is a forbidden transition
        """
        dist = self.distance(y, z)
        if dist > self.product_structure_radius:
            raise TooFarApart(
                f'd(y, z) = {dist:.4g} exceeds the product structure radius {self.product_structure_radius}'
            )
        if not self.adjacency[z.symbol(-1)][y.symbol(0)]:
            raise InadmissibleSplice(f'Junction {z.symbol(-1)} -> {y.symbol(0)} is forbidden')
        reach = self._horizon(y, z)
        return self._assemble(
            lambda i: y.symbol(i) if i >= 0 else z.symbol(i),
            reach,
            len(z.left_tail),
            len(y.right_tail),
        )

    def check_leaf(self, y: SymbolicPoint, z: SymbolicPoint, side: str) -> None:
        reach = self._horizon(y, z)
        indices = range(0, reach + 1) if side == 'stable' else range(-reach, 0)
        if any(y.symbol(i) != z.symbol(i) for i in indices):
            error = NotOnStableLeaf if side == 'stable' else NotOnUnstableLeaf
            which = 'futures (i >= 0)' if side == 'stable' else 'pasts (i < 0)'
            raise error(f'{y} and {z} do not share their {which}')

    def leaf_pairs(self, y: SymbolicPoint, z: SymbolicPoint, side: str) -> Iterator[tuple]:
        self.check_leaf(y, z, side)
        sign = 1 if side == 'stable' else -1
        while True:
            yield y, z
            y, z = y.shift(sign), z.shift(sign)

    def _successors(self, a: int) -> list[int]:
        return [int(b) for b in np.flatnonzero(self.matrix[a])]

    def _predecessors(self, b: int) -> list[int]:
        return [int(a) for a in np.flatnonzero(self.matrix[:, b])]

    def _cycle_from(self, s: int) -> tuple[int, ...]:
        """Shortest cycle s → … → s, as the word starting with s"""
        parent, queue = {}, deque([s])
        while queue:
            a = queue.popleft()
            for b in self._successors(a):
                if b == s:
                    path = [a]
                    while path[-1] != s:
                        path.append(parent[path[-1]])
                    return tuple(reversed(path))
                if b not in parent:
                    parent[b] = a
                    queue.append(b)
        raise NoConnector(f'Symbol {s} lies on no cycle')

    def _walk(self, start: int, length: int, rng: np.random.Generator, backwards: bool = False) -> list[int]:
        symbols = [start]
        for _ in range(length):
            options = self._predecessors(symbols[-1]) if backwards else self._successors(symbols[-1])
            symbols.append(options[rng.integers(len(options))])
        return symbols[1:]

    def _with_tails(self, core: list[int], origin: int, rng: np.random.Generator) -> SymbolicPoint:
        # Right tail: a cycle through a successor of the last symbol;
        # left tail: a cycle through a predecessor of the first, ending there
        nxt = self._successors(core[-1])
        right = self._cycle_from(nxt[rng.integers(len(nxt))])
        prv = self._predecessors(core[0])
        cycle = self._cycle_from(prv[rng.integers(len(prv))])
        left = cycle[1:] + cycle[:1]
        return self.validate_point(SymbolicPoint(word=tuple(core), origin=origin, left_tail=left, right_tail=right))

    def random_point(self, rng: np.random.Generator, half_width: int = 64) -> SymbolicPoint:
        start = int(rng.integers(self.alphabet_size))
        core = [start] + self._walk(start, 2 * half_width, rng)
        return self._with_tails(core, half_width, rng)

    def _depth(self, r: float) -> int:
        return max(0, ceil(log(r) / log(self.metric_base) - 1e-12)) if r < 1.0 else 0

    def perturb(self, x: SymbolicPoint, r: float, rng: np.random.Generator, pad: int = 16) -> SymbolicPoint:
        """Keep x on |i| < k with β^k ≈ r and continue randomly on both sides"""
        k = self._depth(r)
        if k == 0:
            return self.random_point(rng)
        kept = list(x.window(-(k - 1), k - 1))
        after = self._walk(kept[-1], pad, rng)
        before = self._walk(kept[0], pad, rng, backwards=True)[::-1]
        return self._with_tails(before + kept + after, len(before) + k - 1, rng)

    def leaf_neighbor(self, y: SymbolicPoint, side: str, r: float, rng: np.random.Generator, pad: int = 16) -> SymbolicPoint:
        """Same future (stable) or same past (unstable) as y, agreeing on |i| < k with β^k ≈ r"""
        k = max(1, self._depth(r))
        reach = self._horizon(y) + k
        if side == 'stable':
            kept = list(y.window(-(k - 1), reach))
            before = self._walk(kept[0], pad, rng, backwards=True)[::-1]
            fresh = self._with_tails(before + kept, len(before) + k - 1, rng)
            # Free past, y's own future including its periodic tail
            return self._assemble(
                lambda i: fresh.symbol(i) if i < 0 else y.symbol(i),
                max(fresh.origin, reach),
                len(fresh.left_tail),
                len(y.right_tail),
            )
        kept = list(y.window(-reach, k - 1))
        after = self._walk(kept[-1], pad, rng)
        fresh = self._with_tails(kept + after, reach, rng)
        return self._assemble(
            lambda i: y.symbol(i) if i < 0 else fresh.symbol(i),
            max(fresh.hi_edge + 1, reach),
            len(y.left_tail),
            len(fresh.right_tail),
        )

    def probe_points(self, count: int, rng: np.random.Generator, around=None, radius=None) -> list:
        if around is None:
            return [self.random_point(rng) for _ in range(count)]
        return [self.perturb(around, radius, rng) for _ in range(count)]

    def close_orbit(self, x: SymbolicPoint, n: int) -> ClosedOrbit:
        """Repeat the word x₀…xₙ₋₁ periodically

        :raises NotCloseEnough: Unless x₀ = xₙ
        :raises InadmissibleWord: If x is not a point of this shift
        """
        if n < 1:
            raise ValueError(f'Closing time must be at least 1, got {n}')
        self.validate_point(x)
        if x.symbol(0) != x.symbol(n):
            raise NotCloseEnough(f'x_0 = {x.symbol(0)} differs from x_{n} = {x.symbol(n)}')
        root = _primitive_root(x.window(0, n - 1))
        orbit = self._orbit_of_word(root, canonical=False)
        profile = self.closeness_profile(orbit.start, x, n, delta=self.distance(x, x.shift(n)))
        return ClosedOrbit(orbit=orbit, source=x, n=n, profile=profile)

    def _orbit_of_word(self, word: tuple[int, ...], canonical: bool = True) -> PeriodicOrbit:
        root = _primitive_root(tuple(word))
        if canonical:
            root = min(_rotations(root))
        points = tuple(SymbolicPoint.periodic(w) for w in _rotations(root))
        return PeriodicOrbit(points=points, period=len(root), key=_word_key(root))

    def enumerate_periodic(self, n: int) -> list[PeriodicOrbit]:
        """All cycles of length n in the transition graph with minimal period n, each once"""
        self._check_period(n)
        words = []

        def extend(word: list[int]):
            if len(word) == n:
                if self.adjacency[word[-1]][word[0]]:
                    candidate = tuple(word)
                    if candidate == min(_rotations(candidate)) and _primitive_root(candidate) == candidate:
                        words.append(candidate)
                return
            for b in self._successors(word[-1]):
                # A minimal rotation never has a symbol below its first one
                if b >= word[0]:
                    extend(word + [b])

        for s in range(self.alphabet_size):
            extend([s])
        return [self._orbit_of_word(w) for w in sorted(words)]

    def periodic_point_count(self, n: int) -> int:
        """trace(adjacencyⁿ), the number of points with σⁿ(x) = x"""
        return int(np.trace(np.linalg.matrix_power(self.matrix, n)))

    def connector(self, a: int, b: int, length: int) -> tuple[int, ...]:
        """Lexicographically smallest word c of the given length with a → c → b admissible

        :raises NoConnector: If no such word exists
        """
        # reach[t] = symbols with a path of exactly t edges to b
        reach = [{b}]
        for _ in range(length):
            reach.append({s for s in range(self.alphabet_size) if any(self.adjacency[s][t] for t in reach[-1])})
        word, prev = [], a
        for k in range(length):
            options = [s for s in self._successors(prev) if s in reach[length - k]]
            if not options:
                raise NoConnector(f'No connector of length {length} from {a} to {b}')
            prev = min(options)
            word.append(prev)
        if not self.adjacency[prev][b]:
            raise NoConnector(f'No connector of length {length} from {a} to {b}')
        return tuple(word)

    def glue_specification(self, segments: list, gap: int) -> GluedOrbit:
        """Glue admissible words into one periodic itinerary with connectors of length `gap`

        :raises NotMixing: If the transition matrix is not primitive
        :raises NoConnector: If some junction cannot be bridged in exactly `gap` symbols
        """
        if self.mixing_time is None:
            raise NotMixing('Specification gluing needs a mixing SFT')
        if gap < self.mixing_time:
            logger.warning('Gap %d is below the mixing time %d; connectors may not exist', gap, self.mixing_time)
        segments = [tuple(int(s) for s in seg) for seg in segments]
        for seg in segments:
            if not seg or not self.is_admissible(seg):
                raise InadmissibleWord(f'Segment {seg} is empty or not admissible')

        word, offsets = [], []
        for k, seg in enumerate(segments):
            offsets.append(len(word))
            word.extend(seg)
            following = segments[(k + 1) % len(segments)]
            word.extend(self.connector(seg[-1], following[0], gap))
        word = tuple(word)
        assert self.is_admissible(word, cyclic=True), 'glued itinerary is not admissible'
        orbit = self._orbit_of_word(_primitive_root(word), canonical=False)
        return GluedOrbit(word=word, offsets=tuple(offsets), orbit=orbit)

    def coordinates(self, x: SymbolicPoint, depth: int = SYMBOLIC_COORDINATE_DEPTH) -> np.ndarray:
        beta, scale = self.metric_base, max(1, self.alphabet_size - 1)
        future = sum(x.symbol(i) * beta ** (i + 1) for i in range(depth))
        past = sum(x.symbol(-i) * beta**i for i in range(1, depth + 1))
        return np.array([future, past]) / scale

    def build_index(self, points: list) -> 'SymbolicIndex':
        return SymbolicIndex(self, points)

    def to_dict(self) -> dict:
        return {
            'type': 'sft',
            'adjacency': [list(row) for row in self.adjacency],
            'metric_base': self.metric_base,
        }


class SymbolicIndex(NearestIndex):
    """Nearest-point lookup by longest centred agreement"""

    def __init__(self, base: SFT, points: list, max_radius: int = SYMBOLIC_INDEX_RADIUS):
        self._base, self._points = base, points
        self._tables = [dict() for _ in range(max_radius + 1)]
        for idx, point in enumerate(points):
            for r, table in enumerate(self._tables):
                table.setdefault(point.window(-r, r), idx)

    def query(self, x: SymbolicPoint) -> tuple[int, float]:
        # Agreement on radius r implies agreement on every smaller radius
        lo, hi, best = 0, len(self._tables) - 1, None
        while lo <= hi:
            mid = (lo + hi) // 2
            idx = self._tables[mid].get(x.window(-mid, mid))
            if idx is None:
                hi = mid - 1
            else:
                best, lo = idx, mid + 1
        best = 0 if best is None else best
        return best, self._base.distance(x, self._points[best])


def base_from_dict(block: dict, **overrides) -> BaseSystem:
    """Build a base system from a spec-file base block"""
    block = dict(block)
    kind = block.pop('type')
    params = {key: value for key, value in overrides.items() if value is not None}
    match kind:
        case 'toral':
            return ToralAutomorphism(matrix=block['matrix'], **params)
        case 'sft':
            return SFT(
                adjacency=block['adjacency'],
                metric_base=block.get('metric_base', 0.5),
                require_mixing=block.get('mixing', False),
                **params,
            )
        case _:
            raise ValueError(f'Unknown base type {kind!r}')
