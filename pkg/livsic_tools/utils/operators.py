from dataclasses import dataclass, field
from math import exp, isfinite, log
from typing import Literal

import numpy as np

from .errors import DimMismatch, NonFinite, NotInvertible

Norm = Literal['inf', 'two']

INVERSE_CHECK_TOL = 1e-10
UNIT_BAND = (0.5, 2.0)
# exp() overflows a double beyond this
MAX_LOG = 700.0


def operator_norm(mtx: np.ndarray, norm: Norm = 'inf') -> float:
    """Induced operator norm of a real matrix

    :param mtx: The matrix
    :type mtx: `np.ndarray`
    :param norm: `'inf'` for the max absolute row sum (exact in floating point), `'two'` for the largest singular value, defaults to `'inf'`
    :type norm: `Norm`, optional
    :return: The norm
    :rtype: `float`
    """
    match norm:
        case 'inf':
            return float(np.abs(mtx).sum(axis=-1).max())
        case 'two':
            return float(np.linalg.norm(mtx, ord=2))
        case _:
            raise ValueError(f'Unknown norm {norm!r}, expected "inf" or "two"')


def vector_norm(vec: np.ndarray, norm: Norm = 'inf') -> float:
    """The vector norm inducing `operator_norm` with the same `norm`"""
    return float(np.abs(vec).max()) if norm == 'inf' else float(np.linalg.norm(vec))


@dataclass(frozen=True, eq=False)
class InvertibleOp:
    """A d×d real matrix carried together with its inverse

    Construct through `from_matrix` (inverse computed) or `from_pair`
    (inverse supplied, re-verified). Norms are cached per norm choice.
    """

    forward: np.ndarray
    inverse: np.ndarray
    _norms: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for mtx in (self.forward, self.inverse):
            mtx.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.forward.shape[0]

    @classmethod
    def from_matrix(cls, mtx) -> 'InvertibleOp':
        forward = np.array(mtx, dtype=float)
        if forward.ndim != 2 or forward.shape[0] != forward.shape[1]:
            raise DimMismatch(f'Expected a square matrix, got shape {forward.shape}')
        if not np.all(np.isfinite(forward)):
            raise NonFinite('Matrix has non-finite entries')
        try:
            inverse = np.linalg.inv(forward)
        except np.linalg.LinAlgError as e:
            raise NotInvertible(f'Matrix is singular: {e}') from e
        return cls.from_pair(forward, inverse)

    @classmethod
    def from_pair(cls, forward, inverse, verify: bool = True) -> 'InvertibleOp':
        forward, inverse = np.array(forward, dtype=float), np.array(inverse, dtype=float)
        if forward.shape != inverse.shape:
            raise DimMismatch(f'Forward {forward.shape} and inverse {inverse.shape} shapes differ')
        if not (np.all(np.isfinite(forward)) and np.all(np.isfinite(inverse))):
            raise NonFinite('Operator or its inverse has non-finite entries')

        if verify:
            dim = forward.shape[0]
            defect = operator_norm(forward @ inverse - np.eye(dim))
            if defect > INVERSE_CHECK_TOL * dim:
                raise NotInvertible(
                    f'Supplied inverse is off by {defect:.3e} (allowed {INVERSE_CHECK_TOL * dim:.1e})'
                )
        return cls(forward=forward, inverse=inverse)

    @classmethod
    def identity(cls, dim: int) -> 'InvertibleOp':
        return cls(forward=np.eye(dim), inverse=np.eye(dim))

    def inv(self) -> 'InvertibleOp':
        return InvertibleOp(forward=self.inverse, inverse=self.forward)

    def compose(self, other: 'InvertibleOp') -> 'InvertibleOp':
        """`self ∘ other`, i.e. apply `other` first"""
        if self.dim != other.dim:
            raise DimMismatch(f'Cannot compose dim {self.dim} with dim {other.dim}')
        return InvertibleOp(
            forward=self.forward @ other.forward, inverse=other.inverse @ self.inverse
        )

    def __matmul__(self, other: 'InvertibleOp') -> 'InvertibleOp':
        return self.compose(other)

    def norm(self, norm: Norm = 'inf') -> float:
        key = ('forward', norm)
        if key not in self._norms:
            self._norms[key] = operator_norm(self.forward, norm)
        return self._norms[key]

    def inv_norm(self, norm: Norm = 'inf') -> float:
        key = ('inverse', norm)
        if key not in self._norms:
            self._norms[key] = operator_norm(self.inverse, norm)
        return self._norms[key]


def op_metric(a: InvertibleOp, b: InvertibleOp, norm: Norm = 'inf') -> float:
    """The metric d(A, B) = ‖A − B‖ + ‖A⁻¹ − B⁻¹‖ on invertible operators

    :raises DimMismatch: If `a` and `b` act on different dimensions
    """
    if a.dim != b.dim:
        raise DimMismatch(f'Cannot compare dim {a.dim} with dim {b.dim}')
    return operator_norm(a.forward - b.forward, norm) + operator_norm(
        a.inverse - b.inverse, norm
    )


def m_lower(a: InvertibleOp, norm: Norm = 'inf') -> float:
    """The co-norm m(A) = inf over unit v of ‖Av‖, which equals ‖A⁻¹‖⁻¹"""
    return 1.0 / a.inv_norm(norm)


def _renormalize(unit: np.ndarray, log_scale: float) -> tuple[np.ndarray, float]:
    size = operator_norm(unit)
    if not isfinite(size) or size == 0.0:
        raise NonFinite('Renormalization met a zero or non-finite factor')
    if UNIT_BAND[0] <= size <= UNIT_BAND[1]:
        return unit, log_scale
    return unit / size, log_scale + log(size)


@dataclass(frozen=True, eq=False)
class ScaledProduct:
    """An orbit product stored as `e^{log_scale}·unit` with its inverse `e^{inv_log_scale}·inv_unit`

    `unit` and `inv_unit` are kept with ∞-norm in [1/2, 2] so that products
    of thousands of factors neither overflow nor underflow.
    """

    unit: np.ndarray
    log_scale: float
    inv_unit: np.ndarray
    inv_log_scale: float
    length: int = 0

    @property
    def dim(self) -> int:
        return self.unit.shape[0]

    @classmethod
    def identity(cls, dim: int) -> 'ScaledProduct':
        return cls(unit=np.eye(dim), log_scale=0.0, inv_unit=np.eye(dim), inv_log_scale=0.0)

    @classmethod
    def from_op(cls, op: InvertibleOp) -> 'ScaledProduct':
        unit, log_scale = _renormalize(op.forward, 0.0)
        inv_unit, inv_log_scale = _renormalize(op.inverse, 0.0)
        return cls(unit, log_scale, inv_unit, inv_log_scale, length=1)

    def compose(self, op: InvertibleOp) -> 'ScaledProduct':
        """Append one factor on the left: returns the product `op ∘ self`"""
        if op.dim != self.dim:
            raise DimMismatch(f'Cannot append a dim {op.dim} factor to a dim {self.dim} product')
        unit, log_scale = _renormalize(op.forward @ self.unit, self.log_scale)
        inv_unit, inv_log_scale = _renormalize(self.inv_unit @ op.inverse, self.inv_log_scale)
        return ScaledProduct(unit, log_scale, inv_unit, inv_log_scale, self.length + 1)

    def then(self, later: 'ScaledProduct') -> 'ScaledProduct':
        """The product `later ∘ self`, for segment-wise evaluation of long products"""
        if later.dim != self.dim:
            raise DimMismatch(f'Cannot compose dim {later.dim} with dim {self.dim}')
        unit, log_scale = _renormalize(later.unit @ self.unit, later.log_scale + self.log_scale)
        inv_unit, inv_log_scale = _renormalize(
            self.inv_unit @ later.inv_unit, later.inv_log_scale + self.inv_log_scale
        )
        return ScaledProduct(unit, log_scale, inv_unit, inv_log_scale, self.length + later.length)

    def inv(self) -> 'ScaledProduct':
        return ScaledProduct(
            self.inv_unit, self.inv_log_scale, self.unit, self.log_scale, self.length
        )

    def log_norm(self, norm: Norm = 'inf') -> float:
        return self.log_scale + log(operator_norm(self.unit, norm))

    def log_inv_norm(self, norm: Norm = 'inf') -> float:
        return self.inv_log_scale + log(operator_norm(self.inv_unit, norm))

    def matrix(self) -> np.ndarray:
        if self.log_scale > MAX_LOG:
            raise NonFinite(f'Product norm e^{self.log_scale:.1f} does not fit a double')
        return exp(self.log_scale) * self.unit

    def inverse_matrix(self) -> np.ndarray:
        if self.inv_log_scale > MAX_LOG:
            raise NonFinite(f'Inverse norm e^{self.inv_log_scale:.1f} does not fit a double')
        return exp(self.inv_log_scale) * self.inv_unit

    def to_op(self) -> InvertibleOp:
        return InvertibleOp(forward=self.matrix(), inverse=self.inverse_matrix())


def scaled_compose(product: ScaledProduct, op: InvertibleOp) -> ScaledProduct:
    """Append `op` on the left of `product`, renormalizing into the unit band"""
    return product.compose(op)


def _aligned_gap(unit_a, scale_a, unit_b, scale_b, norm: Norm) -> float:
    common = max(scale_a, scale_b)
    return operator_norm(
        exp(scale_a - common) * unit_a - exp(scale_b - common) * unit_b, norm
    )


def scaled_metric(p: ScaledProduct, q: ScaledProduct, norm: Norm = 'inf') -> float:
    """The metric between two scaled products after aligning their scales

    Both forward parts are brought to the larger of the two scales (and the
    inverse parts likewise), so the value is the metric relative to the size
    of the products. For products of moderate size it equals `op_metric`
    divided by the common scale factors.
    """
    if p.dim != q.dim:
        raise DimMismatch(f'Cannot compare dim {p.dim} with dim {q.dim}')
    return _aligned_gap(p.unit, p.log_scale, q.unit, q.log_scale, norm) + _aligned_gap(
        p.inv_unit, p.inv_log_scale, q.inv_unit, q.inv_log_scale, norm
    )


def deviation_from_identity(p: ScaledProduct, norm: Norm = 'inf') -> float:
    """d(P, Id) in absolute terms; infinite when P does not fit a double"""
    if max(p.log_scale, p.inv_log_scale) > MAX_LOG:
        return float('inf')
    return op_metric(p.to_op(), InvertibleOp.identity(p.dim), norm)
