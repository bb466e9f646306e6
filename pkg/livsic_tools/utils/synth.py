import logging
from dataclasses import replace

import numpy as np

from .cocycle import (CocycleSpec, TransferSpec, TrigTerm, eval_generator,
                      norm_bound)
from .dynamics import BaseSystem
from .errors import InadmissibleWord
from .operators import InvertibleOp, Norm

logger = logging.getLogger(__name__)


def make_coboundary(transfer: TransferSpec, base: BaseSystem, norm: Norm = 'inf') -> CocycleSpec:
    """The generator A(x) = C(fx)·C(x)⁻¹ of a transfer map C

    Constant C gives A = Id and a locally constant C of window k gives a
    locally constant A of window k + 1; every other C gives a
    `coboundary_of` generator. The result records the budget
    B = max ‖C‖, ‖C⁻¹‖ over the sampled points.

    :param transfer: The transfer map C
    :type transfer: `TransferSpec`
    :param base: The base system f
    :type base: `BaseSystem`
    :return: The coboundary generator, with `budget` set
    :rtype: `CocycleSpec`
    """
    budget = norm_bound(transfer, base, norm)
    logger.info('Transfer map norm budget B = %.6g', budget)
    common = {'alpha': transfer.alpha, 'c0': transfer.c0, 'budget': budget}

    match transfer.kind:
        case 'constant':
            return CocycleSpec(kind='constant', dim=transfer.dim, matrix=np.eye(transfer.dim), **common)
        case 'locally_constant':
            table = {}
            for word in base.admissible_words(transfer.window + 1):
                here, there = transfer.table.get(word[:-1]), transfer.table.get(word[1:])
                if here is None or there is None:
                    raise InadmissibleWord(f'Transfer table has no entry for a window of {word}')
                table[word] = there @ here.inv()
            return CocycleSpec(kind='locally_constant', dim=transfer.dim, window=transfer.window + 1, table=table, **common)
        case _:
            return CocycleSpec(kind='coboundary_of', dim=transfer.dim, transfer=transfer, **common)


def random_terms(dim: int, eta: float, rng: np.random.Generator, count: int = 3) -> tuple[TrigTerm, ...]:
    """`count` trigonometric terms whose coefficients have total ∞-norm eta"""
    coefs = rng.standard_normal((count, dim, dim))
    coefs *= eta / sum(np.abs(c).sum(axis=1).max() for c in coefs)
    freqs = rng.integers(-2, 3, size=(count, 2))
    freqs[~freqs.any(axis=1)] = (1, 0)
    phases = rng.uniform(0.0, 2 * np.pi, size=count)
    return tuple(
        TrigTerm(coef=coef, freq=(int(f[0]), int(f[1])), phase=float(phase))
        for coef, f, phase in zip(coefs, freqs, phases)
    )


def make_perturbed(spec: CocycleSpec, eta: float, seed: int) -> CocycleSpec:
    """Left-multiply the generator by exp(G(x)), G a seeded trigonometric field of norm eta

    :raises ValueError: If eta is negative
    """
    if eta < 0:
        raise ValueError(f'eta must be non-negative, got {eta}')
    if eta == 0:
        return spec
    terms = random_terms(spec.dim, eta, np.random.default_rng(seed))
    return CocycleSpec(
        kind='perturbed',
        dim=spec.dim,
        inner=replace(spec, _constant_op=[]),
        terms=terms,
        alpha=spec.alpha,
        eta=eta,
    )


def evaluate_transfer(transfer: TransferSpec, base: BaseSystem, x) -> InvertibleOp:
    """C(x) for a transfer spec, the closed-form ground truth of a synthesized coboundary"""
    return eval_generator(transfer, base, x)
