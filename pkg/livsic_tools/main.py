import logging
import sys
from enum import Enum
from pathlib import Path
from typing import Annotated, Optional

import typer
from rich import print as rprint

from . import __version__
from .utils.defaults import (CSV_COLUMNS, DOCUMENTATION, EXIT_CONFIG,
                             EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_PASS)

see_more_message = f'See {DOCUMENTATION} for more information.'
app = typer.Typer()
logger = logging.getLogger('livsic_tools')


class NormChoice(str, Enum):
    inf = 'inf'
    two = 'two'


class SolveMethod(str, Enum):
    orbit_propagation = 'orbit_propagation'
    holonomy_extension = 'holonomy_extension'


SpecOption = Annotated[
    Path, typer.Option('--spec', '-s', help=f'JSON or YAML spec file describing the base and the cocycle. {see_more_message}')
]
OutOption = Annotated[Path, typer.Option('--out', '-o', help='Directory to write the report and tables into.')]
SeedOption = Annotated[Optional[int], typer.Option('--seed', help='Seed for every random draw. Overrides params.seed.')]
PeriodMaxOption = Annotated[Optional[int], typer.Option('--period-max', help='Largest period to enumerate.')]
OrbitLenOption = Annotated[Optional[int], typer.Option('--orbit-len', help='Length of sampled orbits.')]
GridEpsOption = Annotated[Optional[float], typer.Option('--grid-eps', help='Required density of the solution orbit.')]
TolOption = Annotated[Optional[float], typer.Option('--tol', help='Base tolerance of the periodic identity test.')]
NormOption = Annotated[Optional[NormChoice], typer.Option('--norm', help='Operator norm to measure with.')]
WorkersOption = Annotated[Optional[int], typer.Option('--workers', help='Processes to spread batches over.')]


@app.callback(no_args_is_help=True)
def callback(
    verbose: Annotated[
        int, typer.Option('--verbose', '-v', count=True, help='Log progress; repeat for debug output.')
    ] = 0
) -> None:
    """
    Numerical experiments on the cohomological equation
    A(x) = C(fx)C(x)⁻¹ for matrix cocycles over hyperbolic systems.
    """
    from rich.logging import RichHandler

    if not any(isinstance(h, RichHandler) for h in logger.handlers):
        logger.addHandler(RichHandler(show_path=False))
    logger.setLevel({0: logging.WARNING, 1: logging.INFO}.get(verbose, logging.DEBUG))


def _start(command: str, spec: Path, **overrides):
    from .utils import validate
    from .utils.report import Report

    if overrides.get('norm') is not None:
        overrides['norm'] = overrides['norm'].value
    config = validate.spec_file(spec, command, overrides)
    report = Report(command=command, version=__version__, config=config.echo())
    return config, report


def _finish(report, out: Path, verdict) -> None:
    from .utils.periodic import Verdict

    if verdict is None:
        report.status = EXIT_PASS
    else:
        verdict = Verdict(verdict)
        report.verdict = verdict.value
        report.status = {
            Verdict.PASS: EXIT_PASS,
            Verdict.FAIL: EXIT_FAIL,
            Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE,
        }[verdict]
    report.write(out)
    colour = {EXIT_PASS: 'green', EXIT_FAIL: 'red', EXIT_INCONCLUSIVE: 'yellow'}[report.status]
    rprint(f'[{colour}]{report.command}: {report.verdict or "done"}[/] (report in [bright_cyan]{out}[/])')
    raise typer.Exit(report.status)


def _generator(config):
    """The cocycle under study and, when known, its closed-form transfer map"""
    from functools import partial

    from .utils.synth import evaluate_transfer, make_coboundary, make_perturbed

    base, norm = config.base, config.params['norm']
    cocycle = config.cocycle if config.cocycle is not None else make_coboundary(config.transfer, base, norm)
    truth = None
    if config.eta == 0:
        if config.transfer is not None:
            truth = partial(evaluate_transfer, config.transfer, base)
        elif cocycle.kind == 'coboundary_of':
            truth = partial(evaluate_transfer, cocycle.transfer, base)
    cocycle = make_perturbed(cocycle, config.eta, config.params['seed'] or 0)
    return cocycle, truth


def _combine(*verdicts):
    from .utils.periodic import combine

    return combine(verdicts)


def _start_point(base, rng, orbit_len: int):
    # Symbolic orbits need fresh symbols at every shift
    if base.kind == 'sft':
        return base.random_point(rng, half_width=orbit_len + 32)
    return base.random_point(rng)


@app.command(no_args_is_help=True)
def synth(spec: SpecOption, out: OutOption, seed: SeedOption = None, norm: NormOption = None) -> None:
    """
    Turn a transfer map C into the coboundary generator
    A(x) = C(fx)C(x)⁻¹, perturbed if the spec asks for it, and write a
    spec file for it.
    """
    config, report = _start('synth', spec, seed=seed, norm=norm)
    with report.timings.stage('synth'):
        cocycle, _ = _generator(config)
    params = dict(config.params)
    report.documents['synth_spec'] = {'base': config.source['base'], 'cocycle': cocycle.to_dict(), 'params': params}
    report.results = {'kind': cocycle.kind, 'dim': cocycle.dim, 'budget': cocycle.budget, 'eta': config.eta}
    _finish(report, out, None)


@app.command(no_args_is_help=True)
def obstruct(
    spec: SpecOption,
    out: OutOption,
    period_max: PeriodMaxOption = None,
    tol: TolOption = None,
    norm: NormOption = None,
    workers: WorkersOption = None,
    seed: SeedOption = None,
) -> None:
    """
    Test A_p^n = Id at every periodic orbit up to the period budget.
    """
    from pandas import DataFrame

    from .utils.periodic import obstruction_check, summarize

    config, report = _start('obstruct', spec, period_max=period_max, tol_base=tol, norm=norm, workers=workers, seed=seed)
    params = config.params
    with report.timings.stage('obstruct'):
        cocycle, _ = _generator(config)
        reports = obstruction_check(
            cocycle, config.base, params['period_max'], params['tol_base'], params['norm'], params['workers']
        )
    verdict = summarize(reports)
    report.tables['obstruction'] = DataFrame(
        [r.row(params['norm']) for r in reports], columns=CSV_COLUMNS['obstruction']
    )
    counts = {v: sum(r.verdict.value == v for r in reports) for v in ('pass', 'fail', 'inconclusive')}
    deviations = [r.deviation for r in reports if r.error is None]
    report.results = {'orbits': len(reports), 'counts': counts, 'max_deviation': max(deviations, default=0.0)}
    _finish(report, out, verdict)


@app.command(no_args_is_help=True)
def exponents(
    spec: SpecOption,
    out: OutOption,
    seed: SeedOption = None,
    period_max: PeriodMaxOption = None,
    orbit_len: OrbitLenOption = None,
    norm: NormOption = None,
) -> None:
    """
    Estimate the extremal Lyapunov exponents along a random orbit and
    compare them with the periodic data.
    """
    from math import log

    import numpy as np
    from pandas import DataFrame

    from .utils.cocycle import lyapunov_exponents
    from .utils.periodic import Verdict, periodic_exponents

    config, report = _start(
        'exponents', spec, seed=seed, period_max=period_max, orbit_len=orbit_len, norm=norm
    )
    params, base = config.params, config.base
    rng = np.random.default_rng(params['seed'])
    with report.timings.stage('exponents'):
        cocycle, _ = _generator(config)
        x = _start_point(base, rng, params['orbit_len'])
        estimate = lyapunov_exponents(cocycle, base, x, params['orbit_len'], params['norm'])
        periodic = periodic_exponents(cocycle, base, params['period_max'], params['norm'])

    gap = abs(periodic.sup_plus - estimate.lambda_plus)
    verdicts = [Verdict.PASS if gap <= params['kalinin_tol'] else Verdict.INCONCLUSIVE]
    results = {
        'lambda_plus': estimate.lambda_plus,
        'lambda_minus': estimate.lambda_minus,
        'periodic_sup_plus': periodic.sup_plus,
        'periodic_inf_minus': periodic.inf_minus,
        'periodic_gap': gap,
    }
    if cocycle.budget is not None:
        bound = 2 / estimate.n * log(cocycle.budget**2) + 1e-6
        vanishing = max(abs(estimate.lambda_plus), abs(estimate.lambda_minus)) <= bound
        verdicts.append(Verdict.PASS if vanishing else Verdict.FAIL)
        results['telescoping_bound'] = bound
    report.results = results
    report.tables['exponent_checkpoints'] = DataFrame(
        estimate.checkpoints, columns=['n', 'lambda_plus', 'lambda_minus']
    )
    report.tables['periodic_exponents'] = DataFrame(list(periodic.table))
    _finish(report, out, _combine(*verdicts))


@app.command(no_args_is_help=True)
def bunching(spec: SpecOption, out: OutOption, seed: SeedOption = None, norm: NormOption = None) -> None:
    """
    Test membership of random points in the pointwise bunching set
    D(N, θ) with the N, θ and k_max of the spec's params.
    """
    import numpy as np
    from pandas import DataFrame

    from .utils.cocycle import bunching_membership
    from .utils.periodic import Verdict

    config, report = _start('bunching', spec, seed=seed, norm=norm)
    params, base = config.params, config.base
    rng = np.random.default_rng(params['seed'])
    rows = []
    with report.timings.stage('bunching'):
        cocycle, _ = _generator(config)
        for _ in range(params['sample_count']):
            x = base.random_point(rng)
            result = bunching_membership(cocycle, base, x, params['N'], params['theta'], params['k_max'], params['norm'])
            rows.append(
                {
                    'point': str(x),
                    'passed': result.passed,
                    'margin': result.margin,
                    'forward_margin': result.forward_margin,
                    'backward_margin': result.backward_margin,
                }
            )
    fraction = sum(row['passed'] for row in rows) / len(rows)
    report.tables['bunching'] = DataFrame(rows)
    report.results = {
        'fraction': fraction,
        'theta': params['theta'],
        'tau_alpha': base.expansion_rate * cocycle.alpha,
        'theta_below_tau_alpha': params['theta'] < base.expansion_rate * cocycle.alpha,
    }
    _finish(report, out, Verdict.PASS if fraction == 1.0 else Verdict.INCONCLUSIVE)


@app.command(no_args_is_help=True)
def goodtimes(
    spec: SpecOption,
    out: OutOption,
    seed: SeedOption = None,
    orbit_len: OrbitLenOption = None,
    norm: NormOption = None,
) -> None:
    """
    Find the times n along a random orbit where log‖A_x^n‖ and
    log‖(A_x^n)⁻¹‖ are nearly additive over the whole segment.
    """
    import numpy as np
    from pandas import DataFrame

    from .utils.cocycle import good_times, sqrt_eps
    from .utils.periodic import Verdict

    config, report = _start('goodtimes', spec, seed=seed, orbit_len=orbit_len, norm=norm)
    params, base = config.params, config.base
    rng = np.random.default_rng(params['seed'])
    with report.timings.stage('goodtimes'):
        cocycle, _ = _generator(config)
        x = _start_point(base, rng, params['orbit_len'])
        found = good_times(
            cocycle,
            base,
            x,
            params['orbit_len'],
            eps_fn=sqrt_eps(params['goodtimes_eps_scale']),
            which='both',
            norm=params['norm'],
        )
    good = set(found.times)
    report.tables['good_times'] = DataFrame(
        {'n': range(1, found.n_max + 1), 'good': [n in good for n in range(1, found.n_max + 1)]}
    )
    report.results = {
        'count': len(found.times),
        'density': found.density,
        'upper_density': found.upper_density,
        'rates': found.rates,
    }
    _finish(report, out, Verdict.PASS if found.times else Verdict.INCONCLUSIVE)


@app.command(no_args_is_help=True)
def holonomy(
    spec: SpecOption,
    out: OutOption,
    seed: SeedOption = None,
    norm: NormOption = None,
    workers: WorkersOption = None,
) -> None:
    """
    Compute stable and unstable holonomies over random leaf pairs, fit
    their Hölder behaviour and check them against a known transfer map.
    """
    import numpy as np
    from pandas import DataFrame

    from .utils.errors import InsufficientSpread, LivsicError
    from .utils.holonomy import (SIDES, holonomy_batch, holonomy_chain_check,
                                 holonomy_holder_fit, holonomy_row,
                                 leaf_pairs_sample)
    from .utils.operators import op_metric
    from .utils.periodic import Verdict

    config, report = _start('holonomy', spec, seed=seed, norm=norm, workers=workers)
    params, base = config.params, config.base
    tol, cap, norm_ = params['holonomy_tol'], params['holonomy_cap'], params['norm']
    rng = np.random.default_rng(params['seed'])
    cocycle, truth = _generator(config)
    rows, results, verdicts = [], {}, []
    for side in SIDES:
        with report.timings.stage(f'{side}_holonomy'):
            pairs = leaf_pairs_sample(base, side, params['sample_count'], rng)
            outcomes = holonomy_batch(cocycle, base, pairs, side, tol, cap, norm_, params['workers'])
        rows.extend(holonomy_row(base, pair, side, outcome, norm_) for pair, outcome in zip(pairs, outcomes))
        computed = [o for o in outcomes if not isinstance(o, str)]
        summary = {
            'pairs': len(pairs),
            'certified': sum(o.certified for o in computed),
            'errors': len(pairs) - len(computed),
        }
        verdicts.append(Verdict.PASS if summary['certified'] == len(pairs) else Verdict.INCONCLUSIVE)
        try:
            fit = holonomy_holder_fit(computed, base, norm_)
            summary['holder'] = {'alpha': fit.alpha, 'constant': fit.constant, 'residual': fit.residual,
                                 'exact_zero': fit.exact_zero, 'zero_below': fit.zero_below}
        except InsufficientSpread as e:
            summary['holder'] = {'error': str(e)}
        if truth is not None:
            recovery = [op_metric(o.value @ truth(o.y), truth(o.z), norm_) for o in computed if o.certified]
            summary['max_recovery_error'] = max(recovery, default=0.0)
            verdicts.append(Verdict.PASS if summary['max_recovery_error'] <= 10 * tol else Verdict.FAIL)

        defects = []
        with report.timings.stage(f'{side}_chain'):
            for _ in range(min(params['sample_count'], 20)):
                y = base.random_point(rng)
                mid, far = (base.leaf_neighbor(y, side, r, rng) for r in (0.01, 0.05))
                try:
                    defects.append(holonomy_chain_check(cocycle, base, y, mid, far, side, tol, cap, norm_))
                except LivsicError as e:
                    logger.info('Chain check skipped: %s', e)
        summary['max_chain_defect'] = max(defects, default=0.0)
        verdicts.append(Verdict.PASS if summary['max_chain_defect'] <= 10 * tol else Verdict.INCONCLUSIVE)
        results[side] = summary

    report.tables['holonomy'] = DataFrame(rows, columns=CSV_COLUMNS['holonomy'])
    report.results = results
    _finish(report, out, _combine(*verdicts))


def _solve_orbit(cocycle, config, rng, probes, precheck=True):
    from .utils.transfer import solve_orbit_propagation

    params = config.params
    z0 = _start_point(config.base, rng, params['orbit_len'])
    return solve_orbit_propagation(
        cocycle,
        config.base,
        z0,
        params['orbit_len'],
        params['grid_eps'],
        probes,
        precheck=precheck,
        period_max=params['period_max'],
        tol_base=params['tol_base'],
        norm=params['norm'],
    )


def _solve_patch(cocycle, config, rng, x0=None):
    from .utils.transfer import solve_holonomy_extension

    params, base = config.params, config.base
    x0 = base.random_point(rng) if x0 is None else x0
    radius = base.product_structure_radius / 2
    grid = base.probe_points(params['probe_count'], rng, around=x0, radius=radius)
    solution = solve_holonomy_extension(
        cocycle,
        base,
        x0,
        grid,
        tol=params['holonomy_tol'],
        n_cap=params['holonomy_cap'],
        norm=params['norm'],
        workers=params['workers'],
    )
    return solution, grid


@app.command(no_args_is_help=True)
def solve(
    spec: SpecOption,
    out: OutOption,
    method: Annotated[
        SolveMethod, typer.Option('--method', '-m', help='Dense-orbit propagation or holonomy extension over a patch.')
    ] = SolveMethod.orbit_propagation,
    seed: SeedOption = None,
    period_max: PeriodMaxOption = None,
    orbit_len: OrbitLenOption = None,
    grid_eps: GridEpsOption = None,
    tol: TolOption = None,
    norm: NormOption = None,
    workers: WorkersOption = None,
) -> None:
    """
    Solve A(x) = C(fx)C(x)⁻¹ for C and measure the solution. The sampled
    solution is written to transfer_map.json.
    """
    import numpy as np
    from pandas import DataFrame

    from .utils.errors import (InsufficientSpread, NoConvergence,
                               ObstructionFailed, OrbitNotDense)
    from .utils.periodic import Verdict
    from .utils.transfer import (compare_up_to_constant,
                                 holder_exponent_estimate,
                                 interpolation_budget, on_orbit_residual,
                                 residual)

    config, report = _start(
        'solve', spec, seed=seed, period_max=period_max, orbit_len=orbit_len, grid_eps=grid_eps,
        tol_base=tol, norm=norm, workers=workers,
    )
    params, base, norm_ = config.params, config.base, config.params['norm']
    rng = np.random.default_rng(params['seed'])
    cocycle, truth = _generator(config)
    report.results['method'] = method.value

    with report.timings.stage('solve'):
        try:
            if method is SolveMethod.orbit_propagation:
                probes = base.probe_points(params['probe_count'], rng)
                solution = _solve_orbit(cocycle, config, rng, probes)
            else:
                solution, probes = _solve_patch(cocycle, config, rng)
        except ObstructionFailed as e:
            report.results['error'] = str(e)
            _finish(report, out, Verdict.FAIL)
        except (OrbitNotDense, NoConvergence) as e:
            report.results['error'] = str(e)
            _finish(report, out, Verdict.INCONCLUSIVE)

    results, verdicts = report.results, []
    results['samples'] = len(solution)
    results['coverage_radius'] = solution.coverage_radius
    if method is SolveMethod.orbit_propagation:
        with report.timings.stage('residual'):
            on_orbit = on_orbit_residual(cocycle, base, solution)
            probe_residual = residual(cocycle, base, solution, probes)
        results.update({'on_orbit_residual': on_orbit, 'sup_residual': probe_residual.sup,
                        'mean_residual': probe_residual.mean})
        report.tables['residual'] = DataFrame(list(probe_residual.per_probe))
        verdicts.append(Verdict.PASS if on_orbit <= 1e-8 else Verdict.FAIL)
        with report.timings.stage('holder'):
            try:
                fit = holder_exponent_estimate(solution, max(200, 4 * params['probe_count']), rng)
                results['holder'] = {'alpha': fit.alpha, 'constant': fit.constant, 'residual': fit.residual,
                                     'pairs': fit.pairs, 'exact_zero': fit.exact_zero, 'zero_below': fit.zero_below}
            except InsufficientSpread as e:
                results['holder'] = {'error': str(e)}

    if truth is not None:
        with report.timings.stage('truth'):
            budget = interpolation_budget(truth, solution, probes)
            comparison = compare_up_to_constant(solution, truth, probes, norm=norm_)
        bound = comparison.constant.norm(norm_) * comparison.constant.inv_norm(norm_)
        slack = 1e-8 * len(solution) * bound
        results.update({'truth_distance': comparison.sup, 'interpolation_budget': budget})
        verdicts.append(Verdict.PASS if comparison.sup <= bound * budget + slack else Verdict.FAIL)

    report.documents['transfer_map'] = solution.to_dict()
    _finish(report, out, _combine(*verdicts) if verdicts else Verdict.PASS)


@app.command(no_args_is_help=True)
def verify(
    spec: SpecOption,
    out: OutOption,
    seed: SeedOption = None,
    period_max: PeriodMaxOption = None,
    tol: TolOption = None,
    norm: NormOption = None,
) -> None:
    """
    Run the estimates behind the regularity argument on sampled data:
    near-closing deviations, distortion along shadowing orbits, the
    Lyapunov-norm pinching, shadowing norm bounds and the Hölder constant.
    """
    import numpy as np
    from pandas import DataFrame

    from .utils.cocycle import (default_eps, holder_constant,
                                lyapunov_norm_sandwich)
    from .utils.defaults import (DISTORTION_COUNT, NEAR_CLOSING_COUNT,
                                 NEAR_CLOSING_SLOPE_SLACK)
    from .utils.errors import LivsicError
    from .utils.periodic import (Verdict, distortion_batch,
                                 near_closing_batch, shadow_norm_bounds)

    config, report = _start('verify', spec, seed=seed, period_max=period_max, tol_base=tol, norm=norm)
    params, base, norm_ = config.params, config.base, config.params['norm']
    rng = np.random.default_rng(params['seed'])
    cocycle, _ = _generator(config)
    eps = params['eps'] or default_eps(base, cocycle.alpha)
    results, verdicts = {'eps': eps}, []

    with report.timings.stage('near_closing'):
        batch = near_closing_batch(
            cocycle, base, rng, NEAR_CLOSING_COUNT, min(params['period_max'], 6), norm_, tol_base=params['tol_base']
        )
    rows = []
    for r in batch.results:
        closed = r.closed
        bounds = shadow_norm_bounds(cocycle, base, closed.orbit, closed.source, closed.n, eps, norm_)
        rows.append({'period': closed.n, 'orbit_key': closed.orbit.key, 'delta': r.delta, 'deviation': r.deviation,
                     'constant': r.constant, 'c_prime': closed.c_prime, 'shadow_constant': bounds.constant})
    report.tables['near_closing'] = DataFrame(rows)
    slope_verdict = batch.slope_verdict(cocycle.alpha, params['tol_base'])
    results['near_closing'] = {
        'count': len(batch.results),
        'max_constant': batch.max_constant,
        'max_deviation': batch.max_deviation,
        'slope': batch.slope,
        'min_slope': cocycle.alpha - NEAR_CLOSING_SLOPE_SLACK,
        'verdict': slope_verdict,
    }
    verdicts.append(slope_verdict)

    with report.timings.stage('distortion'):
        batches = [
            distortion_batch(cocycle, base, rng, mode, DISTORTION_COUNT, min(params['period_max'], 4),
                             delta=base.closing_radius, norm=norm_)
            for mode in ('symmetric', 'half-rate')
        ]
    report.tables['distortion'] = DataFrame(
        [s.row() for b in batches for s in b.samples],
        columns=['orbit_key', 'period', 'n', 'radius', 'mode', 'norm_ratio', 'inv_ratio', 'within'],
    )
    results['distortion'] = {
        b.mode: {'verified': len(b.samples), 'wanted': b.wanted, 'attempts': b.attempts,
                 'within': sum(s.result.within for s in b.samples), 'verdict': b.verdict}
        for b in batches
    }
    verdicts.extend(b.verdict for b in batches)

    rows = []
    with report.timings.stage('lyapunov_norm'):
        for _ in range(params['sample_count']):
            x, u = base.random_point(rng), rng.standard_normal(cocycle.dim)
            try:
                check = lyapunov_norm_sandwich(cocycle, base, x, u, eps, tail_tol=params['tail_tol'], norm=norm_)
                rows.append({'point': str(x), 'here': check.here, 'image': check.image, 'slack': check.slack,
                             'holds': check.holds, 'error': ''})
            except LivsicError as e:
                rows.append({'point': str(x), 'here': float('nan'), 'image': float('nan'), 'slack': float('nan'),
                             'holds': None, 'error': f'{type(e).__name__}: {e}'})
    report.tables['lyapunov_norm'] = DataFrame(rows)
    held = [row['holds'] for row in rows if row['holds'] is not None]
    results['lyapunov_norm'] = {'checked': len(held), 'holds': sum(held)}
    verdicts.append(Verdict.PASS if all(held) and held else Verdict.INCONCLUSIVE if all(held) else Verdict.FAIL)

    with report.timings.stage('holder_constant'):
        holder = holder_constant(cocycle, base, cocycle.alpha, 4 * params['sample_count'], rng, norm=norm_)
    results['holder_constant'] = {'c0_est': holder.c0_est, 'declared': holder.declared, 'consistent': holder.consistent}
    verdicts.append(Verdict.PASS if holder.consistent else Verdict.INCONCLUSIVE)

    report.results = results
    _finish(report, out, _combine(*verdicts))


@app.command(no_args_is_help=True)
def compare(
    spec: SpecOption,
    out: OutOption,
    seed: SeedOption = None,
    period_max: PeriodMaxOption = None,
    orbit_len: OrbitLenOption = None,
    grid_eps: GridEpsOption = None,
    norm: NormOption = None,
    workers: WorkersOption = None,
) -> None:
    """
    Solve by both methods and compare the solutions up to a constant right
    factor, and against the closed-form transfer map when there is one.
    """
    import numpy as np

    from .utils.cocycle import norm_bound
    from .utils.errors import (NoConvergence, ObstructionFailed,
                               OrbitNotDense)
    from .utils.periodic import Verdict
    from .utils.transfer import compare_up_to_constant, interpolation_budget

    config, report = _start(
        'compare', spec, seed=seed, period_max=period_max, orbit_len=orbit_len, grid_eps=grid_eps,
        norm=norm, workers=workers,
    )
    params, base, norm_ = config.params, config.base, config.params['norm']
    rng = np.random.default_rng(params['seed'])
    cocycle, truth = _generator(config)

    with report.timings.stage('solve'):
        try:
            orbit_solution = _solve_orbit(cocycle, config, rng, base.probe_points(params['probe_count'], rng))
            patch_solution, probes = _solve_patch(cocycle, config, rng)
        except ObstructionFailed as e:
            report.results['error'] = str(e)
            _finish(report, out, Verdict.FAIL)
        except (OrbitNotDense, NoConvergence) as e:
            report.results['error'] = str(e)
            _finish(report, out, Verdict.INCONCLUSIVE)

    with report.timings.stage('compare'):
        between = compare_up_to_constant(patch_solution, orbit_solution, probes, norm=norm_)
    results = {
        'between_methods': between.sup,
        'orbit_coverage_radius': orbit_solution.coverage_radius,
        'patch_coverage_radius': patch_solution.coverage_radius,
    }
    if truth is None:
        report.results = results
        _finish(report, out, Verdict.INCONCLUSIVE)

    with report.timings.stage('truth'):
        # The patch anchor is compared as well
        anchored = [patch_solution.anchor_point, *probes]
        budgets = {
            'orbit': interpolation_budget(truth, orbit_solution, anchored),
            'patch': interpolation_budget(truth, patch_solution, anchored),
        }
        to_truth = {
            'orbit': compare_up_to_constant(orbit_solution, truth, probes, norm=norm_).sup,
            'patch': compare_up_to_constant(patch_solution, truth, probes, norm=norm_).sup,
        }
        scale = norm_bound(config.transfer or cocycle.transfer, base, norm_) ** 3
    slack = 1e-8 * len(orbit_solution) * scale + 10 * params['holonomy_tol'] * scale
    combined = 2 * scale * (budgets['orbit'] + budgets['patch']) + slack
    results.update({'interpolation_budgets': budgets, 'to_truth': to_truth, 'combined_budget': combined})
    report.results = results
    verdicts = [Verdict.PASS if to_truth[m] <= scale * budgets[m] + slack else Verdict.FAIL for m in budgets]
    verdicts.append(Verdict.PASS if between.sup <= combined else Verdict.FAIL)
    _finish(report, out, _combine(*verdicts))


def run() -> None:
    """Console entry point: usage errors exit with status 3 instead of click's 2"""
    import click

    try:
        status = app(standalone_mode=False)
    except click.exceptions.ClickException as e:
        e.show()
        sys.exit(EXIT_CONFIG)
    except click.exceptions.Abort:
        sys.exit(EXIT_CONFIG)
    sys.exit(status or 0)
