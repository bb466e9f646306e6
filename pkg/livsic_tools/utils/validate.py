import logging
from dataclasses import dataclass, field
from pathlib import Path

from rich import print as rprint
from rich.markup import escape
from typer import Exit

from .defaults import (DEFAULT_PARAMS, DOCUMENTATION, EXIT_CONFIG,
                       RANDOMIZED_COMMANDS, SPEC_SCHEMA)
from .errors import ConfigError, LivsicError

logger = logging.getLogger(__name__)


@dataclass
class ExperimentConfig:
    """A validated spec file with its parameters merged

    `base`, `cocycle` and `transfer` are the constructed objects; `source`
    keeps the blocks as written so that `echo` can reproduce the run.
    """

    base: object
    cocycle: object | None
    transfer: object | None
    params: dict
    source: dict = field(repr=False)
    eta: float = 0.0

    def echo(self) -> dict:
        """The spec file that re-runs this experiment exactly"""
        echoed = {'base': self.source['base']}
        for key in ('cocycle', 'transfer', 'perturb'):
            if key in self.source:
                echoed[key] = self.source[key]
        # Reports must not depend on the worker count
        echoed['params'] = {key: value for key, value in self.params.items() if key != 'workers'}
        return echoed


def load_spec(path: Path) -> dict:
    """Read a JSON or YAML spec file

    :raises ConfigError: If the file is missing or does not parse to a mapping
    """
    from yaml import YAMLError, safe_load

    if not path.is_file():
        raise ConfigError(f'Spec file {path} does not exist')
    try:
        spec = safe_load(path.read_text(encoding='utf-8'))
    except (YAMLError, UnicodeDecodeError) as e:
        raise ConfigError(f'{path} is not valid JSON or YAML.\n{e}') from e
    if not isinstance(spec, dict):
        raise ConfigError(f'{path} must contain a mapping at the top level')
    return spec


def schema(spec: dict) -> None:
    """Validate the structure of a spec against `SPEC_SCHEMA`

    :raises ConfigError: On the most relevant schema violation
    """
    from jsonschema import Draft202012Validator
    from jsonschema.exceptions import best_match

    error = best_match(Draft202012Validator(SPEC_SCHEMA).iter_errors(spec))
    if error is not None:
        location = '/'.join(str(p) for p in error.absolute_path) or '<top level>'
        raise ConfigError(f'Invalid spec at {location}: {error.message}')


def merge_params(file_params: dict, overrides: dict) -> dict:
    """Defaults, then the spec file's `params`, then command-line overrides that were given"""
    params = dict(DEFAULT_PARAMS)
    params.update(file_params)
    params.update({key: value for key, value in overrides.items() if value is not None})
    return params


def table_coverage(cocycle, base) -> None:
    """Every admissible window of a symbolic base must have a table entry

    :raises ConfigError: For a locally constant generator over a torus or with missing windows
    """
    children = [c for c in (cocycle.transfer, cocycle.inner) if c is not None]
    for child in children:
        table_coverage(child, base)
    if cocycle.kind != 'locally_constant':
        return
    if base.kind != 'sft':
        raise ConfigError('Locally constant generators need a symbolic (sft) base')
    missing = [w for w in base.admissible_words(cocycle.window) if w not in cocycle.table]
    if missing:
        shown = ', '.join(''.join(map(str, w)) for w in missing[:10])
        raise ConfigError(f'Locally constant table is missing {len(missing)} admissible windows: {shown}')


def content(spec: dict, overrides: dict):
    """Build the base and generators of a schema-valid spec and merge its parameters

    :raises ConfigError: If the base or a generator cannot be constructed
    """
    from .cocycle import CocycleSpec
    from .dynamics import base_from_dict

    params = merge_params(spec.get('params', {}), overrides)
    try:
        base = base_from_dict(
            spec['base'],
            product_structure_radius=params['product_structure_radius'],
            closing_radius=params['closing_radius'],
            period_max=params['period_max'],
        )
        generators = {
            key: CocycleSpec.from_dict(spec[key]) if key in spec else None for key in ('cocycle', 'transfer')
        }
    except (LivsicError, ValueError, KeyError) as e:
        raise ConfigError(f'{type(e).__name__}: {e}') from e
    for generator in generators.values():
        if generator is not None:
            table_coverage(generator, base)
    return ExperimentConfig(
        base=base,
        cocycle=generators['cocycle'],
        transfer=generators['transfer'],
        params=params,
        source=spec,
        eta=float(spec.get('perturb', {}).get('eta', 0.0)),
    )


def spec_file(path: Path, command: str, overrides: dict) -> ExperimentConfig:
    """Load, validate and construct an experiment, exiting with status 3 on any problem

    :param path: The spec file
    :type path: `Path`
    :param command: The command about to run, which decides whether a seed is required
    :type command: `str`
    :param overrides: Command-line parameter values, `None` where not given
    :type overrides: `dict`
    :raises Exit: With status 3 after printing what is wrong
    :return: The validated experiment
    :rtype: `ExperimentConfig`
    """
    try:
        spec = load_spec(path)
        schema(spec)
        config = content(spec, overrides)
        if command in RANDOMIZED_COMMANDS and config.params['seed'] is None:
            raise ConfigError(f'The {command} command draws random points; give a seed with --seed or params.seed')
        if command == 'synth' and config.transfer is None:
            raise ConfigError('synth needs a transfer block')
    except ConfigError as e:
        rprint(
            f'[green]{path}[/] cannot be used for [bright_cyan]{command}[/].',
            escape(str(e)),
            f'See {DOCUMENTATION} for the spec file format.',
            sep='\n\n',
        )
        raise Exit(EXIT_CONFIG)
    return config
