from pytest import mark, raises
from typer import Exit

from livsic_tools.utils import validate
from livsic_tools.utils.defaults import DEFAULT_PARAMS, EXIT_CONFIG
from livsic_tools.utils.errors import ConfigError

cat = {'type': 'toral', 'matrix': [[2, 1], [1, 1]]}
golden = {'type': 'sft', 'adjacency': [[1, 1], [1, 0]]}
identity = {'kind': 'constant', 'matrix': [[1, 0], [0, 1]]}


def test_load_spec_reads_yaml_and_json(tmp_path, specs):
    yaml_path = tmp_path / 'spec.yml'
    yaml_path.write_text('base:\n  type: toral\n  matrix: [[2, 1], [1, 1]]\ncocycle:\n  kind: constant\n  matrix: [[1, 0], [0, 1]]\n')
    assert validate.load_spec(yaml_path) == {'base': cat, 'cocycle': identity}
    assert validate.load_spec(specs['diag'])['cocycle']['matrix'] == [[2, 0], [0, 0.5]]


def test_load_spec_rejects(tmp_path):
    with raises(ConfigError):
        validate.load_spec(tmp_path / 'missing.json')

    listed = tmp_path / 'list.json'
    listed.write_text('[1, 2, 3]')
    with raises(ConfigError):
        validate.load_spec(listed)

    broken = tmp_path / 'broken.json'
    broken.write_text('{"base": [}')
    with raises(ConfigError):
        validate.load_spec(broken)


@mark.parametrize(
    argnames='spec',
    argvalues=[
        {'cocycle': identity},
        {'base': cat},
        {'base': cat, 'cocycle': identity, 'transfer': identity},
        {'base': cat, 'cocycle': identity, 'colour': 'blue'},
        {'base': {'type': 'toral', 'matrix': [[2, 1], [1, 1.5]]}, 'cocycle': identity},
        {'base': cat, 'cocycle': {'kind': 'spline', 'dim': 2}},
        {'base': cat, 'cocycle': identity, 'params': {'period_max': 0}},
        {'base': cat, 'cocycle': identity, 'params': {'colour': 'blue'}},
        {'base': cat, 'cocycle': identity, 'perturb': {'eta': -0.1}},
    ],
)
def test_schema_rejects(spec):
    with raises(ConfigError):
        validate.schema(spec)


def test_schema_accepts_every_test_spec(specs):
    for name, path in specs.items():
        if name == 'malformed':
            with raises(ConfigError):
                validate.schema(validate.load_spec(path))
        else:
            validate.schema(validate.load_spec(path))


def test_merge_params_precedence():
    params = validate.merge_params({'seed': 5, 'period_max': 3}, {'period_max': 6, 'tol_base': None})
    assert params['seed'] == 5
    assert params['period_max'] == 6
    assert params['tol_base'] == DEFAULT_PARAMS['tol_base']
    assert set(params) == set(DEFAULT_PARAMS)


def test_content_builds_the_experiment():
    spec = {'base': cat, 'cocycle': identity, 'params': {'seed': 1}}
    config = validate.content(spec, {'product_structure_radius': 0.2})
    assert config.base.kind == 'toral'
    assert config.base.product_structure_radius == 0.2
    assert config.cocycle.kind == 'constant'
    assert config.transfer is None
    assert config.eta == 0.0
    params = {key: value for key, value in config.params.items() if key != 'workers'}
    assert config.echo() == {'base': cat, 'cocycle': identity, 'params': params}


@mark.parametrize(
    argnames='spec',
    argvalues=[
        {'base': {'type': 'toral', 'matrix': [[1, 1], [0, 1]]}, 'cocycle': identity},
        {'base': cat, 'cocycle': {'kind': 'locally_constant', 'window': 1, 'table': {'0': [[1]]}}},
        {'base': golden, 'cocycle': {'kind': 'locally_constant', 'window': 1, 'table': {'0': [[1]]}}},
        {'base': golden, 'cocycle': {'kind': 'constant', 'dim': 3, 'matrix': [[1, 0], [0, 1]]}},
    ],
)
def test_content_rejects(spec):
    with raises(ConfigError):
        validate.content(spec, {})


def test_table_coverage_checks_nested_generators():
    from livsic_tools.utils.cocycle import CocycleSpec

    table = {'kind': 'locally_constant', 'window': 1, 'table': {'0': [[1]], '1': [[2]]}}
    config = validate.content({'base': golden, 'cocycle': table}, {})
    wrapped = {'kind': 'coboundary_of', 'transfer': {**table, 'table': {'0': [[1]]}}}
    with raises(ConfigError):
        validate.table_coverage(CocycleSpec.from_dict(wrapped), config.base)


def test_spec_file(specs):
    config = validate.spec_file(specs['cat_unipotent'], 'solve', {})
    assert config.params['seed'] == 11
    assert config.transfer is not None
    assert validate.spec_file(specs['diag'], 'obstruct', {}).params['seed'] is None
    assert validate.spec_file(specs['diag'], 'solve', {'seed': 3}).params['seed'] == 3
    assert validate.spec_file(specs['perturbed'], 'obstruct', {}).eta == 0.1


@mark.parametrize(
    argnames=['name', 'command'],
    argvalues=[('malformed', 'obstruct'), ('diag', 'solve'), ('diag', 'holonomy'), ('rotation', 'synth')],
)
def test_spec_file_exits_with_config_status(specs, name, command):
    with raises(Exit) as exit_info:
        validate.spec_file(specs[name], command, {'seed': 1} if command == 'synth' else {})
    assert exit_info.value.exit_code == EXIT_CONFIG


def test_spec_file_missing(tmp_path):
    with raises(Exit) as exit_info:
        validate.spec_file(tmp_path / 'nothing.json', 'obstruct', {})
    assert exit_info.value.exit_code == EXIT_CONFIG
