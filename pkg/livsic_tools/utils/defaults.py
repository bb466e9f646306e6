DOCUMENTATION = 'https://github.com/TheJacksonLaboratory/livsic-tools/'

# Exit statuses of the `livsic` command
EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_INCONCLUSIVE = 2
EXIT_CONFIG = 3

# Base systems
TORUS_PRODUCT_STRUCTURE_RADIUS = 0.25
SYMBOLIC_PRODUCT_STRUCTURE_RADIUS = 1.0
CLOSING_RADIUS = 0.1
PERIOD_MAX = 12
LEAF_TOL = 1e-10
SYMBOLIC_COORDINATE_DEPTH = 48
SYMBOLIC_INDEX_RADIUS = 24

# Numerics shared by the analysis modules
HOLONOMY_STRIDE = 5
INCONCLUSIVE_FACTOR = 10.0
MIN_HOLDER_PAIRS = 20
MIN_HOLDER_DECADES = 2.0
HOLDER_BINS_PER_DECADE = 4
NORM_SAMPLE_COUNT = 4096
RATIO_BAND = (0.5, 2.0)
NEAR_CLOSING_COUNT = 50
NEAR_RETURN_STRATA = 5
# Fitted near-closing slopes below alpha minus this are inconclusive
NEAR_CLOSING_SLOPE_SLACK = 0.5
DISTORTION_COUNT = 30

DEFAULT_PARAMS = {
    'seed': None,
    'norm': 'inf',
    'period_max': 8,
    'orbit_len': 2000,
    'grid_eps': 0.05,
    'tol_base': 1e-9,
    'eps': None,
    'theta': 0.5,
    'N': 1,
    'k_max': 20,
    'holonomy_tol': 1e-9,
    'holonomy_cap': 400,
    'sample_count': 20,
    'product_structure_radius': None,
    'closing_radius': CLOSING_RADIUS,
    'tail_tol': 1e-8,
    'probe_count': 64,
    'goodtimes_eps_scale': 0.5,
    'kalinin_tol': 0.05,
    'workers': 1,
}
COMMANDS = (
    'synth',
    'obstruct',
    'exponents',
    'bunching',
    'goodtimes',
    'holonomy',
    'solve',
    'verify',
    'compare',
)
# Commands that draw random points and so need a seed
RANDOMIZED_COMMANDS = {'synth', 'exponents', 'bunching', 'goodtimes', 'holonomy', 'solve', 'verify', 'compare'}

REPORT_FILENAME = 'report.json'
TIMINGS_FILENAME = 'timings.json'
CSV_COLUMNS = {
    'obstruction': ['period', 'orbit_key', 'deviation', 'tolerance', 'verdict', 'log_norm', 'log_inv_norm', 'error'],
    'holonomy': ['y', 'z', 'side', 'iterations', 'cauchy_gap', 'norm_H_minus_Id', 'certified', 'error'],
}

_schema_draft_version = 'https://json-schema.org/draft/2020-12/schema'
_matrix = {
    'type': 'array',
    'minItems': 1,
    'items': {'type': 'array', 'minItems': 1, 'items': {'type': 'number'}},
}
_trig_terms = {
    'type': 'array',
    'items': {
        'type': 'object',
        'properties': {
            'coef': _matrix,
            'freq': {'type': 'array', 'minItems': 2, 'maxItems': 2, 'items': {'type': 'integer'}},
            'phase': {'type': 'number'},
        },
        'required': ['coef', 'freq'],
        'additionalProperties': False,
    },
}
_generator_common = {
    'dim': {'type': 'integer', 'minimum': 1},
    'alpha': {'type': 'number', 'exclusiveMinimum': 0, 'maximum': 1},
    'c0': {'oneOf': [{'type': 'number', 'minimum': 0}, {'const': 'auto'}]},
    'budget': {'type': 'number', 'minimum': 1},
}
SPEC_SCHEMA = {
    '$schema': _schema_draft_version,
    'type': 'object',
    'properties': {
        'base': {
            'oneOf': [
                {
                    'type': 'object',
                    'properties': {
                        'type': {'const': 'toral'},
                        'matrix': {
                            'type': 'array',
                            'minItems': 2,
                            'maxItems': 2,
                            'items': {
                                'type': 'array',
                                'minItems': 2,
                                'maxItems': 2,
                                'items': {'type': 'integer'},
                            },
                        },
                    },
                    'required': ['type', 'matrix'],
                    'additionalProperties': False,
                },
                {
                    'type': 'object',
                    'properties': {
                        'type': {'const': 'sft'},
                        'adjacency': {
                            'type': 'array',
                            'minItems': 1,
                            'items': {
                                'type': 'array',
                                'minItems': 1,
                                'items': {'enum': [0, 1, True, False]},
                            },
                        },
                        'metric_base': {'type': 'number', 'exclusiveMinimum': 0, 'exclusiveMaximum': 1},
                        'mixing': {'type': 'boolean'},
                    },
                    'required': ['type', 'adjacency'],
                    'additionalProperties': False,
                },
            ]
        },
        'cocycle': {'$ref': '#/$defs/generator'},
        'transfer': {'$ref': '#/$defs/generator'},
        'params': {
            'type': 'object',
            'properties': {
                'seed': {'type': ['integer', 'null'], 'minimum': 0},
                'norm': {'enum': ['inf', 'two']},
                'period_max': {'type': 'integer', 'minimum': 1},
                'orbit_len': {'type': 'integer', 'minimum': 1},
                'grid_eps': {'type': 'number', 'exclusiveMinimum': 0},
                'tol_base': {'type': 'number', 'exclusiveMinimum': 0},
                'eps': {'type': ['number', 'null'], 'exclusiveMinimum': 0},
                'theta': {'type': 'number', 'exclusiveMinimum': 0},
                'N': {'type': 'integer', 'minimum': 1},
                'k_max': {'type': 'integer', 'minimum': 1},
                'holonomy_tol': {'type': 'number', 'exclusiveMinimum': 0},
                'holonomy_cap': {'type': 'integer', 'minimum': 1},
                'sample_count': {'type': 'integer', 'minimum': 1},
                'product_structure_radius': {'type': ['number', 'null'], 'exclusiveMinimum': 0},
                'closing_radius': {'type': 'number', 'exclusiveMinimum': 0},
                'tail_tol': {'type': 'number', 'exclusiveMinimum': 0},
                'probe_count': {'type': 'integer', 'minimum': 1},
                'goodtimes_eps_scale': {'type': 'number', 'minimum': 0},
                'kalinin_tol': {'type': 'number', 'exclusiveMinimum': 0},
                'workers': {'type': 'integer', 'minimum': 1},
            },
            'additionalProperties': False,
        },
        'perturb': {
            'type': 'object',
            'properties': {'eta': {'type': 'number', 'minimum': 0}},
            'required': ['eta'],
            'additionalProperties': False,
        },
    },
    'required': ['base'],
    'oneOf': [{'required': ['cocycle']}, {'required': ['transfer']}],
    'additionalProperties': False,
    '$defs': {
        'generator': {
            'oneOf': [
                {
                    'type': 'object',
                    'properties': {'kind': {'const': 'constant'}, 'matrix': _matrix, **_generator_common},
                    'required': ['kind', 'matrix'],
                    'additionalProperties': False,
                },
                {
                    'type': 'object',
                    'properties': {'kind': {'const': 'exp_trig'}, 'terms': _trig_terms, **_generator_common},
                    'required': ['kind', 'dim', 'terms'],
                    'additionalProperties': False,
                },
                {
                    'type': 'object',
                    'properties': {
                        'kind': {'const': 'locally_constant'},
                        'window': {'type': 'integer', 'minimum': 1},
                        'table': {'type': 'object', 'additionalProperties': _matrix},
                        **_generator_common,
                    },
                    'required': ['kind', 'window', 'table'],
                    'additionalProperties': False,
                },
                {
                    'type': 'object',
                    'properties': {
                        'kind': {'const': 'coboundary_of'},
                        'transfer': {'$ref': '#/$defs/generator'},
                        **_generator_common,
                    },
                    'required': ['kind', 'transfer'],
                    'additionalProperties': False,
                },
                {
                    'type': 'object',
                    'properties': {
                        'kind': {'const': 'perturbed'},
                        'inner': {'$ref': '#/$defs/generator'},
                        'terms': _trig_terms,
                        'eta': {'type': 'number', 'minimum': 0},
                        **_generator_common,
                    },
                    'required': ['kind', 'inner', 'terms'],
                    'additionalProperties': False,
                },
            ]
        }
    },
}
