import json
import logging
from collections.abc import Callable, Iterable
from concurrent.futures import ProcessPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from enum import Enum
from math import isinf, isnan
from pathlib import Path
from time import perf_counter

import numpy as np
from pandas import DataFrame

from .defaults import REPORT_FILENAME, TIMINGS_FILENAME

logger = logging.getLogger(__name__)


def parallel_map(fn: Callable, items: Iterable, workers: int = 1) -> list:
    """`[fn(item) for item in items]`, spread over `workers` processes when above 1

    Results come back in input order whatever the worker count.
    """
    items = list(items)
    if workers <= 1 or len(items) < 2:
        return [fn(item) for item in items]
    chunksize = max(1, len(items) // (4 * workers))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=chunksize))


def jsonable(obj):
    """Plain Python data for `json.dumps`

    numpy scalars and arrays become Python numbers and lists, enums their
    values, non-finite floats the strings "nan", "inf" and "-inf", and
    anything else unknown its `str`.
    """
    match obj:
        case Enum():
            return jsonable(obj.value)
        case None | bool() | str():
            return obj
        case np.bool_():
            return bool(obj)
        case int() | np.integer():
            return int(obj)
        case float() | np.floating():
            value = float(obj)
            if isnan(value):
                return 'nan'
            if isinf(value):
                return 'inf' if value > 0 else '-inf'
            return value
        case dict():
            return {str(k): jsonable(v) for k, v in obj.items()}
        case list() | tuple() | np.ndarray():
            return [jsonable(v) for v in obj]
        case _:
            return str(obj)


def dumps(obj, indent: int = 2) -> str:
    """Strict JSON text of `obj` with its key order kept

    Floats are written as their shortest round-tripping repr, so equal
    inputs give equal bytes.
    """
    return json.dumps(jsonable(obj), indent=indent, ensure_ascii=False, allow_nan=False)


class Stopwatch:
    """Wall time per named stage"""

    def __init__(self):
        self.stages: dict[str, float] = {}

    @contextmanager
    def stage(self, name: str):
        start = perf_counter()
        try:
            yield
        finally:
            self.stages[name] = self.stages.get(name, 0.0) + perf_counter() - start


@dataclass
class Report:
    """Everything one command produces

    `results` and `tables` go to `report.json` and one CSV per table; the
    wall times in `timings` go to a separate `timings.json` so that the
    report bytes depend only on config and seed.
    """

    command: str
    version: str
    config: dict
    results: dict = field(default_factory=dict)
    tables: dict[str, DataFrame] = field(default_factory=dict)
    documents: dict[str, dict] = field(default_factory=dict)
    verdict: str | None = None
    status: int = 0
    timings: Stopwatch = field(default_factory=Stopwatch)

    def to_dict(self) -> dict:
        return {
            'command': self.command,
            'version': self.version,
            'config': self.config,
            'verdict': self.verdict,
            'status': self.status,
            'results': self.results,
            'tables': {name: f'{name}.csv' for name in self.tables},
            'documents': {name: f'{name}.json' for name in self.documents},
        }

    def write(self, out_dir: Path) -> list[Path]:
        out_dir.mkdir(parents=True, exist_ok=True)
        written = [out_dir / REPORT_FILENAME]
        written[0].write_text(dumps(self.to_dict()) + '\n', encoding='utf-8')
        for name, table in self.tables.items():
            path = out_dir / f'{name}.csv'
            table.to_csv(path, index=False, float_format='%.17g')
            written.append(path)
        for name, document in self.documents.items():
            path = out_dir / f'{name}.json'
            path.write_text(dumps(document) + '\n', encoding='utf-8')
            written.append(path)
        timings = out_dir / TIMINGS_FILENAME
        timings.write_text(dumps(self.timings.stages) + '\n', encoding='utf-8')
        written.append(timings)
        logger.info('Wrote %s', ', '.join(p.name for p in written))
        return written
