from pathlib import Path

import numpy as np
import pytest

from livsic_tools.utils.dynamics import SFT, ToralAutomorphism


@pytest.fixture(scope='session', autouse=True)
def dirs() -> dict[str, Path]:
    working_dir = Path(__file__).parent.absolute()
    return {
        path.name: path.absolute() for path in working_dir.iterdir() if path.is_dir()
    }


@pytest.fixture(scope='session')
def specs(dirs) -> dict[str, Path]:
    return {path.stem: path for path in dirs['data'].glob('*.json')}


@pytest.fixture(scope='session')
def cat_map() -> ToralAutomorphism:
    return ToralAutomorphism(matrix=((2, 1), (1, 1)))


@pytest.fixture(scope='session')
def full_shift() -> SFT:
    return SFT(adjacency=((1, 1), (1, 1)))


@pytest.fixture(scope='session')
def golden_mean() -> SFT:
    return SFT(adjacency=((1, 1), (1, 0)))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(2024)
