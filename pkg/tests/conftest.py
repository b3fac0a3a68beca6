import pathlib

import pytest

from kel import new_kernel, stationary_measure

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"


@pytest.fixture
def two_state():
    k = new_kernel([[0.7, 0.3], [0.4, 0.6]])
    return k, stationary_measure(k)


@pytest.fixture
def block4():
    k = new_kernel(
        [
            [0.0, 0.0, 0.5, 0.5],
            [0.0, 0.0, 0.5, 0.5],
            [0.5, 0.5, 0.0, 0.0],
            [0.5, 0.5, 0.0, 0.0],
        ]
    )
    return k, stationary_measure(k)


@pytest.fixture
def fixtures_dir():
    return FIXTURES
