"""
Shared fixtures for the test suites
"""

from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from services.funcspace import GridFunction
from services.modulus import BernsteinSpec, Modulus

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


@pytest.fixture
def psi_half() -> Modulus:
    return Modulus.power(0.5)


@pytest.fixture
def stable_half() -> BernsteinSpec:
    return BernsteinSpec.stable(0.5)


@pytest.fixture
def stable_04() -> BernsteinSpec:
    return BernsteinSpec.stable(0.4)


@pytest.fixture
def stable_log() -> BernsteinSpec:
    return BernsteinSpec.stable_log(0.3, 0.4)


@pytest.fixture
def cos_1024() -> GridFunction:
    return GridFunction.from_callable(np.cos, 1024)


@pytest.fixture
def cos_2d() -> GridFunction:
    return GridFunction.from_callable(lambda x1, x2: np.cos(x1) * np.cos(x2), 64, dim=2)


@pytest.fixture
def config_dir() -> Path:
    return Path(__file__).resolve().parent.parent / "configs"
