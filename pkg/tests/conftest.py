"""Shared fixtures: cached mode tables and a deterministic RNG."""

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dbf import build_basis

settings.register_profile(
    "numerics",
    deadline=None,
    max_examples=25,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("numerics")


@pytest.fixture(scope="session")
def table_k1():
    return build_basis(1)


@pytest.fixture(scope="session")
def table_k2():
    return build_basis(2)


@pytest.fixture(scope="session")
def table_k3():
    return build_basis(3)


@pytest.fixture()
def rng():
    return np.random.default_rng(20260814)
