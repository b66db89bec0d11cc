"""Shared fixtures: the two bundled configuration spaces."""

import pytest

from heterotune import bundled_space


@pytest.fixture(scope="session")
def ida():
    return bundled_space("ida")


@pytest.fixture(scope="session")
def emil():
    return bundled_space("emil")
