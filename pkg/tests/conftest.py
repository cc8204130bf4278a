import pytest

from uvoc_tsa.params import SystemParams


@pytest.fixture(scope="session")
def params():
    return SystemParams()
