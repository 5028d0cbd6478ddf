import pytest

from heomlab import bathkit


@pytest.fixture(scope="session")
def tier0_spec():
    return bathkit.tier_spec(0)


@pytest.fixture(scope="session")
def tier0_fit(tier0_spec):
    # deterministic; shared because the matrix-pencil polish takes ~15 s
    return bathkit.fit_exponential_bath(tier0_spec)
