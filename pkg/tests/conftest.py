import pytest
from hypothesis import HealthCheck, settings

from churnforge.synthetic import SyntheticSpec, simulate

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_data():
    spec = SyntheticSpec(n_customers=600)
    return spec, simulate(spec, 7)


@pytest.fixture(scope="session")
def default_data():
    """The default 10k-customer synthetic data at seed 7."""
    spec = SyntheticSpec()
    return spec, simulate(spec, 7)
