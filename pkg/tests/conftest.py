import pytest

from perpex import ode
from perpex.closedform import CriticalParams
from perpex.market import MarketParams


def pytest_addoption(parser):
    parser.addoption('--runslow', action='store_true', default=False,
                     help='run the full-size acceptance fixtures')


def pytest_collection_modifyitems(config, items):
    if config.getoption('--runslow'):
        return
    skip_slow = pytest.mark.skip(reason='needs --runslow')
    for item in items:
        if 'slow' in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope='session')
def critical_params():
    """The critical market ``2 mu + sigma^2 = 0`` with unit inventory and price
    """
    return MarketParams(mu=-0.125, sigma=0.5, lambda_impact=1.0)


@pytest.fixture(scope='session')
def critical(critical_params):
    return CriticalParams.from_params(critical_params)


@pytest.fixture(scope='session')
def subcritical_params():
    return MarketParams(mu=-0.3, sigma=0.2, lambda_impact=1.0)


@pytest.fixture(scope='session')
def critical_vf(critical_params):
    """Value function of the critical market solved by collocation
    """
    return ode.integrate_value_ode(critical_params, x_max=50.0, tol=1e-10)


@pytest.fixture(scope='session')
def subcritical_vf(subcritical_params):
    return ode.integrate_value_ode(subcritical_params, x_max=50.0, tol=1e-10)
