version_info = (0, 1, 0)
__version__ = '.'.join(map(str, version_info))

from .market import MarketParams, PricePath, Regime, regime, simulate_gbm
from .ode import ValueFunction, integrate_value_ode, series_init, g_prime_at, g_at, value_of, validate
from .closedform import CriticalParams, h_ratio, g_critical, optimal_rate_critical
from .strategy import (OptimalFeedback, ExponentialRate, ConstantRate, Custom, simulate_execution,
                       supermartingale_diagnostic)
from .montecarlo import estimate_value, compare_policies
from .oracle import march_hjb, policy_from_grid
