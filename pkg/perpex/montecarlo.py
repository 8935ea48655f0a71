"""Monte Carlo estimation of execution values

Paths are simulated in blocks of consecutive streams. Each block is a work item on a
:class:`~perpex.pool.WorkerPool`; block results are reduced in stream order, so the number of
workers never changes a result. With antithetic sampling stream ``k`` yields the pair
``(Z, -Z)`` and standard errors are computed from pair means.

The infinite horizon is truncated at ``T``. For ``mu < 0`` the revenue still to come after ``T``
is at most ``Phi0 S0 exp(mu T)`` in expectation; that bound is reported with every estimate.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import const
from .closedform import CriticalParams, value_critical
from .exceptions import InvalidInputError
from .market import Regime, regime, simulate_gbm_paths, uniform_grid
from .ode import ValueFunction, value_of
from .pool import WorkerPool
from .strategy import ExponentialRate, OptimalFeedback, execute_paths, shadow_price
from .util import io
from .util.decorators import logged

__all__ = ['MCEstimate', 'ComparisonRow', 'ComparisonTable', 'MartingaleCheck', 'DriftCheck',
           'SupermartingaleProfile', 'estimate_value', 'compare_policies', 'default_horizon',
           'tail_bound', 'reference_value', 'martingale_check', 'positive_drift_check',
           'supermartingale_profile']

log = logging.getLogger('perpex')

DIVERGENCE_WARNING = 'value diverges for positive drift: the estimate grows with the horizon'


def tail_bound(params, horizon):
    """``Phi0 S0 exp(mu T)`` for ``mu < 0``, ``inf`` otherwise"""
    if regime(params).regime is not Regime.NegativeDrift:
        return math.inf
    return params.phi0 * params.s0 * math.exp(params.mu * horizon)


def reference_value(params, source):
    """``S0^2 g(Phi0/S0)`` from a value function or the closed form"""
    if isinstance(source, ValueFunction):
        return value_of(source, params.phi0, params.s0)
    if isinstance(source, CriticalParams):
        return value_critical(params.phi0, params.s0, source)
    raise InvalidInputError('no value function to take a reference value from')


def default_horizon(params, value):
    """Horizon at which the tail bound is :data:`~perpex.const.TAIL_FRACTION` of `value`

    ``T = ln(TAIL_FRACTION value / (Phi0 S0)) / mu``
    """
    if regime(params).regime is not Regime.NegativeDrift:
        raise InvalidInputError('the tail rule needs mu < 0; give the horizon explicitly')
    if not value > 0 or params.phi0 == 0:
        raise InvalidInputError('the tail rule needs a positive value and inventory')
    return math.log(const.TAIL_FRACTION * value / (params.phi0 * params.s0)) / params.mu


@dataclass(frozen=True, eq=False)
class MCEstimate:
    mean: float
    std_error: float
    ci95: tuple
    n_paths: int
    horizon: float
    tail_bound: float
    seed: int
    policy: str
    params: dict = None
    warning: str = None
    values: np.ndarray = field(default=None, repr=False)

    def to_dict(self):
        return {'params': self.params, 'policy': self.policy, 'mean': self.mean,
                'se': self.std_error, 'ci95': list(self.ci95), 'n_paths': self.n_paths,
                'T': self.horizon, 'tail_bound': self.tail_bound, 'seed': self.seed,
                'warning': self.warning}

    def to_json(self, path):
        io.write_json(path, self.to_dict())


def _stream_blocks(n_paths, antithetic, block):
    per_stream = 2 if antithetic else 1
    if n_paths < 2:
        raise InvalidInputError('n_paths must be >= 2')
    if antithetic and n_paths % 2:
        raise InvalidInputError('n_paths must be even with antithetic sampling')
    n_streams = n_paths // per_stream
    step = max(1, block // per_stream)
    return [range(start, min(start + step, n_streams)) for start in range(0, n_streams, step)]


def _sample_means(values, antithetic):
    """Per-sample values whose spread gives the standard error: pair means when antithetic"""
    if antithetic:
        return 0.5 * (values[0::2] + values[1::2])
    return values


def _mean_se(values, antithetic):
    samples = _sample_means(values, antithetic)
    mean = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / math.sqrt(len(samples)))
    return mean, se


def _check_horizon(horizon, n_steps, substeps):
    if not (horizon > 0 and math.isfinite(horizon)):
        raise InvalidInputError('horizon must be > 0')
    if n_steps < 1 or substeps < 1:
        raise InvalidInputError('n_steps and substeps must be >= 1')


def _resolve_horizon(params, policy, horizon):
    if horizon is not None:
        return float(horizon)
    if isinstance(policy, OptimalFeedback):
        return default_horizon(params, reference_value(params, policy.source))
    raise InvalidInputError('horizon is required unless the policy is the optimal feedback')


class _Block:
    """Work item: simulate one block of streams and run every policy on it"""

    def __init__(self, params, times, seed, antithetic, policies, substeps, drift, m_source=None):
        self.params = params
        self.times = times
        self.seed = seed
        self.antithetic = antithetic
        self.policies = policies
        self.substeps = substeps
        self.drift = drift
        self.m_source = m_source

    def __call__(self, streams):
        prices = simulate_gbm_paths(self.params, self.times, self.seed, streams,
                                    antithetic=self.antithetic)
        out = []
        for policy in self.policies:
            batch = execute_paths(policy, self.times, prices, self.params.phi0,
                                  self.params.lambda_impact, substeps=self.substeps,
                                  drift=self.drift, record=self.m_source is not None)
            item = {'v': batch.v_realized, 'revenue': batch.revenue_cum[:, -1],
                    'impact': batch.impact_cost_cum[:, -1]}
            if self.m_source is not None:
                m = shadow_price(self.m_source, prices, batch.inventory)
                samples = _sample_means(m, self.antithetic)
                item['m_sum'] = samples.sum(axis=0)
                item['m_sumsq'] = (samples ** 2).sum(axis=0)
                item['m_count'] = samples.shape[0]
            out.append(item)
        return out


def _run_blocks(params, policies, n_paths, horizon, n_steps, substeps, seed, antithetic,
                block, workers, drift_compensation, m_source=None):
    _check_horizon(horizon, n_steps, substeps)
    times = uniform_grid(horizon, n_steps)
    blocks = _stream_blocks(n_paths, antithetic, block)
    drift = params.mu if drift_compensation else 0.0
    job = _Block(params, times, seed, antithetic, policies, substeps, drift, m_source)
    with WorkerPool(workers) as pool:
        results = pool.starmap(job, [(streams,) for streams in blocks])
    log.debug('simulated {} paths in {} blocks'.format(n_paths, len(blocks)))
    merged = []
    for i in range(len(policies)):
        parts = [r[i] for r in results]
        item = {key: np.concatenate([p[key] for p in parts]) for key in ('v', 'revenue', 'impact')}
        if m_source is not None:
            for key in ('m_sum', 'm_sumsq', 'm_count'):
                total = parts[0][key]
                for p in parts[1:]:
                    total = total + p[key]
                item[key] = total
        merged.append(item)
    return times, merged


def _estimate(params, policy, values, horizon, seed, antithetic):
    mean, se = _mean_se(values, antithetic)
    warning = None
    if regime(params).regime is Regime.PositiveDrift:
        warning = DIVERGENCE_WARNING
        log.warning('{}: {}'.format(policy.name, warning))
    return MCEstimate(mean=mean, std_error=se, ci95=(mean - const.Z95 * se, mean + const.Z95 * se),
                      n_paths=len(values), horizon=horizon, tail_bound=tail_bound(params, horizon),
                      seed=seed, policy=policy.name, params=params.to_dict(), warning=warning,
                      values=values)


@logged
def estimate_value(params, policy, n_paths=const.MC_PATHS, horizon=None, n_steps=const.MC_STEPS,
                   substeps=const.MC_SUBSTEPS, seed=0, antithetic=True, block=const.MC_BLOCK,
                   workers=None, drift_compensation=True):
    """Estimate ``E[V]`` of `policy` truncated at `horizon`

    :param MarketParams params: market, including ``s0`` and ``phi0``
    :param Policy policy: policy to evaluate
    :param int n_paths: number of paths (even with antithetic sampling)
    :param float horizon: truncation time; the tail rule of :func:`default_horizon` for the
        optimal policy when omitted
    :param int n_steps: price intervals on ``[0, horizon]``
    :param int substeps: inventory steps per price interval
    :param int seed: global seed
    :param bool antithetic: sample ``(Z, -Z)`` pairs
    :param int block: paths per work item
    :param int workers: pool size
    :param bool drift_compensation: carry the drift inside price intervals
    :rtype: MCEstimate
    """
    policy.check(params)
    horizon = _resolve_horizon(params, policy, horizon)
    _, merged = _run_blocks(params, [policy], n_paths, horizon, n_steps, substeps, seed,
                            antithetic, block, workers, drift_compensation)
    return _estimate(params, policy, merged[0]['v'], horizon, seed, antithetic)


@dataclass(frozen=True)
class ComparisonRow:
    policy: str
    mean: float
    se: float
    diff: float
    se_diff: float


@dataclass(frozen=True)
class ComparisonTable:
    rows: tuple
    n_paths: int
    horizon: float
    tail_bound: float
    seed: int

    def to_csv(self, path):
        io.write_csv(path, ['policy', 'mean', 'se', 'diff', 'se_diff'], [
            np.array([r.policy for r in self.rows], dtype=object),
            [r.mean for r in self.rows], [r.se for r in self.rows],
            [r.diff for r in self.rows], [r.se_diff for r in self.rows]])

    def to_dict(self):
        return {'rows': [r.__dict__ for r in self.rows], 'n_paths': self.n_paths,
                'T': self.horizon, 'tail_bound': self.tail_bound, 'seed': self.seed}


@logged
def compare_policies(params, policies, n_paths=const.MC_PATHS, horizon=None,
                     n_steps=const.MC_STEPS, substeps=const.MC_SUBSTEPS, seed=0, antithetic=True,
                     block=const.MC_BLOCK, workers=None, drift_compensation=True):
    """Evaluate `policies` on common random numbers

    The first optimal feedback policy is moved to the top and every row reports its difference
    to it; without one, differences are taken against the first policy.

    :rtype: ComparisonTable
    """
    policies = list(policies)
    if len(policies) < 2:
        raise InvalidInputError('at least two policies are required')
    for policy in policies:
        policy.check(params)
    optimal = [i for i, p in enumerate(policies) if isinstance(p, OptimalFeedback)]
    if optimal:
        policies.insert(0, policies.pop(optimal[0]))
    if horizon is None:
        horizon = _resolve_horizon(params, policies[0], None)

    _, merged = _run_blocks(params, policies, n_paths, horizon, n_steps, substeps, seed,
                            antithetic, block, workers, drift_compensation)
    base = merged[0]['v']
    rows = []
    for policy, item in zip(policies, merged):
        mean, se = _mean_se(item['v'], antithetic)
        diff, se_diff = _mean_se(item['v'] - base, antithetic)
        rows.append(ComparisonRow(policy.name, mean, se, diff, se_diff))
    return ComparisonTable(tuple(rows), n_paths, float(horizon), tail_bound(params, horizon), seed)


@dataclass(frozen=True)
class MartingaleCheck:
    """Estimates of ``phi^n_t = -Phi0 exp(-t/n)/n`` for zero drift, whose value tends to Phi0 S0"""
    n_values: tuple
    estimates: tuple
    upper: float
    increasing: bool
    bounded: bool

    def to_dict(self):
        return {'n': list(self.n_values), 'upper': self.upper, 'increasing': self.increasing,
                'bounded': self.bounded, 'estimates': [e.to_dict() for e in self.estimates]}


def martingale_check(params, n_values=(1, 10, 100), horizon_factor=20.0, n_paths=const.MC_PATHS,
                     n_steps=const.MC_STEPS, substeps=const.MC_SUBSTEPS, seed=0, antithetic=True,
                     workers=None):
    """Run the ``phi^n`` family with horizon ``horizon_factor * n``

    ``increasing`` allows each estimate to fall short of its predecessor by two combined
    standard errors; ``bounded`` requires every estimate to stay below ``Phi0 S0 + 2 SE``.
    """
    if regime(params).regime is not Regime.Martingale:
        raise InvalidInputError('martingale check needs mu = 0')
    estimates = tuple(
        estimate_value(params, ExponentialRate(1.0 / n), n_paths=n_paths,
                       horizon=horizon_factor * n, n_steps=n_steps, substeps=substeps, seed=seed,
                       antithetic=antithetic, workers=workers)
        for n in n_values)
    upper = params.phi0 * params.s0
    increasing = all(b.mean >= a.mean - 2.0 * math.hypot(a.std_error, b.std_error)
                     for a, b in zip(estimates, estimates[1:]))
    bounded = all(e.mean <= upper + 2.0 * e.std_error for e in estimates)
    return MartingaleCheck(tuple(n_values), estimates, upper, increasing, bounded)


@dataclass(frozen=True)
class DriftCheck:
    """Positive-drift diagnostic of ``phi_t = -mu Phi0 exp(-mu t)``

    :param revenue_rate: time average of ``-phi_t S_t`` over the horizon, with its standard error
    :param expected_rate: ``mu Phi0 S0``
    :param squared_rate_integral: ``int_0^inf phi^2 dt`` in closed form, ``mu Phi0^2 / 2``
    :param impact_cost: simulated ``(Lambda/2) int_0^T phi^2 dt`` and its closed form
    """
    revenue_rate: float
    revenue_rate_se: float
    expected_rate: float
    squared_rate_integral: float
    impact_cost: float
    impact_cost_exact: float
    horizon: float

    @property
    def ok(self):
        return abs(self.revenue_rate - self.expected_rate) <= 2.0 * self.revenue_rate_se

    def to_dict(self):
        d = dict(self.__dict__)
        d['ok'] = self.ok
        return d


def positive_drift_check(params, horizon=10.0, n_paths=const.MC_PATHS, n_steps=const.MC_STEPS,
                         substeps=const.MC_SUBSTEPS, seed=0, antithetic=True, workers=None):
    if regime(params).regime is not Regime.PositiveDrift:
        raise InvalidInputError('positive drift check needs mu > 0')
    policy = ExponentialRate(params.mu)
    _, merged = _run_blocks(params, [policy], n_paths, horizon, n_steps, substeps, seed,
                            antithetic, const.MC_BLOCK, workers, True)
    rate, rate_se = _mean_se(merged[0]['revenue'] / horizon, antithetic)
    return DriftCheck(revenue_rate=rate, revenue_rate_se=rate_se,
                      expected_rate=params.mu * params.phi0 * params.s0,
                      squared_rate_integral=policy.squared_rate_integral(params.phi0),
                      impact_cost=float(merged[0]['impact'][0]),
                      impact_cost_exact=0.5 * params.lambda_impact
                      * policy.squared_rate_integral(params.phi0, horizon),
                      horizon=float(horizon))


@dataclass(frozen=True, eq=False)
class SupermartingaleProfile:
    """Cross-sectional statistics of ``M_t = S_t g'(Phi_t/S_t)`` under the optimal policy

    :param shadow_revenue: MC mean of ``-int_0^T phi M dt`` with its standard error
    :param target: ``Phi0 M_0``
    """
    times: np.ndarray
    mean: np.ndarray
    se: np.ndarray
    shadow_revenue: float
    shadow_revenue_se: float
    target: float
    tail_bound: float

    @property
    def nonincreasing(self):
        return bool(np.all(self.mean[1:] <= self.mean[:-1] + 2.0 * self.se[1:]))

    @property
    def identity_ok(self):
        gap = abs(self.shadow_revenue - self.target)
        return gap <= 2.0 * self.shadow_revenue_se + self.tail_bound

    def to_dict(self):
        return {'nonincreasing': self.nonincreasing, 'identity_ok': self.identity_ok,
                'shadow_revenue': self.shadow_revenue, 'shadow_revenue_se': self.shadow_revenue_se,
                'target': self.target, 'tail_bound': self.tail_bound,
                'max_increase': float(np.max(np.diff(self.mean)))}


def supermartingale_profile(params, source, n_paths=const.MC_PATHS, horizon=None,
                            n_steps=const.MC_STEPS, substeps=const.MC_SUBSTEPS, seed=0,
                            antithetic=True, workers=None):
    """Profile ``M`` along optimal executions

    Along the optimum ``M = S + Lambda phi``, so ``-int phi M dt`` is the revenue minus twice the
    impact cost; its expectation is ``Phi0 M_0`` up to the tail.

    :rtype: SupermartingaleProfile
    """
    policy = OptimalFeedback(source)
    policy.check(params)
    horizon = _resolve_horizon(params, policy, horizon)
    times, merged = _run_blocks(params, [policy], n_paths, horizon, n_steps, substeps, seed,
                                antithetic, const.MC_BLOCK, workers, True, m_source=source)
    item = merged[0]
    count = item['m_count']
    mean = item['m_sum'] / count
    var = np.maximum(item['m_sumsq'] / count - mean ** 2, 0.0) * count / (count - 1)
    se = np.sqrt(var / count)
    shadow, shadow_se = _mean_se(item['revenue'] - 2.0 * item['impact'], antithetic)
    m0 = float(shadow_price(source, params.s0, params.phi0))
    return SupermartingaleProfile(times, mean, se, shadow, shadow_se, params.phi0 * m0,
                                  tail_bound(params, horizon))
