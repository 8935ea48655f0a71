"""Execution of selling policies along price paths

The engine integrates ``dPhi/dt = phi(t, S, Phi)`` between the points of a price grid with
`substeps` explicit steps per interval. Within an interval the martingale part of the price is
held at its interval-start value; the known drift ``exp(drift (t - t_k))`` can be carried
exactly (``drift=0`` gives a plain hold). Revenue integrates that price exactly over each
substep. A substep that would push the inventory below zero is cut short at the hitting time
and the rate is zero from then on.

All arrays are processed one row per path, so a block of paths is simulated at once.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import const
from .closedform import CriticalParams, g_prime_critical, optimal_rate_critical
from .exceptions import AdmissibilityError, InvalidInputError, MismatchError
from .market import PricePath
from .ode import ValueFunction, g_prime_at
from .util import io

__all__ = ['Policy', 'OptimalFeedback', 'ExponentialRate', 'ConstantRate', 'Custom',
           'policy_from_spec', 'ExecutionBatch', 'ExecutionResult', 'MPath', 'execute_paths',
           'simulate_execution', 'supermartingale_diagnostic', 'verification_gap',
           'shadow_price']

log = logging.getLogger('perpex')


def _fmt_param(value):
    return '{:g}'.format(value)


def shadow_price(source, s, phi):
    """``M = S g'(Phi/S)`` for a value function or critical parameter set"""
    s = np.asarray(s, dtype=float)
    x = np.asarray(phi, dtype=float) / s
    if isinstance(source, ValueFunction):
        return s * g_prime_at(source, x)
    if isinstance(source, CriticalParams):
        return s * g_prime_critical(x, source)
    raise InvalidInputError('expected a ValueFunction or CriticalParams, got {!r}'.format(source))


def _check_source(source, params):
    if isinstance(source, ValueFunction):
        if not source.params.same_dynamics(params):
            raise MismatchError('value function was solved for mu={}, sigma={}, Lambda={}'
                                .format(source.params.mu, source.params.sigma,
                                        source.params.lambda_impact))
    elif isinstance(source, CriticalParams):
        if not source.matches(params):
            raise MismatchError('critical parameters sigma={}, Lambda={} do not describe the '
                                'market'.format(source.sigma, source.lambda_impact))


class Policy:
    """A selling policy ``phi(t, S, Phi) <= 0``

    Subclasses implement :meth:`rate`, vectorized over paths.
    """
    name = 'policy'

    def rate(self, t, s, phi, phi0):
        """Selling rate at time `t` for prices `s` and inventories `phi` (arrays)"""
        raise NotImplementedError

    def check(self, params):
        """Raise :class:`~perpex.exceptions.MismatchError` if the policy does not fit `params`"""

    def to_dict(self):
        return {'kind': self.name}

    def __repr__(self):
        return '<{} {}>'.format(type(self).__name__, self.name)


class OptimalFeedback(Policy):
    """``phi = -(S/Lambda) (1 - g'(Phi/S))``

    :param source: a solved :class:`~perpex.ode.ValueFunction` or, in the critical case,
        :class:`~perpex.closedform.CriticalParams`
    """
    name = 'optimal'

    def __init__(self, source):
        if not isinstance(source, (ValueFunction, CriticalParams)):
            raise InvalidInputError('optimal feedback needs a ValueFunction or CriticalParams')
        self.source = source

    @property
    def lambda_impact(self):
        if isinstance(self.source, ValueFunction):
            return self.source.params.lambda_impact
        return self.source.lambda_impact

    def rate(self, t, s, phi, phi0):
        if isinstance(self.source, CriticalParams):
            return optimal_rate_critical(s, phi, self.source)
        gp = g_prime_at(self.source, phi / s)
        return -(s / self.lambda_impact) * (1.0 - gp)

    def check(self, params):
        _check_source(self.source, params)


class ExponentialRate(Policy):
    """``phi_t = -c Phi0 exp(-c t)``; the inventory decays like ``exp(-c t)`` and never hits 0"""

    def __init__(self, c):
        if not (c > 0 and math.isfinite(c)):
            raise InvalidInputError('c must be > 0')
        self.c = float(c)
        self.name = 'exponential(c={})'.format(_fmt_param(self.c))

    def rate(self, t, s, phi, phi0):
        return np.full(np.shape(phi), -self.c * phi0 * math.exp(-self.c * t))

    def squared_rate_integral(self, phi0, horizon=math.inf):
        """``int_0^T phi_t^2 dt = c Phi0^2 (1 - exp(-2 c T)) / 2``"""
        return 0.5 * self.c * phi0 ** 2 * -math.expm1(-2.0 * self.c * horizon)

    def to_dict(self):
        return {'kind': 'exponential', 'c': self.c}


class ConstantRate(Policy):
    """Sell everything at the constant rate ``-Phi0/T`` over ``[0, T)``"""

    def __init__(self, horizon):
        if not (horizon > 0 and math.isfinite(horizon)):
            raise InvalidInputError('T must be > 0')
        self.horizon = float(horizon)
        self.name = 'constant(T={})'.format(_fmt_param(self.horizon))

    def rate(self, t, s, phi, phi0):
        value = -phi0 / self.horizon if t < self.horizon else 0.0
        return np.full(np.shape(phi), value)

    def to_dict(self):
        return {'kind': 'constant', 'T': self.horizon}


class Custom(Policy):
    """Wrap a callable ``fn(t, s, phi) -> rate``"""

    def __init__(self, fn, name='custom'):
        self.fn = fn
        self.name = name

    def rate(self, t, s, phi, phi0):
        return np.broadcast_to(np.asarray(self.fn(t, s, phi), dtype=float), np.shape(phi))

    def to_dict(self):
        return {'kind': 'custom', 'name': self.name}


def policy_from_spec(spec, source=None):
    """Build a policy from its configuration mapping

    ``{"kind": "optimal"}`` uses `source`; ``{"kind": "exponential", "c": ...}`` and
    ``{"kind": "constant", "T": ...}`` are parameterised in the mapping.
    """
    kind = spec.get('kind')
    if kind == 'optimal':
        if source is None:
            raise InvalidInputError('optimal policy requires a value function')
        return OptimalFeedback(source)
    if kind == 'exponential':
        return ExponentialRate(spec['c'])
    if kind == 'constant':
        return ConstantRate(spec['T'])
    raise InvalidInputError('unknown policy kind {!r}'.format(kind))


@dataclass(frozen=True, eq=False)
class ExecutionBatch:
    """Trajectories of a block of paths; arrays are ``(n_paths, n_times)`` unless noted

    :param rate: rate at each grid time (first substep of the following interval)
    :param hit_time: ``(n_paths,)`` time inventory reached 0, ``inf`` if it never did
    """
    times: np.ndarray
    prices: np.ndarray
    inventory: np.ndarray
    rate: np.ndarray
    revenue_cum: np.ndarray
    impact_cost_cum: np.ndarray
    hit_time: np.ndarray

    @property
    def v_realized(self):
        return self.revenue_cum[:, -1] - self.impact_cost_cum[:, -1]

    def __len__(self):
        return self.inventory.shape[0]


def _revenue_weight(drift, dt):
    if drift == 0.0:
        return dt
    return np.expm1(drift * dt) / drift


def execute_paths(policy, times, prices, phi0, lambda_impact, substeps=const.MC_SUBSTEPS,
                  drift=0.0, record=True):
    """Run `policy` on every row of `prices`

    :param times: strictly increasing grid starting at 0
    :param prices: ``(n_paths, len(times))`` positive prices
    :param float phi0: initial inventory
    :param float lambda_impact: temporary impact coefficient
    :param int substeps: inventory steps per price interval
    :param float drift: drift carried within intervals
    :param bool record: keep every grid time; otherwise only the first and last
    :rtype: ExecutionBatch
    :raises AdmissibilityError: the policy emitted a positive rate
    """
    times = np.asarray(times, dtype=float)
    prices = np.atleast_2d(np.asarray(prices, dtype=float))
    if phi0 < 0:
        raise InvalidInputError('phi0 must be >= 0')
    if int(substeps) != substeps or substeps < 1:
        raise InvalidInputError('substeps must be a positive integer')
    if prices.shape[1] != len(times):
        raise InvalidInputError('prices do not match the time grid')

    n, m = prices.shape
    phi = np.full(n, float(phi0))
    revenue = np.zeros(n)
    impact = np.zeros(n)
    hit = np.full(n, np.inf)
    if phi0 == 0:
        hit[:] = 0.0

    kept = m if record else 2
    inventory = np.empty((n, kept))
    rates = np.empty((n, kept))
    revenue_cum = np.empty((n, kept))
    impact_cum = np.empty((n, kept))
    inventory[:, 0] = phi
    revenue_cum[:, 0] = 0.0
    impact_cum[:, 0] = 0.0

    def admissible_rate(t, s):
        r = np.asarray(policy.rate(t, s, phi, phi0), dtype=float)
        if np.any(r > 0):
            raise AdmissibilityError('{} emitted a buying rate {:g} at t={:g}'
                                     .format(policy.name, float(r.max()), t))
        return np.where(phi > 0, r, 0.0)

    for k in range(m - 1):
        t_k = times[k]
        h = (times[k + 1] - t_k) / substeps
        s_k = prices[:, k]
        for j in range(substeps):
            tau = j * h
            s = s_k * math.exp(drift * tau) if drift else s_k
            r = admissible_rate(t_k + tau, s)
            if j == 0 and (record or k == 0):
                rates[:, k] = r
            step = np.full(n, h)
            hits = (r < 0) & (phi + r * h <= 0)
            if hits.any():
                step[hits] = phi[hits] / -r[hits]
                hit[hits] = np.minimum(hit[hits], t_k + tau + step[hits])
            revenue += -r * s * _revenue_weight(drift, step)
            impact += 0.5 * lambda_impact * r * r * step
            phi = np.where(hits, 0.0, phi + r * step)
        if record or k == m - 2:
            col = k + 1 if record else 1
            inventory[:, col] = phi
            revenue_cum[:, col] = revenue
            impact_cum[:, col] = impact

    rates[:, -1] = admissible_rate(times[-1], prices[:, -1])
    if not record:
        times, prices = times[[0, -1]], prices[:, [0, -1]]
    return ExecutionBatch(times, prices, inventory, rates, revenue_cum, impact_cum, hit)


@dataclass(frozen=True, eq=False)
class ExecutionResult:
    """Trajectories of one path

    :param m_values: ``S g'(Phi/S)`` at the grid times, or None without a value function
    """
    times: np.ndarray
    prices: np.ndarray
    inventory: np.ndarray
    rate: np.ndarray
    revenue_cum: np.ndarray
    impact_cost_cum: np.ndarray
    v_realized: float
    hit_time: float
    policy: str
    m_values: np.ndarray = None

    def to_csv(self, path):
        m = self.m_values if self.m_values is not None else np.full(len(self.times), np.nan)
        io.write_csv(path, ['t', 'S', 'phi_rate', 'inventory', 'revenue_cum', 'impact_cost_cum',
                            'M'],
                     [self.times, self.prices, self.rate, self.inventory, self.revenue_cum,
                      self.impact_cost_cum, m])

    def summary(self):
        return {'policy': self.policy, 'v_realized': self.v_realized,
                'revenue': float(self.revenue_cum[-1]),
                'impact_cost': float(self.impact_cost_cum[-1]),
                'final_inventory': float(self.inventory[-1]), 'hit_time': self.hit_time}


def simulate_execution(policy, path, phi0, params, substeps=const.MC_SUBSTEPS, drift=0.0,
                       m_source=None):
    """Execute `policy` along one :class:`~perpex.market.PricePath`

    :param MarketParams params: market the path belongs to; supplies ``Lambda``
    :param m_source: value function for the ``M`` column; defaults to the optimal policy's own
    :rtype: ExecutionResult
    :raises MismatchError: the policy's value function belongs to other market parameters
    """
    if not isinstance(path, PricePath):
        raise InvalidInputError('path must be a PricePath')
    policy.check(params)
    batch = execute_paths(policy, path.times, path.prices, phi0, params.lambda_impact,
                          substeps=substeps, drift=drift)
    if m_source is None and isinstance(policy, OptimalFeedback):
        m_source = policy.source
    m_values = None
    if m_source is not None:
        _check_source(m_source, params)
        m_values = shadow_price(m_source, path.prices, batch.inventory[0])
    return ExecutionResult(times=path.times, prices=path.prices, inventory=batch.inventory[0],
                           rate=batch.rate[0], revenue_cum=batch.revenue_cum[0],
                           impact_cost_cum=batch.impact_cost_cum[0],
                           v_realized=float(batch.v_realized[0]),
                           hit_time=float(batch.hit_time[0]), policy=policy.name,
                           m_values=m_values)


@dataclass(frozen=True, eq=False)
class MPath:
    times: np.ndarray
    m_values: np.ndarray


def supermartingale_diagnostic(result, path, vf):
    """``M_t = S_t g'(Phi_t / S_t)`` along an executed path

    Once the inventory is absorbed at 0, ``M_t = S_t``.

    :rtype: MPath
    """
    return MPath(path.times, shadow_price(vf, path.prices, result.inventory))


def verification_gap(result, vf):
    """Quadratic shortfall of a policy against the feedback optimum along its own path

    With ``M = S g'(Phi/S)`` the instantaneous gain ``phi (M - S) - (Lambda/2) phi^2`` is
    maximised by ``(M - S)/Lambda``; the shortfall is ``(Lambda/2) int (phi - (M - S)/Lambda)^2 dt``,
    left-point rule on the grid. It vanishes up to the time step for the optimal policy.
    """
    lam = vf.params.lambda_impact if isinstance(vf, ValueFunction) else vf.lambda_impact
    m = shadow_price(vf, result.prices, result.inventory)
    target = (m - result.prices) / lam
    target = np.where(result.inventory > 0, target, 0.0)
    dt = np.diff(result.times)
    return float(0.5 * lam * np.sum((result.rate[:-1] - target[:-1]) ** 2 * dt))
