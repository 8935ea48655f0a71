"""Market model: parameters, regime classification and exact GBM paths

The price follows ``S_t = S_0 exp(sigma W_t + (mu - sigma^2/2) t)`` and the seller pays a temporary
linear impact: selling at rate ``-phi`` executes at ``S + (Lambda/2) phi``.

Random numbers come from counter-based Philox streams keyed by ``(seed, stream)``, so any path can
be regenerated on its own and parallel runs reproduce serial runs bit for bit.
"""
import enum
import logging
import math
from dataclasses import dataclass, replace

import numpy as np

from . import const
from .exceptions import InvalidInputError
from .util import io

__all__ = ['MarketParams', 'Regime', 'RegimeInfo', 'PricePath', 'regime', 'stream_normals',
           'simulate_gbm', 'simulate_gbm_paths', 'uniform_grid']

log = logging.getLogger('perpex')

MAX_U64 = 2 ** 64 - 1


class Regime(enum.Enum):
    NegativeDrift = 'negative-drift'
    Martingale = 'martingale'
    PositiveDrift = 'positive-drift'


@dataclass(frozen=True)
class RegimeInfo:
    regime: Regime
    critical: bool


@dataclass(frozen=True)
class MarketParams:
    """Model constants

    :param float mu: drift per unit time
    :param float sigma: volatility per square-root time
    :param float lambda_impact: temporary impact coefficient Lambda
    :param float s0: initial price
    :param float phi0: initial inventory in shares
    """
    mu: float
    sigma: float
    lambda_impact: float
    s0: float = 1.0
    phi0: float = 1.0

    def __post_init__(self):
        for name in ('mu', 'sigma', 'lambda_impact', 's0', 'phi0'):
            value = getattr(self, name)
            if not isinstance(value, (int, float, np.floating, np.integer)) \
                    or not math.isfinite(value):
                raise InvalidInputError('{} must be a finite real, got {!r}'.format(name, value))
            object.__setattr__(self, name, float(value))
        if self.sigma <= 0:
            raise InvalidInputError('sigma must be > 0')
        if self.lambda_impact <= 0:
            raise InvalidInputError('lambda_impact must be > 0')
        if self.s0 <= 0:
            raise InvalidInputError('s0 must be > 0')
        if self.phi0 < 0:
            raise InvalidInputError('phi0 must be >= 0')

    @property
    def x0(self):
        """Reduced initial state ``phi0 / s0``"""
        return self.phi0 / self.s0

    @property
    def critical_excess(self):
        """``2 mu + sigma^2``; zero in the critical case"""
        return 2.0 * self.mu + self.sigma ** 2

    def with_position(self, phi0=None, s0=None):
        """Copy with another initial inventory and/or price (the scale-free part is shared)"""
        return replace(self, phi0=self.phi0 if phi0 is None else phi0,
                       s0=self.s0 if s0 is None else s0)

    def same_dynamics(self, other, rtol=0.0):
        """True if `other` has the same mu, sigma and Lambda"""
        return all(math.isclose(a, b, rel_tol=rtol, abs_tol=0.0) for a, b in (
            (self.mu, other.mu), (self.sigma, other.sigma),
            (self.lambda_impact, other.lambda_impact)))

    def to_dict(self):
        return {'mu': self.mu, 'sigma': self.sigma, 'lambda_impact': self.lambda_impact,
                's0': self.s0, 'phi0': self.phi0}

    @classmethod
    def from_dict(cls, d):
        return cls(mu=d['mu'], sigma=d['sigma'], lambda_impact=d['lambda_impact'],
                   s0=d.get('s0', 1.0), phi0=d.get('phi0', 1.0))


def regime(params, tol_zero=const.TOL_ZERO, tol_critical=const.TOL_CRITICAL):
    """Classify the drift sign and flag the critical case ``2 mu + sigma^2 = 0``

    :rtype: RegimeInfo
    """
    if params.mu < -tol_zero:
        kind = Regime.NegativeDrift
    elif abs(params.mu) <= tol_zero:
        kind = Regime.Martingale
    else:
        kind = Regime.PositiveDrift
    return RegimeInfo(kind, abs(params.critical_excess) <= tol_critical)


@dataclass(frozen=True, eq=False)
class PricePath:
    """A sampled price trajectory

    :param times: strictly increasing time grid starting at 0
    :param prices: positive prices on the grid, ``prices[0] = s0``
    """
    times: np.ndarray
    prices: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        prices = np.asarray(self.prices, dtype=float)
        if times.ndim != 1 or times.shape != prices.shape or len(times) < 2:
            raise InvalidInputError('times and prices must be equally long 1-d arrays (>= 2)')
        _check_grid(times)
        if not np.all(prices > 0) or not np.all(np.isfinite(prices)):
            raise InvalidInputError('prices must be positive and finite')
        object.__setattr__(self, 'times', times)
        object.__setattr__(self, 'prices', prices)

    def __len__(self):
        return len(self.times)

    def to_csv(self, path):
        io.write_csv(path, ['t', 'S'], [self.times, self.prices])

    @classmethod
    def from_csv(cls, path):
        data = io.read_csv(path)
        return cls(data['t'], data['S'])


def uniform_grid(horizon, n_steps):
    """Uniform time grid with `n_steps` intervals on ``[0, horizon]``"""
    if horizon <= 0 or n_steps < 1:
        raise InvalidInputError('horizon must be > 0 and n_steps >= 1')
    return np.linspace(0.0, float(horizon), int(n_steps) + 1)


def _check_grid(time_grid):
    if len(time_grid) < 2 or time_grid[0] != 0.0 or not np.all(np.diff(time_grid) > 0):
        raise InvalidInputError('time grid must start at 0 and be strictly increasing')


def _generator(seed, stream):
    if not (0 <= seed <= MAX_U64 and 0 <= stream <= MAX_U64):
        raise InvalidInputError('seed and stream must be unsigned 64-bit integers')
    key = np.array([seed, stream], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def stream_normals(seed, stream, n):
    """The first `n` standard normals of the counter-based stream ``(seed, stream)``"""
    return _generator(int(seed), int(stream)).standard_normal(int(n))


def _log_increments(params, dt, z):
    return params.sigma * np.sqrt(dt) * z + (params.mu - 0.5 * params.sigma ** 2) * dt


def _prices_from_normals(params, time_grid, z):
    dt = np.diff(time_grid)
    log_growth = np.cumsum(_log_increments(params, dt, z), axis=-1)
    shape = z.shape[:-1] + (len(time_grid),)
    prices = np.empty(shape)
    prices[..., 0] = params.s0
    # scaling s0 by a power of two scales every price exactly
    prices[..., 1:] = params.s0 * np.exp(log_growth)
    return prices


def simulate_gbm(params, time_grid, seed=0, stream=0, antithetic=False):
    """Simulate one path with the exact lognormal transition

    ``S_{t+d} = S_t exp(sigma sqrt(d) Z + (mu - sigma^2/2) d)``

    :param MarketParams params: model constants
    :param time_grid: strictly increasing times starting at 0
    :param int seed: global seed
    :param int stream: stream (path) index
    :param bool antithetic: use ``-Z`` instead of ``Z``
    :rtype: PricePath
    """
    time_grid = np.asarray(time_grid, dtype=float)
    _check_grid(time_grid)
    z = stream_normals(seed, stream, len(time_grid) - 1)
    if antithetic:
        z = -z
    return PricePath(time_grid, _prices_from_normals(params, time_grid, z))


def simulate_gbm_paths(params, time_grid, seed, streams, antithetic=False):
    """Simulate a block of paths, one row per stream

    With ``antithetic=True`` every stream yields two consecutive rows driven by ``Z`` and ``-Z``.

    :return: array of shape ``(n_rows, len(time_grid))``
    """
    time_grid = np.asarray(time_grid, dtype=float)
    _check_grid(time_grid)
    n = len(time_grid) - 1
    z = np.array([stream_normals(seed, s, n) for s in streams]).reshape(-1, n)
    if antithetic:
        z = np.stack([z, -z], axis=1).reshape(-1, n)
    return _prices_from_normals(params, time_grid, z)
