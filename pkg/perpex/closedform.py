"""Closed-form solution of the critical case ``2 mu + sigma^2 = 0``

In the critical case ``S^2`` is a martingale and ``1 - g'(x) = h(1/x)`` where

    h(y) = [sum_n q^n / ((n+1) n!^2)] / [sum_n q^n / n!^2],    q = y / (Lambda sigma^2)

is the ratio ``I_1(z) / (sqrt(q) I_0(z))`` of modified Bessel functions with ``z = 2 sqrt(q)``.
``h`` solves the Riccati equation ``h' + h/y + h^2/(Lambda sigma^2) - 1/y = 0`` and
``v = I_0(z)`` the linear equation ``y v'' + v' - v/(Lambda sigma^2) = 0``. Only the ``I_0``
branch is used; the second-kind branch diverges at ``y = 0``.

Evaluation switches method with ``q``: direct partial sums up to :data:`~perpex.const.Q_SWITCH`,
a modified Lentz continued fraction up to :data:`~perpex.const.Q_CF_MAX` and the exponentially
scaled library ratio beyond.
"""
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

from . import const
from .exceptions import InvalidInputError, NumericalBlowupError, RegimeError
from .market import MarketParams, regime
from .util import io

__all__ = ['CriticalParams', 'h_ratio', 'g_critical', 'g_prime_critical', 'optimal_rate_critical',
           'bessel_v', 'riccati_residual', 'linear_ode_residual', 'value_critical',
           'write_h_table', 'write_g_table']

log = logging.getLogger('perpex')

#: series terms below this fraction of the running sum end the summation
SERIES_CUTOFF = 1e-18

#: convergence threshold of the continued fraction
CF_TOL = 4 * np.finfo(float).eps

CF_MAX_TERMS = 10000

#: quadrature tolerances of :func:`g_critical`
QUAD_EPSABS = 1e-13
QUAD_EPSREL = 1e-12


@dataclass(frozen=True)
class CriticalParams:
    """Parameters of the critical case; the drift is implied as ``mu = -sigma^2 / 2``"""
    sigma: float
    lambda_impact: float

    def __post_init__(self):
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise InvalidInputError('sigma must be > 0')
        if not (self.lambda_impact > 0 and math.isfinite(self.lambda_impact)):
            raise InvalidInputError('lambda_impact must be > 0')
        object.__setattr__(self, 'sigma', float(self.sigma))
        object.__setattr__(self, 'lambda_impact', float(self.lambda_impact))

    @property
    def mu(self):
        return -0.5 * self.sigma ** 2

    @property
    def scale(self):
        """``Lambda sigma^2``, the natural unit of ``y``"""
        return self.lambda_impact * self.sigma ** 2

    @classmethod
    def from_params(cls, params, tol_critical=const.TOL_CRITICAL):
        """Extract the critical parameters of `params`

        :raises RegimeError: `params` is not critical
        """
        if not regime(params, tol_critical=tol_critical).critical:
            raise RegimeError('closed form requires 2 mu + sigma^2 = 0, got {!r}'
                              .format(params.critical_excess))
        return cls(params.sigma, params.lambda_impact)

    def to_params(self, s0=1.0, phi0=1.0):
        return MarketParams(self.mu, self.sigma, self.lambda_impact, s0, phi0)

    def matches(self, params, tol_critical=const.TOL_CRITICAL):
        """True if `params` is the critical market these parameters describe"""
        return (regime(params, tol_critical=tol_critical).critical
                and params.sigma == self.sigma and params.lambda_impact == self.lambda_impact)

    def to_dict(self):
        return {'sigma': self.sigma, 'lambda_impact': self.lambda_impact}


def _series_ratio(q):
    term = np.ones_like(q)
    num = np.ones_like(q)
    den = np.ones_like(q)
    n = 0
    while True:
        term = term * q / (n + 1) ** 2
        n += 1
        num += term / (n + 1)
        den += term
        if np.all(term < SERIES_CUTOFF * den):
            return num / den


def _lentz_ratio(z):
    """``I_1(z) / I_0(z)`` by the modified Lentz method

    ``I_1/I_0 = 1/(2/z + 1/(4/z + 1/(6/z + ...)))``: ``b_0 = 0``, ``a_j = 1``, ``b_j = 2j/z``.
    """
    tiny = 1e-30
    f = np.full_like(z, tiny)
    c = f.copy()
    d = np.zeros_like(z)
    for j in range(1, CF_MAX_TERMS):
        b = 2.0 * j / z
        d = b + d
        d[d == 0] = tiny
        c = b + 1.0 / c
        c[c == 0] = tiny
        d = 1.0 / d
        delta = c * d
        f = f * delta
        if np.all(np.abs(delta - 1.0) < CF_TOL):
            return f
    raise NumericalBlowupError('continued fraction did not converge in {} terms'
                               .format(CF_MAX_TERMS))


def _scaled_library_ratio(z):
    return special.ive(1, z) / special.ive(0, z)


def h_ratio(y, p):
    """The Bessel ratio ``h(y)``

    :param y: positive scalar or array; ``inf`` maps to 0
    :param CriticalParams p: critical parameters
    :return: values in ``(0, 1]``, nonincreasing in `y`, same shape as `y`
    """
    y = np.asarray(y, dtype=float)
    if np.any(np.isnan(y)) or np.any(y <= 0):
        raise InvalidInputError('h(y) requires y > 0')

    q = np.atleast_1d(y / p.scale)
    out = np.zeros_like(q)
    series = q <= const.Q_SWITCH
    frac = (q > const.Q_SWITCH) & (q <= const.Q_CF_MAX)
    asym = (q > const.Q_CF_MAX) & np.isfinite(q)

    if series.any():
        out[series] = _series_ratio(q[series])
    if frac.any():
        qf = q[frac]
        out[frac] = _lentz_ratio(2.0 * np.sqrt(qf)) / np.sqrt(qf)
    if asym.any():
        qa = q[asym]
        out[asym] = _scaled_library_ratio(2.0 * np.sqrt(qa)) / np.sqrt(qa)

    return out.reshape(y.shape) if y.ndim else float(out[0])


def g_prime_critical(x, p):
    """``g'(x) = 1 - h(1/x)`` with ``g'(0) = 1``"""
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise InvalidInputError('x must be finite and >= 0')
    with np.errstate(divide='ignore'):
        y = np.where(x > 0, 1.0 / np.where(x > 0, x, 1.0), np.inf)
    return 1.0 - h_ratio(y, p)


def _method_switch_points(p):
    return [1.0 / (const.Q_CF_MAX * p.scale), 1.0 / (const.Q_SWITCH * p.scale)]


def g_critical(x, p):
    """``g(x) = int_0^x (1 - h(1/z)) dz``

    The integral is taken panel by panel between the sorted evaluation points, with extra panel
    boundaries where the evaluation method of ``h`` switches, and accumulated.

    :param x: nonnegative scalar or array
    :rtype: same shape as `x`
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise InvalidInputError('x must be finite and >= 0')

    flat = x.ravel()
    top = flat.max() if flat.size else 0.0
    switches = [z for z in _method_switch_points(p) if z < top]
    breaks = np.unique(np.concatenate([[0.0], flat, switches]))

    def integrand(z):
        if z == 0.0:
            return 1.0
        return 1.0 - h_ratio(1.0 / z, p)

    pieces = np.empty(len(breaks) - 1)
    for i, (a, b) in enumerate(zip(breaks[:-1], breaks[1:])):
        pieces[i], _ = integrate.quad(integrand, a, b, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL,
                                      limit=200)
    cumulative = np.concatenate([[0.0], np.cumsum(pieces)])
    values = cumulative[np.searchsorted(breaks, flat)]
    return values.reshape(x.shape) if x.ndim else float(values[0])


def optimal_rate_critical(s, phi, p):
    """Optimal selling rate ``-(s/Lambda) h(s/phi)``; zero where ``phi = 0``

    Accepts scalars or equally shaped arrays.
    """
    s = np.asarray(s, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if np.any(s <= 0) or np.any(np.isnan(s)):
        raise InvalidInputError('price must be > 0')
    if np.any(phi < 0):
        raise InvalidInputError('inventory must be >= 0')

    s, phi = np.broadcast_arrays(s, phi)
    held = phi > 0
    rate = np.zeros(s.shape)
    if held.any():
        rate[held] = -(s[held] / p.lambda_impact) * h_ratio(s[held] / phi[held], p)
    return rate if rate.ndim else float(rate)


def value_critical(phi0, s0, p):
    """Value ``S0^2 g(Phi0/S0)`` of the critical problem"""
    if s0 <= 0 or phi0 < 0:
        raise InvalidInputError('s0 must be > 0 and phi0 >= 0')
    return s0 ** 2 * g_critical(phi0 / s0, p)


def bessel_v(y, p):
    """``v(y) = I_0(2 sqrt(y / (Lambda sigma^2)))``"""
    y = np.asarray(y, dtype=float)
    if np.any(y < 0):
        raise InvalidInputError('y must be >= 0')
    return special.i0(2.0 * np.sqrt(y / p.scale))


def riccati_residual(y, p, rel_step=1e-4):
    """``h' + h/y + h^2/(Lambda sigma^2) - 1/y`` with ``h'`` by central differences"""
    y = np.asarray(y, dtype=float)
    dy = rel_step * y
    dh = (h_ratio(y + dy, p) - h_ratio(y - dy, p)) / (2.0 * dy)
    h = h_ratio(y, p)
    return dh + h / y + h ** 2 / p.scale - 1.0 / y


def linear_ode_residual(y, p, rel_step=1e-4):
    """Residual of ``y v'' + v' - v/(Lambda sigma^2) = 0`` relative to the size of its terms

    ``v`` grows like ``exp(2 sqrt(y/(Lambda sigma^2)))``, so the raw residual is scaled by
    ``|y v''| + |v'| + |v|/(Lambda sigma^2)``.
    """
    y = np.asarray(y, dtype=float)
    dy = rel_step * (1.0 + y)
    v_minus, v, v_plus = bessel_v(y - dy, p), bessel_v(y, p), bessel_v(y + dy, p)
    dv = (v_plus - v_minus) / (2.0 * dy)
    d2v = (v_plus - 2.0 * v + v_minus) / dy ** 2
    terms = (y * d2v, dv, -v / p.scale)
    return sum(terms) / sum(np.abs(t) for t in terms)


def write_h_table(path, y, p):
    """Write ``y,h`` to `path`"""
    y = np.asarray(y, dtype=float)
    io.write_csv(path, ['y', 'h'], [y, h_ratio(y, p)])


def write_g_table(path, x, p):
    """Write ``x,g,g_prime`` of the critical value function to `path`"""
    x = np.asarray(x, dtype=float)
    io.write_csv(path, ['x', 'g', 'g_prime'], [x, g_critical(x, p), g_prime_critical(x, p)])
