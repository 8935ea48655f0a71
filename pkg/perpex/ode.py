"""Value function of the infinite-horizon problem

The scaled value ``g`` solves

    (sigma^2 x^2 / 2) g'' - (mu + sigma^2) x g' + (2 mu + sigma^2) g + (1 - g')^2 / (2 Lambda) = 0

on ``x = Phi/S >= 0`` with ``g(0) = 0`` and ``g'(0) = 1``. The equation is singular at ``x = 0``,
where ``1 - g'`` behaves like ``sqrt(2 Lambda |mu| x)``. Near zero ``g`` is taken from a
boundary-layer series in powers of ``sqrt(x)``; beyond the series cutoff the equation is solved as
a boundary value problem in ``s = ln x`` up to a far point where the asymptotic tail relation
holds. Forward shooting from the cutoff is not usable: the linearisation around the admissible
branch has a mode growing like ``exp(-c / sqrt(x))`` that is eventually amplified into ``x^2``
growth, and the far-field condition is what removes it.

Markets off the critical line ``2 mu + sigma^2 = 0`` are reached by continuation in ``mu`` from the
critical market with the same ``sigma`` and ``Lambda``, whose closed form supplies the first guess.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import integrate, interpolate

from . import const
from .closedform import CriticalParams, g_prime_critical
from .exceptions import (CutoffTooLargeError, InvalidInputError, MonotonicityError,
                         NumericalBlowupError, RegimeError)
from .market import MarketParams, Regime, regime
from .util import io
from .util.decorators import logged

__all__ = ['BoundaryLayerSeries', 'ValueFunction', 'ValidationReport', 'boundary_layer_series',
           'series_init', 'default_cutoff', 'integrate_value_ode', 'g_prime_at', 'g_at',
           'value_of', 'validate', 'equation_residual', 'lower_bound', 'martingale_residual']

log = logging.getLogger('perpex')

#: nodes of the initial collocation mesh
INITIAL_NODES = 400

MAX_NODES = 200000

#: tolerance of the first, coarse collocation solve
COARSE_TOL = 1e-6

#: extra solves with a tighter collocation tolerance when the grid residual is too large
MAX_REFINEMENTS = 2

#: initial number of steps of the continuation in mu from the critical market
CONTINUATION_STEPS = 8

#: smallest continuation step, as a fraction of the whole path, before giving up
MIN_CONTINUATION_STEP = 1.0 / 1024


def _require_negative_drift(params):
    kind = regime(params).regime
    if kind is Regime.PositiveDrift:
        raise RegimeError('value is infinite for positive drift: selling later always earns more '
                          '(mu = {})'.format(params.mu))
    if kind is Regime.Martingale:
        raise RegimeError('for zero drift the value Phi0*S0 is a supremum that no strategy '
                          'attains; the value function requires mu < 0')


@dataclass(frozen=True)
class BoundaryLayerSeries:
    """``1 - g'(x) = sum_k a_k x^(k/2)``, ``k = 1..n``"""
    coefficients: tuple

    def _powers(self, x):
        x = np.asarray(x, dtype=float)
        k = np.arange(1, len(self.coefficients) + 1)
        return x, k, np.sqrt(x)[..., None] ** k

    def one_minus_g_prime(self, x):
        x, _, powers = self._powers(x)
        return powers @ np.asarray(self.coefficients)

    def g_prime(self, x):
        return 1.0 - self.one_minus_g_prime(x)

    def g(self, x):
        x, k, powers = self._powers(x)
        return x - (powers * x[..., None] / (k / 2.0 + 1.0)) @ np.asarray(self.coefficients)

    def g_second(self, x):
        """``g''``; diverges like ``x^(-1/2)`` at 0"""
        x, k, powers = self._powers(x)
        return -(powers * (k / 2.0) / x[..., None]) @ np.asarray(self.coefficients)

    def term_ratio(self, x):
        """Largest ratio of successive term magnitudes ``|a_k| x^(k/2)`` at `x`"""
        a = np.abs(np.asarray(self.coefficients))
        root = math.sqrt(x)
        ratios = [a[k] * root / a[k - 1] for k in range(1, len(a)) if a[k - 1] > 0]
        return max(ratios, default=0.0)


def boundary_layer_series(params, n_terms=const.SERIES_TERMS):
    """Coefficients of the boundary-layer expansion, from matching powers of ``sqrt(x)``

    The ``x`` balance fixes ``a_1 = sqrt(2 Lambda |mu|)``; every higher power ``x^(n/2)`` gives
    ``(a_1/Lambda) a_(n-1) + (1/(2 Lambda)) sum_(i=2)^(n-2) a_i a_(n-i) + c_n a_(n-2) = 0`` with
    ``c_n = (mu + sigma^2) - 2 (2 mu + sigma^2)/n - sigma^2 (n - 2)/4``.
    """
    _require_negative_drift(params)
    if n_terms < 2:
        raise InvalidInputError('at least two series terms are required')

    lam = params.lambda_impact
    mu, var = params.mu, params.sigma ** 2
    a = [0.0, math.sqrt(-2.0 * lam * mu)]
    for n in range(3, n_terms + 2):
        c_n = (mu + var) - 2.0 * (2.0 * mu + var) / n - var * (n - 2) / 4.0
        quadratic = sum(a[i] * a[n - i] for i in range(2, n - 1))
        a.append(-(lam / a[1]) * (quadratic / (2.0 * lam) + a[n - 2] * c_n))
    return BoundaryLayerSeries(tuple(a[1:]))


def default_cutoff(params):
    """Default series cutoff ``1e-6 / max(1, Lambda |mu|)``"""
    return 1e-6 / max(1.0, params.lambda_impact * abs(params.mu))


def _checked_series(params, x0, n_terms):
    if not (x0 > 0 and math.isfinite(x0)):
        raise InvalidInputError('series cutoff must be > 0, got {!r}'.format(x0))
    series = boundary_layer_series(params, n_terms)
    ratio = series.term_ratio(x0)
    if ratio > const.SERIES_RATIO_MAX:
        raise CutoffTooLargeError('series cutoff {:g} too large: term ratio {:.3g} > {:g}'
                                  .format(x0, ratio, const.SERIES_RATIO_MAX))
    return series


def series_init(params, x0, n_terms=const.SERIES_TERMS):
    """Series values ``(g(x0), g'(x0))`` at the cutoff `x0`

    :raises CutoffTooLargeError: the series is not converging fast enough at `x0`
    """
    series = _checked_series(params, x0, n_terms)
    return float(series.g(x0)), float(series.g_prime(x0))


def equation_residual(x, g, g_prime, g_second, params):
    """Residual of the value ODE scaled by ``1 + sum |terms|``"""
    p = 1.0 - g_prime
    terms = (0.5 * params.sigma ** 2 * x ** 2 * g_second,
             -(params.mu + params.sigma ** 2) * x * g_prime,
             (2.0 * params.mu + params.sigma ** 2) * g,
             p ** 2 / (2.0 * params.lambda_impact))
    return np.abs(sum(terms)) / (1.0 + sum(np.abs(t) for t in terms))


class _ScaledSystem:
    """First-order system in ``s = ln x`` for ``Y = (g, x g') / xi`` with ``xi = x / (1 + x)``

    Dividing by ``xi`` keeps both unknowns of order one at the series cutoff, so the absolute
    collocation tolerance acts as a relative one where ``g`` is small.
    """

    def __init__(self, params, x0, x_far, n_terms=const.SERIES_TERMS):
        self.params = params
        var = params.sigma ** 2
        self.k_diff = 2.0 / var
        self.beta = params.mu + var
        self.gamma = 2.0 * params.mu + var
        self.lam = params.lambda_impact
        self.series = boundary_layer_series(params, n_terms)
        self.x0 = x0
        self.g0 = float(self.series.g(x0))
        self.g_left = self.g0 / self.xi(x0)
        self.x_far = x_far
        #: exponent of the far-field mode ``x^q``; the other one is ``x^2``
        self.q = self.gamma / var
        self.tail_const = 1.0 / (2.0 * self.lam * var)
        self.tail_factor = 1.0 - 2.0 / (self.lam * var * (3.0 - self.q) * x_far)

    @staticmethod
    def xi(x):
        return x / (1.0 + x)

    def fun(self, s, y):
        x = np.exp(s)
        xi = self.xi(x)
        y1, y2 = y
        p = 1.0 - y2 / (1.0 + x)
        dy1 = y2 - (1.0 - xi) * y1
        dy2 = xi * y2 + self.k_diff * (self.beta * y2 - self.gamma * y1
                                       - p ** 2 / (2.0 * self.lam * xi))
        return np.vstack([dy1, dy2])

    def fun_jac(self, s, y):
        x = np.exp(s)
        xi = self.xi(x)
        p = 1.0 - y[1] / (1.0 + x)
        jac = np.empty((2, 2, len(s)))
        jac[0, 0] = -(1.0 - xi)
        jac[0, 1] = 1.0
        jac[1, 0] = -self.k_diff * self.gamma
        jac[1, 1] = xi + self.k_diff * (self.beta + p / (self.lam * x))
        return jac

    def bc(self, ya, yb):
        xi_far = self.xi(self.x_far)
        return np.array([
            ya[0] - self.g_left,
            xi_far * yb[1] - (self.q * xi_far * yb[0] + self.tail_const) * self.tail_factor,
        ])

    def bc_jac(self, ya, yb):
        xi_far = self.xi(self.x_far)
        dya = np.array([[1.0, 0.0], [0.0, 0.0]])
        dyb = np.array([[0.0, 0.0], [-self.q * xi_far * self.tail_factor, xi_far]])
        return dya, dyb

    def critical_guess(self, s):
        """Closed-form ``g'`` of a critical market, integrated from the cutoff"""
        x = np.exp(s)
        gp = g_prime_critical(x, CriticalParams.from_params(self.params))
        g = self.g0 + integrate.cumulative_trapezoid(gp, x, initial=0.0)
        xi = self.xi(x)
        return np.vstack([g / xi, x * gp / xi])

    def physical(self, sol, s):
        """``g, g', g''`` on ``x = exp(s)`` from the collocation solution"""
        x = np.exp(s)
        xi = self.xi(x)
        y = sol.sol(s)
        dy = sol.sol(s, 1)
        g = xi * y[0]
        w = xi * y[1]
        dw = xi * (1.0 - xi) * y[1] + xi * dy[1]
        return g, w / x, (dw - w) / x ** 2


def _collocate(system, s, y, tol):
    sol = integrate.solve_bvp(system.fun, system.bc, s, y, fun_jac=system.fun_jac,
                              bc_jac=system.bc_jac, tol=tol, max_nodes=MAX_NODES)
    if not sol.success:
        raise NumericalBlowupError('collocation solve failed: {}'.format(sol.message))
    log.debug('collocation tol={:g}: {} nodes, {} iterations, max rms residual {:.3g}'
              .format(tol, len(sol.x), sol.niter, float(np.max(sol.rms_residuals))))
    return sol


def _continue_from_critical(params, x0, x_far, n_terms):
    """Coarse solution for `params`, reached from the critical market with the same sigma and Lambda

    The critical market starts from its closed form. ``mu`` then moves to its target in steps,
    each solve starting from the previous solution; a failed step is retried at half the length.

    :return: ``(system, sol, steps)``
    """
    anchor = replace(params, mu=-0.5 * params.sigma ** 2)
    system = _ScaledSystem(anchor, x0, x_far, n_terms)
    s_mesh = np.linspace(math.log(x0), math.log(x_far), INITIAL_NODES)
    sol = _collocate(system, s_mesh, system.critical_guess(s_mesh), COARSE_TOL)
    if params.mu == anchor.mu:
        return system, sol, 0

    t, step, steps = 0.0, 1.0 / CONTINUATION_STEPS, 0
    while t < 1.0:
        t_next = min(1.0, t + step)
        mu = params.mu if t_next == 1.0 else anchor.mu + t_next * (params.mu - anchor.mu)
        candidate = _ScaledSystem(replace(params, mu=mu), x0, x_far, n_terms)
        try:
            sol = _collocate(candidate, sol.x, sol.y, COARSE_TOL)
        except NumericalBlowupError as e:
            step /= 2.0
            log.debug('continuation step to mu={:g} failed ({}); step {:g}'.format(mu, e, step))
            if step < MIN_CONTINUATION_STEP:
                raise NumericalBlowupError('continuation from the critical market stalled at '
                                           'mu={:g}'.format(system.params.mu)) from e
            continue
        system, t, steps = candidate, t_next, steps + 1
        step = min(2.0 * step, 1.0 / CONTINUATION_STEPS)
    return system, sol, steps


@logged
def integrate_value_ode(params, x_max=const.X_MAX, tol=const.ODE_TOL, x0=None,
                        n_grid=const.GRID_POINTS, n_terms=const.SERIES_TERMS):
    """Solve for ``g`` on ``[0, x_max]``

    :param MarketParams params: model constants, ``mu < 0``
    :param float x_max: right end of the stored grid
    :param float tol: target scaled residual of the equation on the grid
    :param float x0: series cutoff; :func:`default_cutoff` when omitted
    :param int n_grid: number of stored grid points, including ``x = 0``
    :rtype: ValueFunction
    :raises RegimeError: ``mu >= 0``
    :raises MonotonicityError: ``g'`` left ``[0, 1]`` by more than the guard band
    :raises NumericalBlowupError: non-finite values or failed collocation
    """
    _require_negative_drift(params)
    x0 = default_cutoff(params) if x0 is None else float(x0)
    if not x_max > x0:
        raise InvalidInputError('x_max must exceed the series cutoff {:g}'.format(x0))
    if not tol > 0:
        raise InvalidInputError('tol must be > 0')
    if n_grid < 3:
        raise InvalidInputError('n_grid must be >= 3')

    series = _checked_series(params, x0, n_terms)
    g0 = float(series.g(x0))
    x_far = const.X_FAR_FACTOR * x_max
    system, sol, steps = _continue_from_critical(params, x0, x_far, n_terms)

    x_grid = np.concatenate([[0.0], np.geomspace(x0, x_max, n_grid - 1)])
    s_grid = np.log(x_grid[1:])
    bvp_tol = tol / 4.0
    for attempt in range(MAX_REFINEMENTS + 1):
        sol = _collocate(system, sol.x, sol.y, bvp_tol)
        g, gp, gpp = system.physical(sol, s_grid)
        residual = equation_residual(x_grid[1:], g, gp, gpp, params)[1:]
        residual_sup = float(np.max(residual))
        if residual_sup <= 10.0 * tol:
            break
        bvp_tol /= 4.0
    else:
        log.warning('value ODE residual {:.3g} above target {:.3g}'.format(residual_sup, 10 * tol))

    if not (np.all(np.isfinite(g)) and np.all(np.isfinite(gp))):
        raise NumericalBlowupError('non-finite value function')
    lo, hi = float(gp.min()), float(gp.max())
    if lo < -const.GPRIME_GUARD or hi > 1.0 + const.GPRIME_GUARD:
        raise MonotonicityError("g' left [0, 1]: range [{:.3g}, {:.3g}]".format(lo, hi))

    g = np.concatenate([[0.0], g])
    gp = np.concatenate([[1.0], np.clip(gp, 0.0, 1.0)])
    gpp = np.concatenate([[-np.inf], gpp])
    g[1], gp[1], gpp[1] = g0, float(series.g_prime(x0)), float(series.g_second(x0))

    meta = {'method': 'collocation', 'x_far': x_far, 'continuation_steps': steps,
            'nodes': int(len(sol.x)), 'iterations': int(sol.niter), 'tol': tol,
            'collocation_tol': bvp_tol}
    return ValueFunction(params=params, x_grid=x_grid, g=g, g_prime=gp,
                         x_series_cutoff=x0, residual_sup=residual_sup,
                         series_coefficients=series.coefficients, g_second=gpp,
                         solver_meta=meta)


@dataclass(frozen=True, eq=False)
class ValueFunction:
    """Grid representation of ``g`` and ``g'`` on ``x = Phi/S``

    Instances are immutable and safe to share between threads.

    :param params: market the function was solved for
    :param x_grid: increasing, ``x_grid[0] = 0``, ``x_grid[1]`` is the series cutoff
    :param g: values of ``g``
    :param g_prime: values of ``g'``
    :param x_series_cutoff: the series is used on ``[0, x_series_cutoff]``
    :param residual_sup: largest scaled equation residual beyond the cutoff
    :param series_coefficients: boundary-layer coefficients ``a_1..a_n``
    :param g_second: values of ``g''`` (``-inf`` at 0); estimated from ``g'`` when omitted
    """
    params: MarketParams
    x_grid: np.ndarray
    g: np.ndarray
    g_prime: np.ndarray
    x_series_cutoff: float
    residual_sup: float
    series_coefficients: tuple
    g_second: np.ndarray = None
    solver_meta: dict = field(default_factory=dict)

    def __post_init__(self):
        arrays = {}
        for name in ('x_grid', 'g', 'g_prime'):
            arrays[name] = np.array(getattr(self, name), dtype=float)
        x = arrays['x_grid']
        if x.ndim != 1 or len(x) < 3 or x[0] != 0.0 or not np.all(np.diff(x) > 0):
            raise InvalidInputError('x_grid must start at 0, be increasing and have >= 3 points')
        if arrays['g'].shape != x.shape or arrays['g_prime'].shape != x.shape:
            raise InvalidInputError('g and g_prime must match x_grid')
        if self.g_second is None:
            gpp = np.gradient(arrays['g_prime'], x, edge_order=2)
            gpp[0] = -np.inf
        else:
            gpp = np.array(self.g_second, dtype=float)
        arrays['g_second'] = gpp
        for name, value in arrays.items():
            value.flags.writeable = False
            object.__setattr__(self, name, value)
        object.__setattr__(self, 'series_coefficients', tuple(map(float, self.series_coefficients)))
        object.__setattr__(self, '_series', BoundaryLayerSeries(self.series_coefficients))
        object.__setattr__(self, '_g_prime_interp',
                           interpolate.PchipInterpolator(x[1:], arrays['g_prime'][1:]))
        object.__setattr__(self, '_g_interp', interpolate.CubicHermiteSpline(
            x[1:], arrays['g'][1:], arrays['g_prime'][1:]))

    @property
    def x_max(self):
        return float(self.x_grid[-1])

    @property
    def series(self):
        return self._series

    def to_dict(self):
        return {'params': self.params.to_dict(), 'x_series_cutoff': self.x_series_cutoff,
                'x': self.x_grid, 'g': self.g, 'g_prime': self.g_prime, 'g_second': self.g_second,
                'residual_sup': self.residual_sup,
                'series_coefficients': list(self.series_coefficients),
                'solver_meta': self.solver_meta}

    @classmethod
    def from_dict(cls, d):
        try:
            return cls(params=MarketParams.from_dict(d['params']),
                       x_grid=d['x'], g=d['g'], g_prime=d['g_prime'],
                       g_second=[io.from_jsonable(v) for v in d['g_second']]
                       if 'g_second' in d else None,
                       x_series_cutoff=float(d['x_series_cutoff']),
                       residual_sup=float(io.from_jsonable(d['residual_sup'])),
                       series_coefficients=tuple(d['series_coefficients']),
                       solver_meta=d.get('solver_meta', {}))
        except (KeyError, TypeError) as e:
            raise InvalidInputError('malformed value function document: {}'.format(e)) from e

    def to_json(self, path):
        io.write_json(path, self.to_dict())

    @classmethod
    def from_json(cls, path):
        return cls.from_dict(io.read_json(path))

    def to_csv(self, path):
        io.write_csv(path, ['x', 'g', 'g_prime'], [self.x_grid, self.g, self.g_prime])


def _check_x(x):
    x = np.asarray(x, dtype=float)
    if np.any(np.isnan(x)) or np.any(x < 0):
        raise InvalidInputError('x must be >= 0')
    return x


def g_prime_at(vf, x):
    """``g'(x)`` for any ``x >= 0``, in ``[0, 1]`` and nonincreasing in `x`

    The series serves ``[0, x_series_cutoff]``, a monotone cubic interpolant of the grid the range
    up to ``x_max`` and the last grid value everything beyond.
    """
    x = _check_x(x)
    flat = np.atleast_1d(x)
    out = np.empty(flat.shape)
    near = flat <= vf.x_series_cutoff
    far = flat > vf.x_max
    mid = ~(near | far)
    out[near] = vf.series.g_prime(flat[near])
    out[mid] = vf._g_prime_interp(flat[mid])
    out[far] = vf.g_prime[-1]
    np.clip(out, 0.0, 1.0, out=out)
    return out.reshape(x.shape) if x.ndim else float(out[0])


def g_at(vf, x):
    """``g(x)`` for any ``x >= 0``

    Cubic Hermite interpolation of ``(g, g')`` on the grid, the series below the cutoff and
    linear continuation with the last slope beyond ``x_max``.
    """
    x = _check_x(x)
    flat = np.atleast_1d(x)
    out = np.empty(flat.shape)
    near = flat <= vf.x_series_cutoff
    far = flat > vf.x_max
    mid = ~(near | far)
    out[near] = vf.series.g(flat[near])
    out[mid] = vf._g_interp(flat[mid])
    out[far] = vf.g[-1] + vf.g_prime[-1] * (flat[far] - vf.x_max)
    return out.reshape(x.shape) if x.ndim else float(out[0])


def value_of(vf, phi0, s0):
    """Value ``S0^2 g(Phi0 / S0)`` of holding `phi0` shares at price `s0`"""
    if s0 <= 0 or phi0 < 0:
        raise InvalidInputError('s0 must be > 0 and phi0 >= 0')
    return s0 ** 2 * g_at(vf, phi0 / s0)


def lower_bound(x, params):
    """Value of selling at the ramp rate ``-2t`` until ``t = sqrt(x)``

    ``x exp(mu sqrt(x)) - (2 Lambda / 3) x^(3/2)`` bounds ``g(x)`` from below.
    """
    x = _check_x(x)
    root = np.sqrt(x)
    return x * np.exp(params.mu * root) - (2.0 * params.lambda_impact / 3.0) * x * root


def martingale_residual(vf):
    """Scaled residual of the differentiated equation on the grid beyond the cutoff

    ``(sigma^2/2) x^2 g''' - mu x g'' + mu g' - (1 - g') g'' / Lambda = 0`` is what makes
    ``S g'(Phi/S)`` a local martingale along the optimal inventory. ``g'''`` is a finite difference
    of the stored ``g''``.

    :return: residuals at ``x_grid[2:]``
    """
    x = vf.x_grid[1:]
    gp, gpp = vf.g_prime[1:], vf.g_second[1:]
    gppp = np.gradient(gpp, x, edge_order=2)
    mu = vf.params.mu
    terms = (0.5 * vf.params.sigma ** 2 * x ** 2 * gppp, -mu * x * gpp, mu * gp,
             -(1.0 - gp) * gpp / vf.params.lambda_impact)
    residual = np.abs(sum(terms)) / (1.0 + sum(np.abs(t) for t in terms))
    return residual[1:]


@dataclass(frozen=True)
class ValidationReport:
    monotone: bool
    concave: bool
    residual_sup: float
    bounds_ok: bool
    lower_bound_ok: bool

    @property
    def ok(self):
        return self.monotone and self.concave and self.bounds_ok and self.lower_bound_ok

    def to_dict(self):
        return {'monotone': self.monotone, 'concave': self.concave,
                'residual_sup': self.residual_sup, 'bounds_ok': self.bounds_ok,
                'lower_bound_ok': self.lower_bound_ok, 'ok': self.ok}


def validate(vf, tol=const.TOL_CONCAVITY):
    """Check the shape properties of `vf`

    The residual is recomputed from the stored grid, so hand-modified grids are judged on their
    own values.

    :rtype: ValidationReport
    """
    x, g, gp = vf.x_grid, vf.g, vf.g_prime

    monotone = bool(np.all(np.diff(g) >= -tol))
    slopes = np.diff(g) / np.diff(x)
    concave = bool(np.all(np.diff(slopes) <= tol) and np.all(np.diff(gp) <= tol))
    bounds_ok = bool(g[0] == 0.0 and gp[0] == 1.0
                     and np.all(g >= -tol) and np.all(g <= x + tol)
                     and np.all(gp >= 0.0) and np.all(gp <= 1.0))
    lower_bound_ok = bool(np.all(g >= lower_bound(x, vf.params) - tol))

    residual = equation_residual(x[2:], g[2:], gp[2:], vf.g_second[2:], vf.params)
    return ValidationReport(monotone=monotone, concave=concave,
                            residual_sup=float(np.max(residual)),
                            bounds_ok=bounds_ok, lower_bound_ok=lower_bound_ok)
