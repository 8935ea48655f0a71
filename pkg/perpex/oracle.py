"""Finite-horizon HJB oracle

Marches the reduced equation

    u_t + (sigma^2 x^2 / 2) u_xx - (mu + sigma^2) x u_x + (2 mu + sigma^2) u
        + max(0, 1 - u_x)^2 / (2 Lambda) = 0,        u(T, x) = 0,  u(t, 0) = 0

backwards from the horizon with explicit Euler steps. Diffusion uses central second differences,
the drift and the control term second-order upwind differences. The control maximising the
quadratic gain is clipped to ``psi <= 0``, which is where the positive part comes from. At
``x_max`` the second difference of the last interior node is reused. The time loop runs in a
numba-compiled kernel.

Leftover inventory is worthless at ``T``, so ``u(0, .)`` approaches ``g`` from below as the
horizon grows. The oracle shares no machinery with the collocation solver.
"""
import logging
import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from . import const
from .closedform import CriticalParams, g_critical
from .exceptions import CFLError, InvalidInputError, SchemeFailureError
from .market import MarketParams
from .ode import ValueFunction, _require_negative_drift, equation_residual, g_at
from .util import io
from .util.decorators import logged

__all__ = ['HJBGrid', 'march_hjb', 'stable_step', 'policy_from_grid', 'max_deviation',
           'stationary_residual', 'summary']

log = logging.getLogger('perpex')

#: tolerated decrease of u in x before the march is declared failed
TOL_MONOTONE = 1e-8

#: tolerated excursion of u outside [0, x]
TOL_BOUNDS = 1e-4


@dataclass(frozen=True, eq=False)
class HJBGrid:
    """Stored time levels of a march

    :param x_grid: uniform on ``[0, x_max]``
    :param t_grid: increasing on ``[0, T]``
    :param u: ``(len(t_grid), len(x_grid))``; ``u[-1] = 0``
    """
    params: MarketParams
    x_grid: np.ndarray
    t_grid: np.ndarray
    u: np.ndarray
    scheme_meta: dict = field(default_factory=dict)

    @property
    def horizon(self):
        return float(self.t_grid[-1])

    @property
    def u0(self):
        """``u(0, .)``"""
        return self.u[0]

    def to_csv(self, path):
        t, x = np.meshgrid(self.t_grid, self.x_grid, indexing='ij')
        io.write_csv(path, ['t', 'x', 'u'], [t.ravel(), x.ravel(), self.u.ravel()])


def stable_step(params, x_max, nx, cfl=const.ORACLE_CFL):
    """Largest stable time step of the explicit march"""
    dx = x_max / nx
    var = params.sigma ** 2
    rate = (var * x_max ** 2 / dx ** 2
            + 1.5 * abs(params.mu + var) * x_max / dx
            + 1.5 / (params.lambda_impact * dx)
            + abs(2.0 * params.mu + var))
    return cfl / rate


@njit(nogil=True)
def _march_kernel(u, nt, dt, dx, diffusion, drift, gamma, k_gain, forward, save_steps, levels):
    """Explicit backward march of `u` in place; stores ``u`` after each step in `save_steps`

    Node 0 is held at 0. At the right edge ``u_xx`` is continued from the last interior node and
    the upwind ``u_x`` falls back to a backward difference.
    """
    n = u.shape[0] - 1
    rhs = np.empty(n + 1)
    saved = 1
    for step in range(1, nt + 1):
        for i in range(1, n + 1):
            if i == 1:
                ux = (u[1] - u[0]) / dx
            else:
                ux = (3.0 * u[i] - 4.0 * u[i - 1] + u[i - 2]) / (2.0 * dx)
            ux_adv = ux
            if forward:
                if i < n - 1:
                    ux_adv = (-3.0 * u[i] + 4.0 * u[i + 1] - u[i + 2]) / (2.0 * dx)
                elif i == n - 1:
                    ux_adv = (u[n] - u[n - 1]) / dx
            j = i if i < n else n - 1
            uxx = (u[j + 1] - 2.0 * u[j] + u[j - 1]) / (dx * dx)
            gain = max(0.0, 1.0 - ux)
            rhs[i] = diffusion[i] * uxx - drift[i] * ux_adv + gamma * u[i] + k_gain * gain * gain
        for i in range(1, n + 1):
            u[i] += dt * rhs[i]
        if saved < save_steps.shape[0] and step == save_steps[saved]:
            levels[saved, :] = u
            saved += 1
    return saved


@logged
def march_hjb(params, horizon, x_max, nx, nt=None, cfl=const.ORACLE_CFL,
              saved_levels=const.ORACLE_SAVED_LEVELS):
    """March ``u`` from ``u(T, .) = 0`` back to ``t = 0``

    :param MarketParams params: model constants, ``mu < 0``
    :param float horizon: ``T``
    :param float x_max: right end of the grid
    :param int nx: number of x intervals
    :param int nt: number of time steps; the smallest stable count when omitted
    :param float cfl: safety factor of the stability bound
    :param int saved_levels: time levels kept (the terminal level included)
    :rtype: HJBGrid
    :raises CFLError: `nt` violates the stability bound
    :raises SchemeFailureError: ``u`` left ``[0, x]``, lost monotonicity in x or became non-finite
    """
    _require_negative_drift(params)
    if not (horizon > 0 and x_max > 0):
        raise InvalidInputError('horizon and x_max must be > 0')
    if nx < 4:
        raise InvalidInputError('nx must be >= 4')

    dx = x_max / nx
    dt_max = stable_step(params, x_max, nx, cfl)
    required = int(math.ceil(horizon / dt_max))
    if nt is None:
        nt = required
    elif nt < required:
        raise CFLError('time step {:.3g} exceeds the stable step {:.3g}'
                       .format(horizon / nt, dt_max), required)
    dt = horizon / nt

    x = np.linspace(0.0, x_max, nx + 1)
    var = params.sigma ** 2
    beta = params.mu + var
    gamma = 2.0 * params.mu + var
    diffusion = 0.5 * var * x ** 2
    drift = beta * x
    k_gain = 1.0 / (2.0 * params.lambda_impact)

    saved_levels = max(2, min(int(saved_levels), nt + 1))
    save_steps = np.unique(np.linspace(0, nt, saved_levels).round().astype(np.int64))
    levels = np.zeros((len(save_steps), nx + 1))
    log.debug('oracle march: nx={} nt={} dt={:.3g} ({:.2f} of stable step)'
              .format(nx, nt, dt, dt / dt_max * cfl))

    u = np.zeros(nx + 1)
    _march_kernel(u, nt, dt, dx, diffusion, drift, gamma, k_gain, beta < 0, save_steps, levels)

    for k, level in enumerate(levels):
        if not np.all(np.isfinite(level)):
            raise SchemeFailureError('non-finite values at step {}'.format(save_steps[k]))
        excess = max(float(np.max(level - x)), float(-np.min(level)))
        if excess > TOL_BOUNDS:
            raise SchemeFailureError('u left [0, x] by {:.3g} at step {}'
                                     .format(excess, save_steps[k]))
    drop = float(np.min(np.diff(u)))
    if drop < -TOL_MONOTONE:
        raise SchemeFailureError('u(0, .) decreases in x by {:.3g}'.format(-drop))

    t_grid = horizon - save_steps[::-1] * dt
    t_grid[0] = 0.0
    meta = {'nx': nx, 'nt': nt, 'dx': dx, 'dt': dt, 'cfl_ratio': dt / dt_max * cfl,
            'scheme': 'explicit euler, upwind order 2'}
    return HJBGrid(params, x, t_grid, levels[::-1].copy(), meta)


def policy_from_grid(grid, t, x):
    """Feedback ``psi = phi/S = -max(0, 1 - u_x)/Lambda`` at ``(t, x)``

    ``u_x`` is taken by centered differences on the stored levels and interpolated linearly in
    ``t`` and ``x``.
    """
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    if np.any(t < 0) or np.any(t > grid.horizon) or np.any(x < 0) or np.any(x > grid.x_grid[-1]):
        raise InvalidInputError('(t, x) outside the grid')

    ux = np.gradient(grid.u, grid.x_grid, axis=1)
    t, x = np.broadcast_arrays(t, x)
    k = np.clip(np.searchsorted(grid.t_grid, t, side='right') - 1, 0, len(grid.t_grid) - 2)
    w = (t - grid.t_grid[k]) / (grid.t_grid[k + 1] - grid.t_grid[k])
    flat_k, flat_w, flat_x = k.ravel(), w.ravel(), x.ravel()
    values = np.array([
        (1.0 - wi) * np.interp(xi, grid.x_grid, ux[ki]) + wi * np.interp(xi, grid.x_grid, ux[ki + 1])
        for ki, wi, xi in zip(flat_k, flat_w, flat_x)])
    psi = -np.maximum(0.0, 1.0 - values) / grid.params.lambda_impact
    return psi.reshape(t.shape) if t.ndim else float(psi[0])


def _reference_values(reference, x):
    if isinstance(reference, ValueFunction):
        return g_at(reference, x)
    if isinstance(reference, CriticalParams):
        return g_critical(x, reference)
    if callable(reference):
        return np.asarray(reference(x), dtype=float)
    raise InvalidInputError('reference must be a ValueFunction, CriticalParams or callable')


def _window(grid, x_lo, x_hi):
    mask = (grid.x_grid >= x_lo) & (grid.x_grid <= x_hi)
    if not mask.any():
        raise InvalidInputError('no grid points in [{}, {}]'.format(x_lo, x_hi))
    return mask


def max_deviation(grid, reference, x_lo=0.1, x_hi=5.0):
    """``max |u(0, x) - g(x)|`` over grid points in ``[x_lo, x_hi]``"""
    mask = _window(grid, x_lo, x_hi)
    x = grid.x_grid[mask]
    return float(np.max(np.abs(grid.u0[mask] - _reference_values(reference, x))))


def stationary_residual(grid, x_lo=0.1, x_hi=5.0, level=0):
    """Largest scaled residual of the stationary equation for a stored level

    Tends to zero as the horizon grows.
    """
    u = grid.u[level]
    x = grid.x_grid
    ux = np.gradient(u, x, edge_order=2)
    uxx = np.gradient(ux, x, edge_order=2)
    mask = _window(grid, x_lo, x_hi)
    return float(np.max(equation_residual(x[mask], u[mask], ux[mask], uxx[mask], grid.params)))


def summary(grid, reference, x_lo=0.1, x_hi=5.0):
    """Summary document of a march compared with `reference`"""
    params = grid.params
    return {'max_deviation': max_deviation(grid, reference, x_lo, x_hi),
            'x_lo': x_lo, 'x_hi': x_hi, 'T': grid.horizon,
            'tail_bound': params.phi0 * params.s0 * math.exp(params.mu * grid.horizon),
            'stationary_residual': stationary_residual(grid, x_lo, x_hi),
            'psi_clipped': bool(np.any(np.gradient(grid.u0, grid.x_grid) > 1.0)),
            'x_max': float(grid.x_grid[-1]), **grid.scheme_meta}
