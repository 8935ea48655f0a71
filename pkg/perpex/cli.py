"""Command line front end

Every subcommand reads a :class:`~perpex.config.RunConfig`, writes its artifacts and the effective
configuration (``run_config.json``) into the output directory, and prints one JSON summary line
on stdout. Diagnostics go to stderr. The exit code is taken from the error that stopped the run,
see :mod:`perpex.exceptions`.
"""
import argparse
import logging
import os
import sys

import numpy as np

from . import __version__, closedform, montecarlo, ode, oracle
from .config import load_config
from .exceptions import (EXIT_OK, EXIT_VALIDATION, ConfigError, MismatchError,
                         MissingArtifactError, PerpexError)
from .market import Regime, regime, simulate_gbm, uniform_grid
from .strategy import policy_from_spec, simulate_execution
from .util import io

log = logging.getLogger('perpex')

#: flag destination -> dotted configuration field, shared by every subcommand
COMMON_FIELDS = {
    'seed': 'seed',
    'out': 'output_dir',
    'value_function': 'value_function',
    'mu': 'params.mu',
    'sigma': 'params.sigma',
    'lambda_impact': 'params.lambda_impact',
    's0': 'params.s0',
    'phi0': 'params.phi0',
}

#: per-subcommand flags -> dotted configuration field
COMMAND_FIELDS = {
    'solve': {'tol': 'solver.tol', 'x_max': 'solver.x_max'},
    'closed-form': {},
    'simulate': {'horizon': 'simulate.horizon', 'stream': 'simulate.stream'},
    'estimate': {'horizon': 'montecarlo.horizon', 'n_paths': 'montecarlo.n_paths',
                 'workers': 'montecarlo.workers'},
    'compare': {'horizon': 'montecarlo.horizon', 'n_paths': 'montecarlo.n_paths',
                'workers': 'montecarlo.workers'},
    'oracle': {'horizon': 'oracle.horizon', 'nx': 'oracle.nx', 'tol': 'solver.tol'},
}


def _common_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument('--config', help='JSON run configuration')
    common.add_argument('--seed', type=int, help='global random seed (unsigned 64-bit)')
    common.add_argument('--out', help='output directory')
    common.add_argument('--value-function', dest='value_function',
                        help='value_function.json written by the solve command')
    common.add_argument('--mu', type=float, help='drift')
    common.add_argument('--sigma', type=float, help='volatility')
    common.add_argument('--lambda', dest='lambda_impact', type=float,
                        help='temporary impact coefficient')
    common.add_argument('--s0', type=float, help='initial price')
    common.add_argument('--phi0', type=float, help='initial inventory')
    common.add_argument('-v', '--verbose', action='count', default=0,
                        help='log to stderr (-vv for debug output)')
    return common


def build_parser():
    parser = argparse.ArgumentParser(
        prog='perpex', description='Optimal infinite-horizon execution under linear impact')
    parser.add_argument('--version', action='version', version='%(prog)s ' + __version__)
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True
    common = _common_parser()

    p = sub.add_parser('solve', parents=[common], help='solve the value ODE')
    p.add_argument('--tol', type=float, help='target residual')
    p.add_argument('--x-max', dest='x_max', type=float, help='right end of the grid')

    sub.add_parser('closed-form', parents=[common], help='tabulate the critical-case solution')

    p = sub.add_parser('simulate', parents=[common], help='execute a policy along one path')
    p.add_argument('--horizon', type=float)
    p.add_argument('--stream', type=int, help='path index')

    for name, text in (('estimate', 'Monte Carlo value of a policy'),
                       ('compare', 'compare policies on common random numbers')):
        p = sub.add_parser(name, parents=[common], help=text)
        p.add_argument('--horizon', type=float)
        p.add_argument('--n-paths', dest='n_paths', type=int)
        p.add_argument('--workers', type=int)

    p = sub.add_parser('oracle', parents=[common], help='march the finite-horizon HJB equation')
    p.add_argument('--horizon', type=float)
    p.add_argument('--nx', type=int)
    p.add_argument('--tol', type=float, help='target residual of the reference solve')
    return parser


def _overrides(args):
    mapping = dict(COMMON_FIELDS, **COMMAND_FIELDS[args.command])
    return {path: getattr(args, dest, None) for dest, path in mapping.items()}


def _configure_logging(verbosity):
    level = {0: logging.WARNING, 1: logging.INFO}.get(verbosity, logging.DEBUG)
    logging.basicConfig(level=level, stream=sys.stderr,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s')


def _optimal_source(config):
    """Value function file if configured, the closed form in the critical case"""
    if config.value_function:
        if not os.path.exists(config.value_function):
            raise MissingArtifactError('value function not found: {}'
                                       .format(config.value_function))
        vf = ode.ValueFunction.from_json(config.value_function)
        if not vf.params.same_dynamics(config.params):
            raise MismatchError('{} was solved for other market parameters'
                                .format(config.value_function))
        return vf
    if regime(config.params).critical:
        return closedform.CriticalParams.from_params(config.params)
    return None


def _require_source(config):
    source = _optimal_source(config)
    if source is None:
        raise MissingArtifactError('the optimal policy needs a value function: run '
                                   '`perpex solve` and pass --value-function')
    return source


def _policy(spec, config):
    source = _require_source(config) if spec['kind'] == 'optimal' else None
    return policy_from_spec(spec, source)


def _out(config, name):
    return os.path.join(config.output_dir, name)


def cmd_solve(config):
    vf = ode.integrate_value_ode(config.params, x_max=config.solver.x_max, tol=config.solver.tol,
                                 x0=config.solver.x_series_cutoff,
                                 n_grid=config.solver.grid_points)
    vf.to_json(_out(config, 'value_function.json'))
    vf.to_csv(_out(config, 'value_function.csv'))
    report = ode.validate(vf)
    passed = report.ok and vf.residual_sup <= 10.0 * config.solver.tol
    summary = {'command': 'solve', 'residual_sup': vf.residual_sup,
               'x_series_cutoff': vf.x_series_cutoff, 'validation': report.to_dict(),
               'value': ode.value_of(vf, config.params.phi0, config.params.s0),
               'files': ['value_function.json', 'value_function.csv']}
    return summary, EXIT_OK if passed else EXIT_VALIDATION


def cmd_closed_form(config):
    p = closedform.CriticalParams.from_params(config.params)
    cf = config.closed_form
    y = np.geomspace(cf.y_min, cf.y_max, cf.n_y)
    x = np.linspace(0.0, cf.x_max, cf.n_x)
    closedform.write_h_table(_out(config, 'bessel_ratio.csv'), y, p)
    closedform.write_g_table(_out(config, 'value_critical.csv'), x, p)
    summary = {'command': 'closed-form', 'h_at_scale': closedform.h_ratio(p.scale, p),
               'value': closedform.value_critical(config.params.phi0, config.params.s0, p),
               'files': ['bessel_ratio.csv', 'value_critical.csv']}
    return summary, EXIT_OK


def _horizon(config, horizon, source, field):
    if horizon is not None:
        return horizon
    if regime(config.params).regime is not Regime.NegativeDrift:
        raise ConfigError('is required unless mu < 0', field)
    if source is None:
        source = _require_source(config)
    return montecarlo.default_horizon(config.params,
                                      montecarlo.reference_value(config.params, source))


def cmd_simulate(config):
    sim = config.simulate
    policy = _policy(sim.policy, config)
    source = getattr(policy, 'source', None) or _optimal_source(config)
    horizon = _horizon(config, sim.horizon, source, 'simulate.horizon')
    path = simulate_gbm(config.params, uniform_grid(horizon, sim.n_steps), seed=config.seed,
                        stream=sim.stream)
    result = simulate_execution(policy, path, config.params.phi0, config.params,
                                substeps=sim.substeps,
                                drift=config.params.mu if sim.drift_compensation else 0.0,
                                m_source=source)
    path.to_csv(_out(config, 'price_path.csv'))
    result.to_csv(_out(config, 'execution.csv'))
    summary = dict(result.summary(), command='simulate', T=horizon,
                   files=['price_path.csv', 'execution.csv'])
    return summary, EXIT_OK


def _mc_kwargs(mc):
    return dict(n_paths=mc.n_paths, n_steps=mc.n_steps, substeps=mc.substeps,
                antithetic=mc.antithetic, block=mc.block, workers=mc.workers,
                drift_compensation=mc.drift_compensation)


def cmd_estimate(config):
    mc = config.montecarlo
    policy = _policy(mc.policy, config)
    source = getattr(policy, 'source', None) or _optimal_source(config)
    horizon = _horizon(config, mc.horizon, source, 'montecarlo.horizon')
    estimate = montecarlo.estimate_value(config.params, policy, horizon=horizon,
                                         seed=config.seed, **_mc_kwargs(mc))
    estimate.to_json(_out(config, 'estimate.json'))
    summary = dict(estimate.to_dict(), command='estimate', files=['estimate.json'])
    if source is not None:
        summary['reference_value'] = montecarlo.reference_value(config.params, source)
    return summary, EXIT_OK


def cmd_compare(config):
    mc = config.montecarlo
    policies = [_policy(spec, config) for spec in mc.policies]
    table = montecarlo.compare_policies(config.params, policies, horizon=mc.horizon,
                                        seed=config.seed, **_mc_kwargs(mc))
    table.to_csv(_out(config, 'comparison.csv'))
    summary = dict(table.to_dict(), command='compare', files=['comparison.csv'])
    return summary, EXIT_OK


def cmd_oracle(config):
    oc = config.oracle
    reference = _optimal_source(config)
    if reference is None:
        reference = ode.integrate_value_ode(config.params, x_max=config.solver.x_max,
                                            tol=config.solver.tol,
                                            x0=config.solver.x_series_cutoff,
                                            n_grid=config.solver.grid_points)
    grid = oracle.march_hjb(config.params, oc.horizon, oc.x_max, oc.nx, nt=oc.nt, cfl=oc.cfl,
                            saved_levels=oc.saved_levels)
    grid.to_csv(_out(config, 'hjb_grid.csv'))
    result = oracle.summary(grid, reference, oc.x_lo, oc.x_hi)
    io.write_json(_out(config, 'oracle_summary.json'), result)
    summary = dict(result, command='oracle', files=['hjb_grid.csv', 'oracle_summary.json'])
    return summary, EXIT_OK


COMMANDS = {
    'solve': cmd_solve,
    'closed-form': cmd_closed_form,
    'simulate': cmd_simulate,
    'estimate': cmd_estimate,
    'compare': cmd_compare,
    'oracle': cmd_oracle,
}


def main(argv=None):
    """Entry point of the ``perpex`` console script

    :return: process exit code
    """
    args = build_parser().parse_args(argv)
    _configure_logging(args.verbose)
    try:
        config = load_config(args.config, _overrides(args))
        os.makedirs(config.output_dir, exist_ok=True)
        config.to_json(_out(config, 'run_config.json'))
        summary, code = COMMANDS[args.command](config)
    except PerpexError as e:
        log.error('{}: {}'.format(type(e).__name__, e))
        print('perpex {}: {}'.format(args.command, e), file=sys.stderr)
        return e.exit_code
    print(io.dumps(summary, sort_keys=True))
    return code


if __name__ == '__main__':
    sys.exit(main())
