"""Acceptance checks driven by fixture files

A fixture names a check, the market parameters, run settings and the expected values. Every
expected value records where it comes from (``provenance``) and how it is compared
(``relation``):

``abs``   ``|measured - value| <= tolerance``
``rel``   ``|measured - value| <= tolerance |value|``
``le``    ``measured <= value``
``ge``    ``measured >= value``

Fixtures run in parallel; the report lists them in name order.
"""
import glob
import logging
import math
import os
import time
import traceback
from dataclasses import dataclass, field

import numpy as np

from . import closedform, montecarlo, ode, oracle
from .closedform import CriticalParams
from .market import MarketParams
from .pool import WorkerPool
from .strategy import ExponentialRate, OptimalFeedback
from .util import io
from .util.decorators import logged

__all__ = ['Fixture', 'Entry', 'FixtureResult', 'Report', 'load_fixtures', 'run_fixture',
           'run_all', 'CHECKS']

log = logging.getLogger('perpex')

FIXTURE_DIR = os.path.join(os.path.dirname(__file__), 'fixtures')


@dataclass(frozen=True)
class Fixture:
    name: str
    check: str
    params: MarketParams
    settings: dict = field(default_factory=dict)
    expected: dict = field(default_factory=dict)
    slow: bool = False

    @classmethod
    def from_dict(cls, d):
        return cls(name=d['name'], check=d['check'], params=MarketParams.from_dict(d['params']),
                   settings=d.get('settings', {}), expected=d.get('expected', {}),
                   slow=bool(d.get('slow', False)))


@dataclass(frozen=True)
class Entry:
    quantity: str
    measured: float
    expected: float
    tolerance: float
    passed: bool
    provenance: str = ''


@dataclass(frozen=True)
class FixtureResult:
    name: str
    entries: tuple
    elapsed: float
    error: str = None

    @property
    def passed(self):
        return self.error is None and all(e.passed for e in self.entries)

    def to_dict(self):
        return {'name': self.name, 'passed': self.passed, 'elapsed': self.elapsed,
                'error': self.error, 'entries': [e.__dict__ for e in self.entries]}


@dataclass(frozen=True)
class Report:
    results: tuple

    @property
    def passed(self):
        return all(r.passed for r in self.results)

    def to_dict(self):
        return {'passed': self.passed, 'fixtures': [r.to_dict() for r in self.results]}

    def to_json(self, path):
        io.write_json(path, self.to_dict())

    def table(self):
        """Human-readable summary, one line per entry"""
        lines = ['{:<36} {:<28} {:>14} {:>14} {:>10}  {}'.format(
            'fixture', 'quantity', 'measured', 'expected', 'tolerance', 'result')]
        for r in self.results:
            if r.error is not None:
                lines.append('{:<36} {:<28} {}'.format(r.name, 'error', r.error.splitlines()[-1]))
            for e in r.entries:
                lines.append('{:<36} {:<28} {:>14.7g} {:>14.7g} {:>10.3g}  {}'.format(
                    r.name, e.quantity, e.measured, e.expected, e.tolerance,
                    'pass' if e.passed else 'FAIL'))
        return '\n'.join(lines)


def _compare(measured, spec):
    value = spec['value']
    tol = spec.get('tolerance', 0.0)
    relation = spec.get('relation', 'abs')
    if relation == 'abs':
        return abs(measured - value) <= tol
    if relation == 'rel':
        return abs(measured - value) <= tol * abs(value)
    if relation == 'le':
        return measured <= value
    if relation == 'ge':
        return measured >= value
    raise ValueError('unknown relation {!r}'.format(relation))


def _entry(fixture, key, measured):
    spec = fixture.expected[key]
    measured = float(measured)
    return Entry(key, measured, float(spec['value']), float(spec.get('tolerance', 0.0)),
                 bool(_compare(measured, spec)), spec.get('provenance', ''))


def _bracket(fixture, key, measured, target, tolerance):
    """Entry for a check whose tolerance is computed at run time"""
    provenance = fixture.expected.get(key, {}).get('provenance', '')
    return Entry(key, float(measured), float(target), float(tolerance),
                 bool(abs(measured - target) <= tolerance), provenance)


def _solve(fixture, params=None):
    s = fixture.settings
    return ode.integrate_value_ode(params or fixture.params, x_max=s.get('x_max', 50.0),
                                   tol=s.get('tol', 1e-10))


def check_closed_form_equivalence(fixture):
    s = fixture.settings
    vf = _solve(fixture)
    p = CriticalParams.from_params(fixture.params)
    x = np.geomspace(s['x_lo'], s['x_hi'], s['n_points'])
    diff = np.max(np.abs(ode.g_at(vf, x) - closedform.g_critical(x, p)))
    return [_entry(fixture, 'max_abs_diff', diff)]


def _partial_sum_ratio(q, n_terms):
    num = den = 0.0
    term = 1.0
    for n in range(n_terms):
        num += term / (n + 1)
        den += term
        term *= q / (n + 1) ** 2
    return num / den


def check_bessel_ratio(fixture):
    p = CriticalParams.from_params(fixture.params)
    h = closedform.h_ratio(p.scale, p)
    independent = _partial_sum_ratio(1.0, fixture.settings.get('n_terms', 20))
    return [_entry(fixture, 'h_at_scale', h),
            _entry(fixture, 'partial_sums', independent),
            _bracket(fixture, 'methods_agree', abs(h - independent), 0.0, 1e-12)]


def check_ode_residual(fixture):
    vf = _solve(fixture)
    return [_entry(fixture, 'residual_sup', vf.residual_sup),
            _entry(fixture, 'g0', vf.g[0]),
            _entry(fixture, 'g_prime0', vf.g_prime[0])]


def check_boundary_layer(fixture):
    x = fixture.settings['x']
    entries = []
    for i, d in enumerate(fixture.settings['param_sets']):
        params = MarketParams.from_dict(d)
        vf = _solve(fixture, params)
        layer = (1.0 - ode.g_prime_at(vf, x)) / math.sqrt(x)
        target = math.sqrt(2.0 * params.lambda_impact * abs(params.mu))
        tol = fixture.expected['layer_ratio']['tolerance'] * target
        entries.append(_bracket(fixture, 'layer_ratio[{}]'.format(i), layer, target, tol))
    return entries


def check_hjb_oracle(fixture):
    s = fixture.settings
    vf = _solve(fixture)
    grid = oracle.march_hjb(fixture.params, s['T'], s['x_max'], s['nx'])
    result = oracle.summary(grid, vf, s['x_lo'], s['x_hi'])
    return [_entry(fixture, 'max_deviation', result['max_deviation']),
            _entry(fixture, 'tail_bound', result['tail_bound'])]


def _mc_settings(s):
    return {k: s[k] for k in ('n_paths', 'n_steps', 'substeps', 'seed', 'antithetic', 'workers')
            if k in s}


def check_mc_optimality(fixture):
    vf = _solve(fixture)
    target = ode.value_of(vf, fixture.params.phi0, fixture.params.s0)
    estimate = montecarlo.estimate_value(fixture.params, OptimalFeedback(vf),
                                         **_mc_settings(fixture.settings))
    tol = 2.0 * estimate.std_error + estimate.tail_bound
    return [_bracket(fixture, 'mc_value', estimate.mean, target, tol)]


def check_dominance(fixture):
    s = fixture.settings
    vf = _solve(fixture)
    policies = [OptimalFeedback(vf)] + [ExponentialRate(c) for c in s['c_values']]
    table = montecarlo.compare_policies(fixture.params, policies, **_mc_settings(s))
    provenance = fixture.expected['paired_difference']['provenance']
    return [Entry('paired_difference[{}]'.format(row.policy), row.diff, 0.0, 2.0 * row.se_diff,
                  row.diff <= 2.0 * row.se_diff, provenance)
            for row in table.rows[1:]]


def check_martingale_regime(fixture):
    s = fixture.settings
    check = montecarlo.martingale_check(fixture.params, n_values=tuple(s['n_values']),
                                        horizon_factor=s.get('horizon_factor', 20.0),
                                        **_mc_settings(s))
    last = check.estimates[-1]
    return [_entry(fixture, 'increasing', float(check.increasing)),
            _entry(fixture, 'bounded', float(check.bounded)),
            _entry(fixture, 'largest_n_fraction', last.mean / check.upper)]


def check_positive_drift(fixture):
    s = fixture.settings
    check = montecarlo.positive_drift_check(fixture.params, horizon=s['T'], **_mc_settings(s))
    return [_bracket(fixture, 'revenue_rate', check.revenue_rate, check.expected_rate,
                     2.0 * check.revenue_rate_se),
            _entry(fixture, 'squared_rate_integral', check.squared_rate_integral),
            _bracket(fixture, 'impact_cost', check.impact_cost, check.impact_cost_exact,
                     fixture.expected['impact_cost']['tolerance'] * check.impact_cost_exact)]


def check_supermartingale(fixture):
    vf = _solve(fixture)
    profile = montecarlo.supermartingale_profile(fixture.params, vf,
                                                 **_mc_settings(fixture.settings))
    return [_entry(fixture, 'nonincreasing', float(profile.nonincreasing)),
            _bracket(fixture, 'shadow_revenue', profile.shadow_revenue, profile.target,
                     2.0 * profile.shadow_revenue_se + profile.tail_bound)]


def check_scaling(fixture):
    s = fixture.settings
    big = fixture.params
    small = big.with_position(phi0=big.phi0 / 4.0, s0=big.s0 / 4.0)
    vf = _solve(fixture)
    solve_ratio = ode.value_of(vf, big.phi0, big.s0) / ode.value_of(vf, small.phi0, small.s0)
    kwargs = dict(_mc_settings(s), horizon=s['T'])
    a = montecarlo.estimate_value(big, OptimalFeedback(vf), **kwargs)
    b = montecarlo.estimate_value(small, OptimalFeedback(vf), **kwargs)
    return [_entry(fixture, 'solve_ratio', solve_ratio),
            _entry(fixture, 'mc_ratio', a.mean / b.mean),
            _entry(fixture, 'se_ratio', a.std_error / b.std_error)]


CHECKS = {
    'closed_form_equivalence': check_closed_form_equivalence,
    'bessel_ratio': check_bessel_ratio,
    'ode_residual': check_ode_residual,
    'boundary_layer': check_boundary_layer,
    'hjb_oracle': check_hjb_oracle,
    'mc_optimality': check_mc_optimality,
    'dominance': check_dominance,
    'martingale_regime': check_martingale_regime,
    'positive_drift': check_positive_drift,
    'supermartingale': check_supermartingale,
    'scaling': check_scaling,
}


def load_fixtures(directory=FIXTURE_DIR):
    """Read every ``*.json`` fixture in `directory`, sorted by name"""
    fixtures = [Fixture.from_dict(io.read_json(path))
                for path in glob.glob(os.path.join(directory, '*.json'))]
    return sorted(fixtures, key=lambda f: f.name)


def run_fixture(fixture):
    """Run one fixture; errors become part of the result"""
    start = time.perf_counter()
    try:
        entries = tuple(CHECKS[fixture.check](fixture))
        error = None
    except Exception:
        log.exception('fixture {} failed'.format(fixture.name))
        entries, error = (), traceback.format_exc()
    return FixtureResult(fixture.name, entries, time.perf_counter() - start, error)


@logged
def run_all(fixtures=None, include_slow=True, workers=None):
    """Run `fixtures` (all bundled ones by default) in parallel

    :rtype: Report
    """
    if fixtures is None:
        fixtures = load_fixtures()
    fixtures = sorted((f for f in fixtures if include_slow or not f.slow), key=lambda f: f.name)
    with WorkerPool(workers) as pool:
        results = pool.starmap(run_fixture, [(f,) for f in fixtures])
    report = Report(tuple(results))
    log.info('regression: {}/{} fixtures passed'
             .format(sum(r.passed for r in results), len(results)))
    return report


def main(argv=None):
    """Entry point of the ``perpex-regression`` console script"""
    import argparse
    import sys

    parser = argparse.ArgumentParser(prog='perpex-regression',
                                     description='run the bundled acceptance fixtures')
    parser.add_argument('--fast', action='store_true', help='skip fixtures marked slow')
    parser.add_argument('--workers', type=int)
    parser.add_argument('--out', help='write the JSON report here')
    parser.add_argument('-v', '--verbose', action='store_true')
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        stream=sys.stderr)

    report = run_all(include_slow=not args.fast, workers=args.workers)
    if args.out:
        report.to_json(args.out)
    print(report.table())
    return 0 if report.passed else 4
