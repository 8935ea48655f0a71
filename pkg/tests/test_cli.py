import json
import os

import pytest

from perpex import cli
from perpex.config import load_config
from perpex.exceptions import EXIT_ARTIFACT, EXIT_CONFIG, EXIT_OK, EXIT_REGIME

CRITICAL = ['--mu', '-0.125', '--sigma', '0.5', '--lambda', '1']


def run(capsys, *argv):
    code = cli.main(list(argv))
    out = capsys.readouterr().out.strip()
    return code, (json.loads(out) if out else None)


class TestParser:
    def test_subcommands(self):
        args = cli.build_parser().parse_args(['estimate', '--n-paths', '10', '--lambda', '2'])
        assert args.command == 'estimate'
        assert args.n_paths == 10
        assert args.lambda_impact == 2.0

    def test_overrides(self):
        args = cli.build_parser().parse_args(['solve', '--tol', '1e-8', '--seed', '3'])
        overrides = cli._overrides(args)
        assert overrides['solver.tol'] == 1e-8
        assert overrides['seed'] == 3
        assert overrides['params.mu'] is None

    def test_requires_command(self):
        with pytest.raises(SystemExit):
            cli.build_parser().parse_args([])


class TestCommands:
    def test_solve(self, tmp_path, capsys):
        out = str(tmp_path)
        code, summary = run(capsys, 'solve', '--out', out, '--tol', '1e-8', *CRITICAL)
        assert code == EXIT_OK
        assert summary['command'] == 'solve'
        assert summary['validation']['ok'] is True
        for name in ('value_function.json', 'value_function.csv', 'run_config.json'):
            assert os.path.exists(os.path.join(out, name))
        config = load_config(os.path.join(out, 'run_config.json'))
        assert config.solver.tol == 1e-8
        assert config.params.mu == -0.125

    def test_closed_form(self, tmp_path, capsys):
        code, summary = run(capsys, 'closed-form', '--out', str(tmp_path), *CRITICAL)
        assert code == EXIT_OK
        assert summary['h_at_scale'] == pytest.approx(0.697774657964)
        assert os.path.exists(str(tmp_path / 'bessel_ratio.csv'))
        assert os.path.exists(str(tmp_path / 'value_critical.csv'))

    def test_closed_form_needs_critical_case(self, tmp_path, capsys):
        code, summary = run(capsys, 'closed-form', '--out', str(tmp_path),
                            '--mu', '-0.3', '--sigma', '0.2', '--lambda', '1')
        assert code == EXIT_REGIME
        assert summary is None

    def test_solve_positive_drift(self, tmp_path, capsys):
        code = cli.main(['solve', '--out', str(tmp_path), '--mu', '0.1', '--sigma', '0.2',
                         '--lambda', '1'])
        err = capsys.readouterr().err
        assert code == EXIT_REGIME
        assert 'value is infinite for positive drift' in err

    def test_simulate(self, tmp_path, capsys):
        code, summary = run(capsys, 'simulate', '--out', str(tmp_path), '--horizon', '5',
                            '--seed', '4', *CRITICAL)
        assert code == EXIT_OK
        assert summary['policy'] == 'optimal'
        assert summary['T'] == 5.0
        with open(str(tmp_path / 'execution.csv')) as f:
            assert f.readline().strip() == 't,S,phi_rate,inventory,revenue_cum,impact_cost_cum,M'

    def test_estimate(self, tmp_path, capsys):
        code, summary = run(capsys, 'estimate', '--out', str(tmp_path), '--horizon', '5',
                            '--n-paths', '200', *CRITICAL)
        assert code == EXIT_OK
        assert summary['n_paths'] == 200
        assert summary['T'] == 5.0
        assert 'reference_value' in summary
        assert os.path.exists(str(tmp_path / 'estimate.json'))

    def test_estimate_is_reproducible(self, tmp_path, capsys):
        args = ('estimate', '--horizon', '2', '--n-paths', '100', '--seed', '8', *CRITICAL)
        _, a = run(capsys, *args, '--out', str(tmp_path / 'a'), '--workers', '1')
        _, b = run(capsys, *args, '--out', str(tmp_path / 'b'), '--workers', '3')
        assert a['mean'] == b['mean'] and a['se'] == b['se']

    def test_compare(self, tmp_path, capsys):
        code, summary = run(capsys, 'compare', '--out', str(tmp_path), '--horizon', '5',
                            '--n-paths', '200', *CRITICAL)
        assert code == EXIT_OK
        assert [r['policy'] for r in summary['rows']][0] == 'optimal'
        assert len(summary['rows']) == 5

    def test_oracle(self, tmp_path, capsys):
        code, summary = run(capsys, 'oracle', '--out', str(tmp_path), '--horizon', '5',
                            '--nx', '40', *CRITICAL)
        assert code == EXIT_OK
        assert summary['nx'] == 40
        assert os.path.exists(str(tmp_path / 'hjb_grid.csv'))
        assert os.path.exists(str(tmp_path / 'oracle_summary.json'))


class TestErrors:
    def test_missing_value_function(self, tmp_path, capsys):
        code, _ = run(capsys, 'estimate', '--out', str(tmp_path), '--horizon', '5',
                      '--value-function', str(tmp_path / 'missing.json'), *CRITICAL)
        assert code == EXIT_ARTIFACT

    def test_optimal_needs_value_function(self, tmp_path, capsys):
        code, _ = run(capsys, 'estimate', '--out', str(tmp_path), '--horizon', '5',
                      '--mu', '-0.3', '--sigma', '0.2', '--lambda', '1')
        assert code == EXIT_ARTIFACT

    def test_mismatched_value_function(self, tmp_path, capsys):
        out = str(tmp_path / 'solve')
        code, _ = run(capsys, 'solve', '--out', out, '--tol', '1e-8', *CRITICAL)
        assert code == EXIT_OK
        code, _ = run(capsys, 'estimate', '--out', str(tmp_path / 'est'), '--horizon', '5',
                      '--value-function', os.path.join(out, 'value_function.json'),
                      '--mu', '-0.3', '--sigma', '0.2', '--lambda', '1')
        assert code == EXIT_ARTIFACT

    def test_horizon_required_for_positive_drift(self, tmp_path, capsys):
        config = tmp_path / 'c.json'
        config.write_text(json.dumps({
            'params': {'mu': 0.1, 'sigma': 0.2, 'lambda_impact': 1.0},
            'montecarlo': {'policy': {'kind': 'exponential', 'c': 0.1}}}))
        code, _ = run(capsys, 'estimate', '--config', str(config), '--out', str(tmp_path))
        assert code == EXIT_CONFIG

    def test_bad_config_value(self, tmp_path, capsys):
        code, _ = run(capsys, 'estimate', '--out', str(tmp_path), '--n-paths', '101', *CRITICAL)
        assert code == EXIT_CONFIG
