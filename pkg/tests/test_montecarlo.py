import math

import numpy as np
import pytest

from perpex import closedform, montecarlo
from perpex.exceptions import InvalidInputError, MismatchError
from perpex.market import MarketParams
from perpex.strategy import ExponentialRate, OptimalFeedback

SMALL = dict(n_paths=2000, n_steps=256, substeps=4, seed=17)


def exponential_value(params, c, horizon):
    """Expected value of ``phi_t = -c Phi0 exp(-c t)`` truncated at `horizon`"""
    k = c - params.mu
    revenue = c * params.phi0 * params.s0 * -math.expm1(-k * horizon) / k
    impact = 0.25 * params.lambda_impact * c * params.phi0 ** 2 * -math.expm1(-2 * c * horizon)
    return revenue - impact


class TestHelpers:
    def test_tail_bound(self, critical_params):
        assert montecarlo.tail_bound(critical_params, 8.0) == pytest.approx(math.exp(-1.0))
        assert montecarlo.tail_bound(MarketParams(0.0, 0.1, 1.0), 8.0) == math.inf

    def test_default_horizon(self, critical_params):
        horizon = montecarlo.default_horizon(critical_params, 0.5)
        assert montecarlo.tail_bound(critical_params, horizon) == pytest.approx(0.5e-3)

    def test_default_horizon_requires_negative_drift(self):
        with pytest.raises(InvalidInputError):
            montecarlo.default_horizon(MarketParams(0.0, 0.1, 1.0), 1.0)

    def test_reference_value(self, critical_params, critical):
        assert montecarlo.reference_value(critical_params, critical) == \
            closedform.value_critical(1.0, 1.0, critical)
        with pytest.raises(InvalidInputError):
            montecarlo.reference_value(critical_params, None)


class TestEstimate:
    def test_exponential_value(self, critical_params):
        estimate = montecarlo.estimate_value(critical_params, ExponentialRate(1.0), horizon=10.0,
                                             **SMALL)
        expected = exponential_value(critical_params, 1.0, 10.0)
        assert abs(estimate.mean - expected) < 4 * estimate.std_error + 0.01
        assert estimate.n_paths == 2000
        assert estimate.tail_bound == pytest.approx(math.exp(-1.25))
        assert estimate.ci95[0] < estimate.mean < estimate.ci95[1]
        assert estimate.warning is None

    def test_optimal_value(self, critical_params, critical):
        estimate = montecarlo.estimate_value(critical_params, OptimalFeedback(critical), **SMALL)
        value = closedform.value_critical(1.0, 1.0, critical)
        assert estimate.horizon == pytest.approx(montecarlo.default_horizon(critical_params, value))
        assert abs(estimate.mean - value) < 4 * estimate.std_error + estimate.tail_bound + 0.01

    def test_workers_do_not_change_result(self, critical_params):
        kwargs = dict(SMALL, n_paths=512, horizon=5.0, block=64)
        one = montecarlo.estimate_value(critical_params, ExponentialRate(0.5), workers=1, **kwargs)
        many = montecarlo.estimate_value(critical_params, ExponentialRate(0.5), workers=4,
                                         **kwargs)
        assert one.mean == many.mean
        assert one.std_error == many.std_error
        np.testing.assert_array_equal(one.values, many.values)

    def test_block_size_does_not_change_result(self, critical_params):
        kwargs = dict(SMALL, n_paths=512, horizon=5.0)
        a = montecarlo.estimate_value(critical_params, ExponentialRate(0.5), block=64, **kwargs)
        b = montecarlo.estimate_value(critical_params, ExponentialRate(0.5), block=512, **kwargs)
        np.testing.assert_array_equal(a.values, b.values)

    def test_drift_compensation_default(self, critical_params):
        kwargs = dict(SMALL, n_paths=64, horizon=5.0, n_steps=32)
        default = montecarlo.estimate_value(critical_params, ExponentialRate(0.5), **kwargs)
        carried = montecarlo.estimate_value(critical_params, ExponentialRate(0.5),
                                            drift_compensation=True, **kwargs)
        held = montecarlo.estimate_value(critical_params, ExponentialRate(0.5),
                                         drift_compensation=False, **kwargs)
        np.testing.assert_array_equal(default.values, carried.values)
        # prices fall within each interval when mu < 0, so a pure hold over-credits revenue
        assert np.all(carried.values < held.values)

    def test_antithetic_requires_even_count(self, critical_params):
        with pytest.raises(InvalidInputError):
            montecarlo.estimate_value(critical_params, ExponentialRate(1.0), n_paths=101,
                                      horizon=1.0)

    def test_horizon_required(self, critical_params):
        with pytest.raises(InvalidInputError):
            montecarlo.estimate_value(critical_params, ExponentialRate(1.0), n_paths=100)

    def test_mismatched_policy(self, subcritical_params, critical):
        with pytest.raises(MismatchError):
            montecarlo.estimate_value(subcritical_params, OptimalFeedback(critical), n_paths=100)

    def test_positive_drift_warns(self, caplog):
        params = MarketParams(mu=0.1, sigma=0.2, lambda_impact=1.0)
        estimate = montecarlo.estimate_value(params, ExponentialRate(0.1), horizon=5.0,
                                             n_paths=200, n_steps=32, substeps=2)
        assert estimate.warning == montecarlo.DIVERGENCE_WARNING
        assert estimate.tail_bound == math.inf
        assert 'diverges' in caplog.text

    def test_json(self, tmp_path, critical_params):
        from perpex.util import io
        estimate = montecarlo.estimate_value(critical_params, ExponentialRate(1.0), horizon=2.0,
                                             n_paths=100, n_steps=16, substeps=2)
        estimate.to_json(str(tmp_path / 'e.json'))
        doc = io.read_json(str(tmp_path / 'e.json'))
        assert doc['se'] == estimate.std_error
        assert doc['T'] == 2.0
        assert doc['policy'] == 'exponential(c=1)'


class TestCompare:
    def test_optimal_dominates(self, tmp_path, critical_params, critical):
        policies = [ExponentialRate(0.5), OptimalFeedback(critical), ExponentialRate(2.0)]
        table = montecarlo.compare_policies(critical_params, policies, **SMALL)
        assert [r.policy for r in table.rows] == ['optimal', 'exponential(c=0.5)',
                                                  'exponential(c=2)']
        assert table.rows[0].diff == 0.0 and table.rows[0].se_diff == 0.0
        for row in table.rows[1:]:
            assert row.diff < 0

        table.to_csv(str(tmp_path / 'cmp.csv'))
        with open(str(tmp_path / 'cmp.csv')) as f:
            lines = f.read().splitlines()
        assert lines[0] == 'policy,mean,se,diff,se_diff'
        assert lines[1].startswith('optimal,')

    def test_needs_two_policies(self, critical_params):
        with pytest.raises(InvalidInputError):
            montecarlo.compare_policies(critical_params, [ExponentialRate(1.0)], horizon=1.0)


class TestDiagnostics:
    def test_martingale_regime(self):
        params = MarketParams(mu=0.0, sigma=0.1, lambda_impact=1.0)
        check = montecarlo.martingale_check(params, n_values=(1, 4), horizon_factor=10.0,
                                            n_paths=1000, n_steps=128, substeps=4, seed=3)
        assert check.upper == 1.0
        assert check.increasing
        assert check.bounded
        assert check.estimates[0].mean == pytest.approx(0.75, abs=0.03)
        assert check.estimates[1].mean == pytest.approx(0.9375, abs=0.03)

    def test_martingale_regime_requires_zero_drift(self, critical_params):
        with pytest.raises(InvalidInputError):
            montecarlo.martingale_check(critical_params, n_paths=10)

    def test_positive_drift(self):
        params = MarketParams(mu=0.1, sigma=0.2, lambda_impact=1.0)
        check = montecarlo.positive_drift_check(params, horizon=10.0, n_paths=2000, n_steps=100,
                                                substeps=4, seed=8)
        assert check.expected_rate == pytest.approx(0.1)
        assert abs(check.revenue_rate - 0.1) < 4 * check.revenue_rate_se + 1e-3
        assert check.squared_rate_integral == pytest.approx(0.05)
        assert check.impact_cost == pytest.approx(check.impact_cost_exact, rel=1e-2)

    def test_supermartingale_profile(self, critical_params, critical):
        profile = montecarlo.supermartingale_profile(critical_params, critical, n_paths=1000,
                                                     horizon=20.0, n_steps=64, substeps=4,
                                                     seed=5)
        m0 = 1.0 - closedform.h_ratio(1.0, critical)
        assert profile.mean[0] == pytest.approx(m0)
        assert profile.se[0] < 1e-6
        assert profile.nonincreasing
        assert profile.target == pytest.approx(m0)
        gap = abs(profile.shadow_revenue - profile.target)
        assert gap < 4 * profile.shadow_revenue_se + profile.tail_bound + 0.02

    def test_shadow_revenue_identity(self, critical_params, critical):
        profile = montecarlo.supermartingale_profile(critical_params, critical, n_paths=2000,
                                                     horizon=40.0, seed=11)
        gap = abs(profile.shadow_revenue - profile.target)
        assert gap <= 3.0 * profile.shadow_revenue_se + profile.tail_bound, profile.to_dict()
