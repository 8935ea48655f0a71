import math

import numpy as np
import pytest
from scipy import special

from perpex import closedform
from perpex.closedform import CriticalParams
from perpex.exceptions import InvalidInputError, NumericalBlowupError, PerpexError, RegimeError
from perpex.market import MarketParams

#: I1(2) / I0(2)
H_AT_SCALE = 0.697774657964


class TestCriticalParams:
    def test_from_params(self, critical_params):
        p = CriticalParams.from_params(critical_params)
        assert p.mu == -0.125
        assert p.scale == 0.25
        assert p.matches(critical_params)

    def test_rejects_noncritical(self, subcritical_params):
        with pytest.raises(RegimeError):
            CriticalParams.from_params(subcritical_params)

    def test_round_trip(self, critical):
        assert CriticalParams.from_params(critical.to_params(s0=2.0)) == critical


class TestBesselRatio:
    def test_value_at_scale(self, critical):
        assert abs(closedform.h_ratio(0.25, critical) - H_AT_SCALE) < 1e-10

    def test_matches_library(self, critical):
        y = np.geomspace(1e-6, 1e6, 400)
        q = y / critical.scale
        z = 2.0 * np.sqrt(q)
        expected = special.ive(1, z) / special.ive(0, z) / np.sqrt(q)
        np.testing.assert_allclose(closedform.h_ratio(y, critical), expected, rtol=1e-12)

    def test_methods_agree_at_switch_points(self, critical):
        for q in (100.0, 2500.0):
            y = q * critical.scale
            below = closedform.h_ratio(y * (1 - 1e-12), critical)
            above = closedform.h_ratio(y * (1 + 1e-12), critical)
            assert abs(below - above) < 1e-12

    def test_limits(self, critical):
        assert closedform.h_ratio(1e-14, critical) == pytest.approx(1.0, abs=1e-12)
        assert closedform.h_ratio(np.inf, critical) == 0.0
        # large y: h ~ sqrt(Lambda sigma^2 / y)
        y = 1e10
        assert closedform.h_ratio(y, critical) == pytest.approx(math.sqrt(0.25 / y), rel=1e-4)

    def test_monotone_and_bounded(self, critical):
        h = closedform.h_ratio(np.geomspace(1e-4, 1e8, 2000), critical)
        assert np.all(h > 0) and np.all(h <= 1)
        assert np.all(np.diff(h) <= 0)

    def test_scalar_in_scalar_out(self, critical):
        assert isinstance(closedform.h_ratio(1.0, critical), float)
        assert closedform.h_ratio(np.ones((2, 3)), critical).shape == (2, 3)

    @pytest.mark.parametrize('y', [0.0, -1.0, float('nan')])
    def test_rejects_nonpositive(self, critical, y):
        with pytest.raises(InvalidInputError):
            closedform.h_ratio(y, critical)

    def test_continued_fraction_exhausted(self, monkeypatch, critical):
        monkeypatch.setattr(closedform, 'CF_MAX_TERMS', 2)
        with pytest.raises(NumericalBlowupError) as info:
            closedform.h_ratio(1000.0 * critical.scale, critical)
        assert isinstance(info.value, PerpexError)

    def test_riccati(self, critical):
        y = np.geomspace(0.01, 100.0, 50)
        assert np.max(np.abs(closedform.riccati_residual(y, critical))) < 1e-6

    def test_linear_equation(self, critical):
        y = np.geomspace(0.01, 100.0, 50)
        assert np.max(np.abs(closedform.linear_ode_residual(y, critical))) < 1e-6


class TestValueFunction:
    def test_boundary(self, critical):
        assert closedform.g_critical(0.0, critical) == 0.0
        assert closedform.g_prime_critical(0.0, critical) == 1.0

    def test_derivative(self, critical):
        x = np.array([0.1, 1.0, 4.0])
        dx = 1e-5
        g = closedform.g_critical(np.concatenate([x - dx, x + dx]), critical)
        slope = (g[3:] - g[:3]) / (2 * dx)
        np.testing.assert_allclose(slope, closedform.g_prime_critical(x, critical), atol=1e-8)

    def test_order_independent(self, critical):
        x = np.array([3.0, 0.5, 10.0, 0.01])
        g = closedform.g_critical(x, critical)
        np.testing.assert_allclose(g[np.argsort(x)], closedform.g_critical(np.sort(x), critical),
                                   rtol=0, atol=1e-14)

    def test_shape(self, critical):
        x = np.linspace(0.0, 20.0, 200)
        g = closedform.g_critical(x, critical)
        gp = closedform.g_prime_critical(x, critical)
        assert np.all(np.diff(g) > 0)
        assert np.all(np.diff(gp) < 0)
        assert np.all(g <= x)

    def test_value_scales(self, critical):
        assert closedform.value_critical(2.0, 4.0, critical) == \
            16.0 * closedform.value_critical(0.5, 1.0, critical)

    def test_rejects_negative(self, critical):
        with pytest.raises(InvalidInputError):
            closedform.g_critical(-1.0, critical)


class TestOptimalRate:
    def test_matches_feedback(self, critical):
        s, phi = 2.0, 3.0
        expected = -(s / critical.lambda_impact) * closedform.h_ratio(s / phi, critical)
        assert closedform.optimal_rate_critical(s, phi, critical) == pytest.approx(expected)

    def test_zero_inventory(self, critical):
        rate = closedform.optimal_rate_critical(np.array([1.0, 2.0]), np.array([0.0, 1.0]),
                                                critical)
        assert rate[0] == 0.0
        assert rate[1] < 0.0

    def test_rejects_bad_price(self, critical):
        with pytest.raises(InvalidInputError):
            closedform.optimal_rate_critical(0.0, 1.0, critical)


class TestTables:
    def test_write(self, tmp_path, critical):
        from perpex.util import io
        closedform.write_h_table(str(tmp_path / 'h.csv'), [0.25, 1.0], critical)
        closedform.write_g_table(str(tmp_path / 'g.csv'), [0.0, 1.0], critical)
        h = io.read_csv(str(tmp_path / 'h.csv'))
        g = io.read_csv(str(tmp_path / 'g.csv'))
        assert abs(h['h'][0] - H_AT_SCALE) < 1e-10
        assert g['g'][0] == 0.0 and g['g_prime'][0] == 1.0
