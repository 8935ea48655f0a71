import math

import numpy as np
import pytest

from perpex.exceptions import InvalidInputError
from perpex.market import (MarketParams, PricePath, Regime, regime, simulate_gbm,
                           simulate_gbm_paths, stream_normals, uniform_grid)


class TestMarketParams:
    def test_defaults(self):
        p = MarketParams(mu=-0.1, sigma=0.2, lambda_impact=1)
        assert p.s0 == 1.0 and p.phi0 == 1.0
        assert isinstance(p.lambda_impact, float)

    @pytest.mark.parametrize('kwargs', [
        dict(mu=-0.1, sigma=0.0, lambda_impact=1.0),
        dict(mu=-0.1, sigma=0.2, lambda_impact=-1.0),
        dict(mu=-0.1, sigma=0.2, lambda_impact=1.0, s0=0.0),
        dict(mu=-0.1, sigma=0.2, lambda_impact=1.0, phi0=-1.0),
        dict(mu=float('nan'), sigma=0.2, lambda_impact=1.0),
        dict(mu=-0.1, sigma=float('inf'), lambda_impact=1.0),
    ])
    def test_rejects_invalid(self, kwargs):
        with pytest.raises(InvalidInputError):
            MarketParams(**kwargs)

    def test_reduced_state(self):
        p = MarketParams(mu=-0.1, sigma=0.2, lambda_impact=1.0, s0=4.0, phi0=2.0)
        assert p.x0 == 0.5
        assert p.with_position(phi0=1.0).x0 == 0.25
        assert p.same_dynamics(p.with_position(s0=8.0))
        assert not p.same_dynamics(MarketParams(mu=-0.2, sigma=0.2, lambda_impact=1.0))

    def test_dict_round_trip(self):
        p = MarketParams(mu=-0.125, sigma=0.5, lambda_impact=2.0, s0=3.0, phi0=0.5)
        assert MarketParams.from_dict(p.to_dict()) == p


class TestRegime:
    def test_negative(self):
        info = regime(MarketParams(mu=-0.3, sigma=0.2, lambda_impact=1.0))
        assert info.regime is Regime.NegativeDrift
        assert not info.critical

    def test_zero(self):
        assert regime(MarketParams(mu=0.0, sigma=0.1, lambda_impact=1.0)).regime \
            is Regime.Martingale

    def test_positive(self):
        assert regime(MarketParams(mu=0.1, sigma=0.2, lambda_impact=1.0)).regime \
            is Regime.PositiveDrift

    def test_critical(self, critical_params):
        info = regime(critical_params)
        assert info.regime is Regime.NegativeDrift
        assert info.critical

    def test_tolerance(self):
        p = MarketParams(mu=1e-14, sigma=0.1, lambda_impact=1.0)
        assert regime(p).regime is Regime.Martingale
        assert regime(p, tol_zero=0.0).regime is Regime.PositiveDrift


class TestGrid:
    def test_uniform(self):
        t = uniform_grid(2.0, 4)
        np.testing.assert_array_equal(t, [0.0, 0.5, 1.0, 1.5, 2.0])

    @pytest.mark.parametrize('horizon,n', [(0.0, 4), (-1.0, 4), (1.0, 0)])
    def test_rejects(self, horizon, n):
        with pytest.raises(InvalidInputError):
            uniform_grid(horizon, n)


class TestSimulation:
    params = MarketParams(mu=-0.125, sigma=0.5, lambda_impact=1.0, s0=2.0)

    def test_starts_at_s0(self):
        path = simulate_gbm(self.params, uniform_grid(1.0, 16), seed=1)
        assert path.prices[0] == 2.0
        assert len(path) == 17
        assert np.all(path.prices > 0)

    def test_reproducible(self):
        t = uniform_grid(1.0, 32)
        a = simulate_gbm(self.params, t, seed=7, stream=3)
        b = simulate_gbm(self.params, t, seed=7, stream=3)
        c = simulate_gbm(self.params, t, seed=7, stream=4)
        np.testing.assert_array_equal(a.prices, b.prices)
        assert not np.array_equal(a.prices, c.prices)

    def test_streams_are_independent_of_block_layout(self):
        t = uniform_grid(1.0, 32)
        block = simulate_gbm_paths(self.params, t, seed=5, streams=range(2, 6))
        single = simulate_gbm(self.params, t, seed=5, stream=4)
        np.testing.assert_array_equal(block[2], single.prices)

    def test_antithetic_pairs(self):
        t = uniform_grid(1.0, 8)
        block = simulate_gbm_paths(self.params, t, seed=5, streams=[0, 1], antithetic=True)
        assert block.shape == (4, 9)
        np.testing.assert_array_equal(block[1], simulate_gbm(self.params, t, seed=5, stream=0,
                                                             antithetic=True).prices)
        # log returns of a pair are mirrored around the drift term
        dt = 1.0 / 8
        drift = (self.params.mu - 0.5 * self.params.sigma ** 2) * dt
        ra = np.diff(np.log(block[2])) - drift
        rb = np.diff(np.log(block[3])) - drift
        np.testing.assert_allclose(ra, -rb, atol=1e-12)

    def test_terminal_mean(self):
        t = uniform_grid(1.0, 4)
        prices = simulate_gbm_paths(self.params, t, seed=11, streams=range(20000))
        terminal = prices[:, -1]
        se = terminal.std(ddof=1) / math.sqrt(len(terminal))
        assert abs(terminal.mean() - 2.0 * math.exp(-0.125)) < 4 * se

    def test_normals(self):
        z = stream_normals(3, 9, 50000)
        assert abs(z.mean()) < 0.02
        assert abs(z.std() - 1.0) < 0.02

    def test_bad_seed(self):
        with pytest.raises(InvalidInputError):
            stream_normals(-1, 0, 3)

    def test_bad_grid(self):
        with pytest.raises(InvalidInputError):
            simulate_gbm(self.params, [0.0, 1.0, 1.0])
        with pytest.raises(InvalidInputError):
            simulate_gbm(self.params, [0.5, 1.0])


class TestPricePath:
    def test_csv(self, tmp_path):
        path = simulate_gbm(MarketParams(mu=-0.1, sigma=0.3, lambda_impact=1.0),
                            uniform_grid(1.0, 10), seed=2)
        path.to_csv(str(tmp_path / 'p.csv'))
        back = PricePath.from_csv(str(tmp_path / 'p.csv'))
        np.testing.assert_array_equal(back.prices, path.prices)

    def test_rejects_nonpositive(self):
        with pytest.raises(InvalidInputError):
            PricePath([0.0, 1.0], [1.0, 0.0])
