import numpy as np
import pytest

import oracles
from auctionvi.bidspace import FeasibleSet, PwlBid, sample_feasible
from auctionvi.equilibria import (bne, bne_first_price, bne_second_price, first_price_bid,
                                  first_price_slope_bound, fpa_ode_residual, vi_probes, vi_residual)
from auctionvi.errors import ConfigurationError, UnsupportedOperationError
from auctionvi.operators import ex_ante_utility, symmetric_density
from auctionvi.priors import Prior, master_grid

U = Prior.uniform(2)
X = master_grid()


class TestSecondPrice:
    @pytest.mark.parametrize("prior", [Prior.uniform(2), Prior.power(2, 3), Prior.power(1.5, 4)])
    def test_identity(self, prior):
        sol = bne_second_price(prior)
        assert np.max(np.abs(sol.bid(X) - X)) == 0.0
        assert sol.bid(0.0) == 0.0

    def test_delta_too_large(self):
        with pytest.raises(ConfigurationError):
            bne_second_price(U, delta=1.5)

    def test_to_dict(self):
        d = bne(U, "spa", grid=master_grid(3)).to_dict()
        assert d["rule"] == "spa" and d["bid"]["values"] == [0.0, 0.5, 1.0]


class TestFirstPrice:
    def test_uniform_two(self):
        assert np.max(np.abs(bne_first_price(U).bid(X) - X / 2)) <= 1e-15

    def test_uniform_three(self):
        assert np.max(np.abs(bne_first_price(Prior.uniform(3)).bid(X) - 2 * X / 3)) <= 1e-15

    def test_zero(self):
        assert first_price_bid(Prior.uniform(4), 0.0) == 0.0

    @pytest.mark.parametrize("n", [2, 3, 5])
    def test_against_quadrature_oracle(self, n):
        prior = Prior.uniform(n)
        ref_prior = oracles.PowerPrior(1, n)
        xs = np.linspace(0, 1, 21)
        ref = [oracles.fpa_bne_oracle(ref_prior, x) for x in xs]
        np.testing.assert_allclose(first_price_bid(prior, xs), ref, atol=1e-13)

    def test_closed_form_for_power_density(self):
        # no equilibrium for vanishing densities, but the formula itself is checked
        prior, ref = Prior.power(2, 3), oracles.PowerPrior(2, 3)
        xs = np.linspace(0.05, 1, 9)
        np.testing.assert_allclose(first_price_bid(prior, xs), [oracles.fpa_bne_oracle(ref, x) for x in xs],
                                   atol=1e-13)

    def test_tabulated_uniform_equivalent(self):
        prior = Prior.tabulated([0, 0.25, 1], [0, 0.25, 1], 3)
        np.testing.assert_allclose(bne_first_price(prior).bid(X), 2 * X / 3, atol=1e-14)

    def test_errors(self):
        with pytest.raises(UnsupportedOperationError):
            bne_first_price(Prior.power(2))
        with pytest.raises(UnsupportedOperationError):
            bne_first_price(Prior.power(1.5))
        with pytest.raises(UnsupportedOperationError):
            bne_first_price(Prior.tabulated([0, 0.5, 1], [0, 0.3, 1]))
        with pytest.raises(ConfigurationError):
            bne_first_price(U, delta=1.5)

    def test_delta_between_bounds(self):
        # delta0 = 1 for the uniform prior but the two-bidder equilibrium has slope 1/2
        with pytest.raises(ConfigurationError):
            bne_first_price(U, delta=0.75)
        assert bne_first_price(U, delta=0.5).bid(1.0) == pytest.approx(0.5)
        assert first_price_slope_bound(Prior.uniform(4)) == pytest.approx(0.75)

    @pytest.mark.parametrize("n", [2, 3, 6])
    def test_slope_bound(self, n):
        sol = bne_first_price(Prior.uniform(n))
        assert np.min(sol.bid.slopes) >= first_price_slope_bound(sol.prior) - 1e-9

    def test_slope_bound_is_attained(self):
        # the bound is sharp for uniform priors, so the unscaled ratio inf f / sup f is not a bound
        sol = bne_first_price(U)
        assert np.min(sol.bid.slopes) == pytest.approx(0.5)
        assert sol.delta0 == 1.0


class TestResiduals:
    def test_vi_residual_at_solutions(self):
        assert vi_residual(bne(U, "spa").bid, U, "spa") <= 1e-12
        assert vi_residual(bne(U, "fpa").bid, U, "fpa") <= 1e-8
        p3 = Prior.uniform(3)
        assert vi_residual(bne(p3, "fpa").bid, p3, "fpa") <= 1e-8

    def test_identity_not_fpa_solution(self):
        res, witness = vi_residual(PwlBid.identity(), U, "fpa", return_witness=True)
        assert res >= 1 / 6 - 1e-15
        half = symmetric_density(PwlBid.identity(), U, "fpa").apply(PwlBid.linear(0.5) - PwlBid.identity())
        assert half == pytest.approx(1 / 6, abs=1e-15)

    def test_probes_feasible(self):
        fset = FeasibleSet(0.05)
        assert all(fset.contains(p) for p in vi_probes(fset, U, count=20))

    def test_ode_residual(self):
        assert fpa_ode_residual(PwlBid.linear(0.5), U, X) <= 1e-10
        assert fpa_ode_residual(PwlBid.identity(), U, X) == pytest.approx(1.0)
        for n in (2, 3, 4, 7):
            p = Prior.uniform(n)
            assert fpa_ode_residual(bne(p, "fpa").bid, p) <= 1e-6

    @pytest.mark.parametrize("rule", ["spa", "fpa"])
    def test_best_response(self, rule):
        star = bne(U, rule).bid
        base = ex_ante_utility(star, star, U, rule)
        fset = FeasibleSet(0.01)
        rng = np.random.default_rng(5)
        for _ in range(100):
            dev = sample_feasible(fset, U, seed=int(rng.integers(2**63)), roughness=float(rng.uniform(0, 2)))
            assert ex_ante_utility(dev, star, U, rule) <= base + 1e-8

    def test_spa_uniqueness_probe(self):
        fset = FeasibleSet(0.02)
        I = PwlBid.identity()
        for prior in (U, Prior.power(2, 3)):
            for seed in range(20):
                cand = sample_feasible(fset, prior, seed=seed)
                if np.max(np.abs(cand.values - cand.knots)) < 1e-6:
                    continue
                assert symmetric_density(cand, prior, "spa").apply(I - cand) > 0
