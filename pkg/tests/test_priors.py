import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate

from auctionvi import quadrature
from auctionvi.bidspace import PwlBid
from auctionvi.errors import ConfigurationError, DomainError, NumericalError
from auctionvi.priors import Prior, eval_F, eval_G, eval_g, integrate_dF, master_grid


def all_priors():
    return [Prior.uniform(2), Prior.uniform(3), Prior.power(2, 2), Prior.power(2, 3),
            Prior.power(1.5, 2), Prior.tabulated([0, 0.3, 1], [0, 0.5, 1], 3)]


class TestQuadrature:
    def test_order_for_degree(self):
        assert quadrature.order_for_degree(0) == 1
        assert quadrature.order_for_degree(3) == 2
        assert quadrature.order_for_degree(4) == 3

    def test_merge_breakpoints_collapses_duplicates(self):
        out = quadrature.merge_breakpoints([0, 0.5, 1], [0.5 + 1e-16, 0.25])
        np.testing.assert_array_equal(out, [0, 0.25, 0.5, 1])

    def test_fixed_rule_exact_for_polynomials(self):
        bp = np.array([0.0, 0.3, 1.0])
        val, _ = quadrature.integrate(lambda x: x ** 5 - 2 * x ** 2, bp, degree=5)
        assert val == pytest.approx(1 / 6 - 2 / 3, abs=1e-15)

    def test_adaptive_smooth(self):
        val, err = quadrature.integrate(np.sqrt, np.array([0.0, 1.0]), tol=1e-12)
        assert val == pytest.approx(2 / 3, abs=1e-11)
        assert err < 1e-10

    def test_non_finite_raises(self):
        with pytest.raises(NumericalError), np.errstate(all="ignore"):
            quadrature.integrate(lambda x: 1 / (x - x), np.array([0.0, 1.0]), degree=2)


class TestPriorEvaluation:
    def test_uniform_F(self):
        p = Prior.uniform()
        assert eval_F(p, 0.3) == 0.3
        assert eval_F(p, 0.0) == 0.0

    def test_power_F(self):
        assert eval_F(Prior.power(2), 0.5) == pytest.approx(0.25, abs=1e-15)

    def test_uniform_G_g(self):
        p = Prior.uniform(2)
        assert eval_G(p, 0.7) == pytest.approx(0.7)
        assert eval_g(p, 0.7) == pytest.approx(1.0)
        p3 = Prior.uniform(3)
        assert eval_G(p3, 0.5) == pytest.approx(0.25)
        assert eval_g(p3, 0.5) == pytest.approx(1.0)

    def test_power_G(self):
        assert eval_G(Prior.power(2, 2), 0.5) == pytest.approx(0.25)

    def test_out_of_range(self):
        with pytest.raises(DomainError):
            Prior.uniform().F(1.5)
        with pytest.raises(DomainError):
            Prior.uniform().g(-0.1)

    def test_bad_construction(self):
        with pytest.raises(ConfigurationError):
            Prior.uniform(1)
        with pytest.raises(ConfigurationError):
            Prior.power(0.5)
        with pytest.raises(ConfigurationError):
            Prior.tabulated([0, 0.5, 0.4, 1], [0, 0.2, 0.3, 1])
        with pytest.raises(ConfigurationError):
            Prior.parse("gamma:2")

    def test_parse_and_spec(self):
        assert Prior.parse("uniform", 3) == Prior.uniform(3)
        p = Prior.parse("power:2", 3)
        assert p.spec() == "power:2" and p.n == 3

    def test_csv_roundtrip(self, tmp_path):
        path = tmp_path / "cdf.csv"
        path.write_text("x,F\n0,0\n0.5,0.25\n1,1\n")
        p = Prior.from_csv(str(path), 2)
        assert p.F(0.75) == pytest.approx(0.625)
        assert p.f(0.25) == pytest.approx(0.5)
        assert Prior.parse(f"csv:{path}", 2) == p

    def test_bounds(self):
        p = Prior.power(2, 3)
        assert p.f_inf == 0.0 and p.f_sup == 2.0
        assert p.g_sup == pytest.approx(4.0)
        assert Prior.uniform().delta0 == 1.0
        t = Prior.tabulated([0, 0.5, 1], [0, 0.25, 1])
        assert t.delta0 == pytest.approx(0.5 / 1.5)


class TestPriorInvariants:
    @pytest.mark.parametrize("prior", all_priors(), ids=lambda p: f"{p.spec()}-n{p.n}")
    def test_G_is_power_of_F(self, prior):
        x = master_grid()
        assert np.max(np.abs(prior.G(x) - prior.F(x) ** (prior.n - 1))) <= 1e-14

    @pytest.mark.parametrize("prior", all_priors(), ids=lambda p: f"{p.spec()}-n{p.n}")
    def test_total_mass(self, prior):
        assert integrate_dF(prior, lambda x: np.ones_like(x)) == pytest.approx(1.0, abs=1e-12)

    @pytest.mark.parametrize("prior", all_priors(), ids=lambda p: f"{p.spec()}-n{p.n}")
    def test_g_integrates_to_G(self, prior):
        xs = np.linspace(0, 1, 1000)
        bp = np.union1d(prior.breakpoints, [0.0, 1.0])
        cum = [integrate.quad(prior.g, 0, x, points=bp[(bp > 0) & (bp < x)] if x > 0 else None,
                              epsabs=1e-13, epsrel=1e-13)[0] for x in xs]
        assert np.max(np.abs(np.array(cum) - prior.G(xs))) <= 1e-10

    @pytest.mark.parametrize("prior", all_priors(), ids=lambda p: f"{p.spec()}-n{p.n}")
    def test_F_monotone_lipschitz(self, prior):
        x = master_grid()
        F = prior.F(x)
        assert F[0] == 0 and F[-1] == pytest.approx(1.0)
        q = np.diff(F) / np.diff(x)
        assert np.all(q >= 0) and np.max(q) <= prior.f_sup + 1e-12

    @pytest.mark.parametrize("prior", all_priors(), ids=lambda p: f"{p.spec()}-n{p.n}")
    def test_int_G_closed_form(self, prior):
        for x in (0.0, 0.2, 0.5, 0.9, 1.0):
            ref = integrate.quad(prior.G, 0, x, points=[0.3] if 0.3 < x else None, epsabs=1e-14, epsrel=1e-14)[0]
            assert prior.int_G(x) == pytest.approx(ref, abs=1e-12)


class TestIntegrateDF:
    def test_examples(self):
        p = Prior.uniform()
        assert integrate_dF(p, lambda x: x) == pytest.approx(0.5, abs=1e-15)
        assert integrate_dF(p, lambda x: x ** 2, degree=2) == pytest.approx(1 / 3, abs=1e-15)
        val = integrate_dF(p, lambda x: np.where(x > 0.5, x, 0.0), [0, 0.5, 1], degree=1)
        assert val == pytest.approx(3 / 8, abs=1e-15)

    def test_bid_integrand_is_exact_against_power(self):
        b = PwlBid([0, 0.4, 1], [0, 0.1, 0.9])
        ref = integrate.quad(lambda x: b(x) * 2 * x, 0, 1, points=[0.4], epsabs=1e-14, epsrel=1e-13)[0]
        assert integrate_dF(Prior.power(2), b) == pytest.approx(ref, abs=1e-14)

    def test_non_finite(self):
        with pytest.raises(NumericalError), np.errstate(all="ignore"):
            integrate_dF(Prior.uniform(), lambda x: np.log(x - x))

    def test_bad_segments(self):
        with pytest.raises(DomainError):
            integrate_dF(Prior.uniform(), lambda x: x, [0.2, 1.0])

    @given(st.lists(st.floats(-1, 1), min_size=4, max_size=4), st.floats(-3, 3), st.floats(-3, 3),
           st.sampled_from(["uniform", "power:2", "power:3"]))
    def test_linearity(self, vals, a, b, spec):
        p = Prior.parse(spec)
        u = PwlBid([0, 0.2, 0.7, 1], vals)
        v = PwlBid([0, 0.5, 1], vals[:3])
        lhs = integrate_dF(p, a * u + b * v)
        rhs = a * integrate_dF(p, u) + b * integrate_dF(p, v)
        assert lhs == pytest.approx(rhs, abs=1e-12)
