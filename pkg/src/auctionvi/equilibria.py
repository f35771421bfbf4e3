"""Closed-form symmetric equilibria and residual checks of the variational inequality."""

from dataclasses import dataclass

import numpy as np

from .bidspace import FeasibleSet, PwlBid, sample_feasible
from .errors import ConfigurationError, UnsupportedOperationError
from .operators import AuctionRule, symmetric_density
from .priors import DEFAULT_GRID_SIZE, master_grid


@dataclass(frozen=True)
class BneSolution:
    bid: PwlBid
    rule: AuctionRule
    prior: object
    delta0: float
    delta: float

    def to_dict(self):
        return {"rule": self.rule.short, "prior": self.prior.spec(), "n": self.prior.n,
                "delta0": self.delta0, "delta": self.delta, "bid": self.bid.to_dict()}


def _feasible_set(delta):
    try:
        return FeasibleSet(delta)
    except ConfigurationError as exc:
        raise ConfigurationError(f"no admissible bids for delta = {delta!r}: {exc}") from None


def bne_second_price(prior, delta=0.01, grid=None):
    """Truthful bidding, the unique symmetric equilibrium for any prior."""
    fset = _feasible_set(delta)
    grid = master_grid(DEFAULT_GRID_SIZE) if grid is None else np.asarray(grid, dtype=float)
    bid = PwlBid(grid, grid.copy())
    fset.require(bid, "identity")
    d0 = prior.delta0 if prior.f_sup > 0 else 0.0
    return BneSolution(bid, AuctionRule.SECOND_PRICE, prior, d0, delta)


def first_price_bid(prior, x):
    """``E[Y | Y < x] = x - int_0^x G / G(x)``, extended by 0 at ``x = 0``."""
    x = np.asarray(x, dtype=float)
    G = prior.G(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = x - prior.int_G(x) / G
    return np.where(G > 0, out, 0.0)


def first_price_slope_bound(prior):
    """Guaranteed lower bound ``(n-1)/n * inf f / sup f`` on the equilibrium slope."""
    return (prior.n - 1) / prior.n * prior.delta0


def bne_first_price(prior, delta=0.01, grid=None):
    """Symmetric first-price equilibrium sampled on ``grid``.

    Requires a Lipschitz density bounded away from zero and ``delta`` at most
    the slope bound :func:`first_price_slope_bound` the equilibrium satisfies.
    """
    fset = _feasible_set(delta)
    if prior.lipschitz_f is None:
        raise UnsupportedOperationError(f"prior {prior.spec()} has a non-Lipschitz density")
    if prior.f_inf <= 0:
        raise UnsupportedOperationError(f"prior {prior.spec()} has a density that vanishes")
    d0 = prior.delta0
    if delta > d0 * (1 + 1e-12):
        raise ConfigurationError(f"delta = {delta:g} exceeds the slope bound inf f / sup f = {d0:g}")
    # beta*' = g/G^2 int G = (n-1)/n * f int F^(n-1) / int f F^(n-1) >= (n-1)/n * delta0
    bound = first_price_slope_bound(prior)
    if delta > bound * (1 + 1e-12):
        raise ConfigurationError(f"delta = {delta:g} exceeds the equilibrium slope bound "
                                 f"(n-1)/n * inf f / sup f = {bound:g}")
    grid = master_grid(DEFAULT_GRID_SIZE) if grid is None else np.asarray(grid, dtype=float)
    bid = PwlBid(grid, first_price_bid(prior, grid))
    fset.require(bid, "first-price equilibrium")
    return BneSolution(bid, AuctionRule.FIRST_PRICE, prior, d0, delta)


def bne(prior, rule, delta=0.01, grid=None):
    rule = AuctionRule.parse(rule)
    if rule is AuctionRule.SECOND_PRICE:
        return bne_second_price(prior, delta, grid)
    return bne_first_price(prior, delta, grid)


def vi_probes(fset, prior, count=64, seed=0):
    """Feasible comparison bids: random samples plus extreme and known directions."""
    d = fset.delta
    probes = [PwlBid.linear(d), PwlBid.identity(), PwlBid.linear(0.5),
              PwlBid([0.0, 1.0 - d, 1.0], [0.0, 1.0 - d, 1.0 - d + d * d]),
              PwlBid([0.0, 0.5, 1.0], [0.0, 0.5, 0.5 + 0.5 * d]),
              PwlBid([0.0, 0.5, 1.0], [0.0, 0.5 * d, 0.5 * d + 0.5])]
    rng = np.random.default_rng(seed)
    for _ in range(count):
        probes.append(sample_feasible(fset, prior, seed=int(rng.integers(2**63)),
                                      roughness=float(rng.uniform(0.0, 2.0))))
    return [p for p in probes if fset.contains(p)]


def vi_residual(beta_star, prior, rule, delta=0.01, *, probes=None, count=64, seed=0,
                return_witness=False):
    """``max_beta DU(beta*)[beta - beta*]`` over a probe set (<= 0 at a solution)."""
    fset = _feasible_set(delta)
    fset.require(beta_star, "candidate")
    w = symmetric_density(beta_star, prior, rule, delta)
    probes = vi_probes(fset, prior, count, seed) if probes is None else probes
    vals = [w.apply(p - beta_star) for p in probes]
    i = int(np.argmax(vals))
    return (vals[i], probes[i]) if return_witness else vals[i]


def fpa_ode_residual(beta, prior, grid=None):
    """``sup |(G beta)' - x g|`` on ``grid`` with one-sided slopes of ``beta``.

    Both the left and the right slope are checked at every grid point.
    """
    grid = beta.knots if grid is None else np.asarray(grid, dtype=float)
    G, g, b = prior.G(grid), prior.g(grid), beta(grid)
    k = beta.piece_index(grid)
    right = beta.slopes[k]
    left = beta.slopes[np.clip(np.searchsorted(beta.knots, grid, side="left") - 1, 0, beta.n_pieces - 1)]
    target = grid * g
    res = np.maximum(np.abs(g * b + G * right - target), np.abs(g * b + G * left - target))
    return float(np.max(res))
