"""Ex-ante utility and its Gateaux derivative for symmetric sealed-bid auctions.

The derivative of ``U(., beta_tilde)`` at ``beta`` is a continuous linear
functional on bid directions. It is represented by a pointwise weight ``w``
with ``DU[d] = int d(x) w(x) dF(x)``; :class:`GradientDensity` holds that
weight together with the breakpoints between which it is smooth, so pairings
with piecewise-linear directions are integrated exactly (polynomial priors)
or adaptively to 1e-12.

With ``t(x) = beta_tilde^{-1}(beta(x))`` the weights are

* second price: ``(x - beta(x)) g(t) / beta_tilde'(t)``
* first price:  ``(x - beta(x)) g(t) / beta_tilde'(t) - G(t)``

on ``{beta_tilde(0) <= beta(x) < beta_tilde(1)}``. Above ``beta_tilde(1)`` a
first-price bidder always wins and the weight is ``-G(1) = -1`` (the
``literal=True`` switch drops that term), while a second-price bidder's
payoff no longer depends on the bid.
"""

import enum

import numpy as np

from . import quadrature
from .bidspace import PwlBid
from .errors import ConfigurationError, PreconditionError
from .priors import DEFAULT_GRID_SIZE, integrate_dF, master_grid

SLOPE_TOL = 1e-12


class AuctionRule(enum.Enum):
    SECOND_PRICE = "second_price"
    FIRST_PRICE = "first_price"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("-", "_")
        aliases = {"spa": cls.SECOND_PRICE, "second_price": cls.SECOND_PRICE, "second": cls.SECOND_PRICE,
                   "fpa": cls.FIRST_PRICE, "first_price": cls.FIRST_PRICE, "first": cls.FIRST_PRICE}
        if key not in aliases:
            raise ConfigurationError(f"unknown auction rule {value!r} (use 'spa' or 'fpa')")
        return aliases[key]

    @property
    def short(self):
        return "spa" if self is AuctionRule.SECOND_PRICE else "fpa"


def _preimages(bid, levels):
    """All ``x`` with ``bid(x) = level`` strictly inside a piece, for every level."""
    levels = np.unique(np.asarray(levels, dtype=float))
    k, v = bid.knots, bid.values
    lo = np.minimum(v[:-1], v[1:])[:, None]
    hi = np.maximum(v[:-1], v[1:])[:, None]
    hit = (levels[None, :] > lo) & (levels[None, :] < hi)
    piece, lev = np.nonzero(hit)
    if piece.size == 0:
        return np.zeros(0)
    frac = (levels[lev] - v[piece]) / (v[piece + 1] - v[piece])
    return k[piece] + frac * (k[piece + 1] - k[piece])


def _check_opponent(beta_tilde, delta):
    s = beta_tilde.slopes
    if delta is None:
        if not np.all(s > 0):
            raise PreconditionError("opponent bid must be strictly increasing")
        return
    if np.min(s) < delta * (1 - 1e-9) - SLOPE_TOL:
        raise PreconditionError(
            f"opponent bid has slope {np.min(s):.6g} below delta = {delta:g}")


def _composite_breakpoints(beta, beta_tilde, prior):
    """Breakpoints in ``x`` between which ``t(x)`` and the prior are smooth."""
    bt = beta_tilde
    levels = np.concatenate([bt.values, bt(prior.breakpoints)])
    return quadrature.merge_breakpoints(beta.knots, _preimages(beta, levels), prior.breakpoints)


def _inverse_clipped(beta_tilde, b):
    lo, hi = beta_tilde.values[0], beta_tilde.values[-1]
    return np.interp(np.clip(b, lo, hi), beta_tilde.values, beta_tilde.knots)


class GradientDensity:
    """Weight ``w`` of the linear functional ``d -> int d w dF``.

    ``fn`` evaluates ``w`` at arbitrary points, ``breakpoints`` lists where it
    may be non-smooth and ``degree`` bounds its polynomial degree between
    breakpoints (``None`` if it is not polynomial). ``grid`` and ``w`` hold
    the weight sampled on the master grid for export and plotting.
    """

    def __init__(self, fn, breakpoints, degree, prior, rule, delta, grid=None):
        self._fn = fn
        self.breakpoints = np.asarray(breakpoints, dtype=float)
        self.degree = degree
        self.prior = prior
        self.rule = AuctionRule.parse(rule)
        self.delta = delta
        self.grid = master_grid(DEFAULT_GRID_SIZE) if grid is None else np.asarray(grid, dtype=float)
        self.w = self(self.grid)

    def __call__(self, x):
        return np.asarray(self._fn(np.asarray(x, dtype=float)), dtype=float)

    def __repr__(self):
        return (f"GradientDensity(rule={self.rule.short}, prior={self.prior.spec()}, "
                f"n={self.prior.n}, pieces={self.breakpoints.size - 1})")

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.w)))

    def _pair_degree(self, extra):
        return None if self.degree is None else self.degree + extra

    def apply_with_error(self, d, tol=1e-12):
        """``(int d w dF, quadrature error estimate)`` for a piecewise-linear ``d``."""
        segs = quadrature.merge_breakpoints(self.breakpoints, d.knots)
        return integrate_dF(self.prior, lambda x: d(x) * self(x), segs,
                            degree=self._pair_degree(1), tol=tol, return_error=True)

    def apply(self, d, tol=1e-12):
        return self.apply_with_error(d, tol)[0]

    def load_vector(self, grid):
        """Pairings ``b_i = int phi_i w dF`` with the hat functions of ``grid``."""
        grid = np.asarray(grid, dtype=float)
        bp = quadrature.merge_breakpoints(self.breakpoints, grid, self.prior.breakpoints)
        dd = self.prior.density_degree
        deg = self._pair_degree(1 + dd) if dd is not None else None
        if deg is not None:
            x, wq, _ = quadrature.fixed_rule(bp, quadrature.order_for_degree(deg))
            vals = self(x) * self.prior.f(x)
        else:
            x, wq, vals, _, _ = quadrature.adaptive_rule(lambda y: self(y) * self.prior.f(y), bp)
        k = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
        h = grid[k + 1] - grid[k]
        right = (x - grid[k]) / h
        c = wq * vals
        return np.bincount(k, c * (1 - right), grid.size) + np.bincount(k + 1, c * right, grid.size)

    def sample(self, grid=None):
        grid = self.grid if grid is None else np.asarray(grid, dtype=float)
        return grid, self(grid)

    def to_csv(self, path, grid=None, header=None):
        grid, w = self.sample(grid)
        with open(path, "w") as fh:
            for line in header or ():
                fh.write(f"# {line}\n")
            fh.write("x,w\n")
            for a, b in zip(grid, w):
                fh.write(f"{float(a)!r},{float(b)!r}\n")


def apply_density(w, d, prior=None):
    """``int d w dF``; ``prior`` must match the density's prior if given."""
    if prior is not None and prior != w.prior:
        raise ConfigurationError("density was computed for a different prior")
    return w.apply(d)


def gateaux_density(beta, beta_tilde, prior, rule, delta=None, *, literal=False, grid=None):
    """Derivative of ``U(., beta_tilde)`` at ``beta`` as a :class:`GradientDensity`.

    ``delta`` (if given) is the minimal admissible opponent slope and is
    checked, since the weight divides by ``beta_tilde'``.
    """
    rule = AuctionRule.parse(rule)
    _check_opponent(beta_tilde, delta)
    first = rule is AuctionRule.FIRST_PRICE
    top = beta_tilde.values[-1]
    bottom = beta_tilde.values[0]

    def fn(x):
        b = beta(x)
        t = _inverse_clipped(beta_tilde, b)
        inside = (b >= bottom) & (b < top)
        out = (x - b) * prior.g(t) / beta_tilde.slope(t)
        if first:
            out = out - prior.G(t)
        out = np.where(inside, out, 0.0)
        if first and not literal:
            out = np.where(b > top, -1.0, out)
        return out

    bp = _composite_breakpoints(beta, beta_tilde, prior)
    return GradientDensity(fn, bp, prior.G_degree, prior, rule, delta, grid)


def gateaux_density_spa(beta, beta_tilde, prior, delta=None, grid=None):
    return gateaux_density(beta, beta_tilde, prior, AuctionRule.SECOND_PRICE, delta, grid=grid)


def gateaux_density_fpa(beta, beta_tilde, prior, delta=None, *, literal=False, grid=None):
    return gateaux_density(beta, beta_tilde, prior, AuctionRule.FIRST_PRICE, delta,
                           literal=literal, grid=grid)


def symmetric_density(beta, prior, rule, delta=None, grid=None):
    """Derivative on the symmetric diagonal ``beta_tilde = beta``.

    There ``t(x) = x`` and the weight is ``(x - beta) g / beta'`` (second
    price) or that minus ``G`` (first price). Evaluated without inverting
    ``beta``; agrees with ``gateaux_density(beta, beta, ...)``.
    """
    rule = AuctionRule.parse(rule)
    _check_opponent(beta, delta)
    first = rule is AuctionRule.FIRST_PRICE

    def fn(x):
        out = (x - beta(x)) * prior.g(x) / beta.slope(x)
        if first:
            out = out - prior.G(x)
        return out

    bp = quadrature.merge_breakpoints(beta.knots, prior.breakpoints)
    return GradientDensity(fn, bp, prior.G_degree, prior, rule, delta, grid)


def _paid_to_opponent(beta_tilde, prior, t):
    """``H(t) = int_0^t beta_tilde dG`` in closed form (integration by parts)."""
    k, s = beta_tilde.knots, beta_tilde.slopes
    IG = prior.int_G(k)
    cum = np.concatenate([[0.0], np.cumsum(s * np.diff(IG))])
    p = beta_tilde.piece_index(t)
    tail = cum[p] + s[p] * (prior.int_G(t) - IG[p])
    return beta_tilde(t) * prior.G(t) - tail


def ex_ante_utility(beta, beta_tilde, prior, rule, *, tol=1e-12, return_error=False):
    """Expected payoff of ``beta`` against ``n - 1`` opponents bidding ``beta_tilde``.

    Only ``beta_tilde`` has to be strictly increasing; ``beta`` may be any
    piecewise-linear function, which is what finite differences need.
    """
    rule = AuctionRule.parse(rule)
    _check_opponent(beta_tilde, None)
    first = rule is AuctionRule.FIRST_PRICE

    def integrand(x):
        b = beta(x)
        t = _inverse_clipped(beta_tilde, b)
        win = prior.G(t)
        if first:
            return (x - b) * win
        return x * win - _paid_to_opponent(beta_tilde, prior, t)

    bp = _composite_breakpoints(beta, beta_tilde, prior)
    deg = prior.G_degree
    return integrate_dF(prior, integrand, bp, degree=None if deg is None else deg + 1,
                        tol=tol, return_error=return_error)


def finite_difference_pairing(beta, beta_tilde, d, eps, prior, rule):
    """Forward difference ``(U(beta + eps d) - U(beta)) / eps``."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    u0 = ex_ante_utility(beta, beta_tilde, prior, rule)
    u1 = ex_ante_utility(beta + eps * d, beta_tilde, prior, rule)
    return (u1 - u0) / eps

