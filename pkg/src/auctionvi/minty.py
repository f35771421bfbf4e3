"""Minty (dual) variational inequality residuals.

An equilibrium ``beta*`` solves the Minty inequality if
``DU(beta, beta_t)[beta - beta*] <= 0`` for all admissible ``beta, beta_t``.
For the second-price auction the integrand is ``-(x - beta)^2`` times a
nonnegative factor; for the first-price auction a family of three-piece bids
converging to ``x/2`` gives positive residuals.
"""

import json
from dataclasses import dataclass

import numpy as np

from . import _twoslope
from .bidspace import FeasibleSet, PwlBid, TwoSlope, sample_feasible
from .equilibria import bne, first_price_bid
from .errors import ConfigurationError
from .operators import AuctionRule, gateaux_density, symmetric_density

VIOLATION_TOL = 1e-8


@dataclass
class MintyReport:
    residual: float
    error: float
    beta: PwlBid
    beta_tilde: PwlBid
    bne_ref: PwlBid

    @property
    def certified(self):
        """True when the sign of the residual is resolved beyond the quadrature error and 1e-8."""
        return abs(self.residual) > max(self.error, VIOLATION_TOL)

    @property
    def violated(self):
        return self.residual > max(self.error, VIOLATION_TOL)

    def to_dict(self):
        return {"residual": self.residual, "error": self.error, "certified": self.certified,
                "violated": self.violated, "beta": self.beta.to_dict(),
                "beta_tilde": self.beta_tilde.to_dict(), "bne_ref": self.bne_ref.to_dict()}

    def to_json(self):
        return json.dumps(self.to_dict())


def minty_residual(beta, beta_tilde, prior, rule, delta=0.01, *, bne_ref=None):
    """``DU(beta, beta_tilde)[beta - beta*]``."""
    rule = AuctionRule.parse(rule)
    fset = FeasibleSet(delta)
    fset.require(beta, "beta")
    fset.require(beta_tilde, "beta_tilde")
    ref = bne(prior, rule, delta).bid if bne_ref is None else bne_ref
    if beta is beta_tilde or beta == beta_tilde:
        w = symmetric_density(beta, prior, rule, delta)
    else:
        w = gateaux_density(beta, beta_tilde, prior, rule, delta)
    value, err = w.apply_with_error(beta - ref)
    return MintyReport(value, err, beta, beta_tilde, ref)


def fpa_mvi_counterexample(n):
    """Three-piece bid with slopes 1/2, 4/5, 1/5 that agrees with ``x/2`` up to ``n/(n+2)``.

    For ``n = 0`` the first piece is empty and the bid has two pieces.
    """
    if int(n) != n or n < 0:
        raise ValueError("family index must be a nonnegative integer")
    n = int(n)
    a, b = n / (n + 2), (n + 1) / (n + 2)
    knots = [0.0, a, b, 1.0]
    vals = [0.0, a / 2, a / 2 + 0.8 * (b - a), a / 2 + 0.8 * (b - a) + 0.2 * (1 - b)]
    if n == 0:
        knots, vals = knots[1:], vals[1:]
    return PwlBid(knots, vals)


@dataclass
class ViolationMap:
    b1: np.ndarray
    b2: np.ndarray
    residuals: np.ndarray
    feasible: np.ndarray
    rule: str
    delta: float
    threshold: float = VIOLATION_TOL

    @property
    def violated(self):
        return self.feasible & (np.nan_to_num(self.residuals, nan=-np.inf) > self.threshold)

    @property
    def n_violated(self):
        return int(np.count_nonzero(self.violated))

    def cells(self):
        """Rows ``(b1, b2, residual, violated)`` for feasible cells (b1 varies along axis 0)."""
        B1, B2 = np.meshgrid(self.b1, self.b2, indexing="ij")
        m = self.feasible
        return zip(B1[m], B2[m], self.residuals[m], self.violated[m])

    def to_csv(self, path, header=None):
        with open(path, "w") as fh:
            for line in header or ():
                fh.write(f"# {line}\n")
            fh.write("b1,b2,residual,violated\n")
            for a, b, r, v in self.cells():
                fh.write(f"{float(a)!r},{float(b)!r},{float(r)!r},{int(v)}\n")


def lattice(b1_range, b2_range, resolution):
    if int(resolution) < 2:
        raise ConfigurationError("resolution must be at least 2")
    return (np.linspace(b1_range[0], b1_range[1], int(resolution)),
            np.linspace(b2_range[0], b2_range[1], int(resolution)))


def feasible_mask(b1, b2, delta, tol=1e-12):
    B1, B2 = np.meshgrid(b1, b2, indexing="ij")
    return (np.minimum(B1, B2) >= delta - tol) & (0.5 * (B1 + B2) <= 1.0 + tol)


def _bne_values(prior, rule, x):
    if AuctionRule.parse(rule) is AuctionRule.SECOND_PRICE:
        return x
    return first_price_bid(prior, x)


def diagonal_minty_two_slope(b1, b2, prior, rule, delta=0.01):
    """Diagonal Minty residuals ``DU(beta, beta)[beta - beta*]`` for arrays of slopes."""
    b1, b2 = np.broadcast_arrays(np.asarray(b1, dtype=float), np.asarray(b2, dtype=float))
    rule = AuctionRule.parse(rule)
    nq = _twoslope.nodes(prior, extra_degree=1)
    if nq is None:
        ref = bne(prior, rule, delta).bid
        out = np.empty(b1.shape)
        for idx in np.ndindex(b1.shape):
            beta = TwoSlope(b1[idx], b2[idx]).to_bid()
            out[idx] = symmetric_density(beta, prior, rule).apply(beta - ref)
        return out
    x, wf = nq
    w, beta = _twoslope.diagonal_weight(b1, b2, x, prior, rule)
    return (w * (beta - _bne_values(prior, rule, x))) @ wf


def scan_two_slope(rule, prior, delta=0.01, b1_range=(0.0, 1.0), b2_range=(0.0, 1.0),
                   resolution=101):
    """Diagonal Minty residual on a lattice of two-slope bids; infeasible cells are NaN."""
    rule = AuctionRule.parse(rule)
    b1, b2 = lattice(b1_range, b2_range, resolution)
    feas = feasible_mask(b1, b2, delta)
    if not feas.any():
        raise ConfigurationError("no feasible lattice point in the requested ranges")
    B1, B2 = np.meshgrid(b1, b2, indexing="ij")
    res = np.full(B1.shape, np.nan)
    res[feas] = diagonal_minty_two_slope(B1[feas], B2[feas], prior, rule, delta)
    return ViolationMap(b1, b2, res, feas, rule.short, delta)


def scan_two_slope_bilateral(rule, prior, delta=0.01, b1_range=(0.0, 1.0), b2_range=(0.0, 1.0),
                             resolution=21, opponents=32, seed=0):
    """Largest residual over sampled opponent bids at every lattice point.

    The opponents always include the diagonal (``beta_t = beta``) and a
    sample of two-slope opponents from the feasible lattice.
    """
    rule = AuctionRule.parse(rule)
    b1, b2 = lattice(b1_range, b2_range, resolution)
    feas = feasible_mask(b1, b2, delta)
    if not feas.any():
        raise ConfigurationError("no feasible lattice point in the requested ranges")
    rng = np.random.default_rng(seed)
    ref = bne(prior, rule, delta).bid
    opp = []
    while len(opp) < opponents:
        s = TwoSlope(*rng.uniform(delta, 1.0, 2))
        if s.feasible(delta):
            opp.append(s.to_bid())
    res = np.full(feas.shape, np.nan)
    for i, j in zip(*np.nonzero(feas)):
        beta = TwoSlope(b1[i], b2[j]).to_bid()
        vals = [symmetric_density(beta, prior, rule).apply(beta - ref)]
        vals += [gateaux_density(beta, o, prior, rule, delta).apply(beta - ref) for o in opp]
        res[i, j] = max(vals)
    return ViolationMap(b1, b2, res, feas, rule.short, delta)


def minty_probe_sweep(count, prior, rule, delta=0.01, seed=0, *, include_family=True,
                      roughness=1.0):
    """Largest Minty residual over random admissible pairs (plus the first-price family)."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rule = AuctionRule.parse(rule)
    fset = FeasibleSet(delta)
    ref = bne(prior, rule, delta).bid
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(count):
        s1, s2 = (int(v) for v in rng.integers(2**63, size=2))
        beta = sample_feasible(fset, prior, seed=s1, roughness=roughness)
        beta_t = sample_feasible(fset, prior, seed=s2, roughness=roughness)
        rep = minty_residual(beta, beta_t, prior, rule, delta, bne_ref=ref)
        if best is None or rep.residual > best.residual:
            best = rep
    family = []
    if include_family and rule is AuctionRule.FIRST_PRICE and delta <= 0.2:
        for n in range(0, 21):
            beta = fpa_mvi_counterexample(n)
            rep = minty_residual(beta, beta, prior, rule, delta, bne_ref=ref)
            family.append({"n": n, "residual": rep.residual})
            if rep.residual > best.residual:
                best = rep
    return {"count": count, "rule": rule.short, "delta": delta, "seed": seed,
            "max_residual": best.residual, "witness": best.to_dict(), "family": family}
