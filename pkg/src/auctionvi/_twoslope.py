"""Vectorised quadrature for two-slope bids on the symmetric diagonal.

Used by the lattice scans; the same quantities are available one bid at a
time through :func:`operators.symmetric_density`, which serves as the
independent cross-check.
"""

import numpy as np

from . import quadrature
from .operators import AuctionRule


def nodes(prior, extra_degree=1):
    """Gauss nodes and ``dF`` weights exact for the diagonal weight times a degree-``extra_degree`` factor.

    Returns ``None`` when the prior is not piecewise polynomial.
    """
    if prior.G_degree is None:
        return None
    bp = quadrature.merge_breakpoints([0.0, 0.5, 1.0], prior.breakpoints)
    order = quadrature.order_for_degree(prior.G_degree + extra_degree + prior.density_degree)
    x, w, _ = quadrature.fixed_rule(bp, order)
    return x, w * prior.f(x)


def bid_and_slope(b1, b2, x):
    b1 = np.asarray(b1, dtype=float)[..., None]
    b2 = np.asarray(b2, dtype=float)[..., None]
    low = x <= 0.5
    beta = np.where(low, b1 * x, 0.5 * b1 + b2 * (x - 0.5))
    slope = np.where(low, b1, b2)
    return beta, slope


def diagonal_weight(b1, b2, x, prior, rule):
    beta, slope = bid_and_slope(b1, b2, x)
    w = (x - beta) * prior.g(x) / slope
    if AuctionRule.parse(rule) is AuctionRule.FIRST_PRICE:
        w = w - prior.G(x)
    return w, beta


def directions(x):
    d1 = np.where(x <= 0.5, x, 0.5)
    d2 = np.where(x <= 0.5, 0.0, x - 0.5)
    return d1, d2
