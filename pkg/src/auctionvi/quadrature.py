"""Segment-wise Gauss-Legendre rules, fixed-order and adaptive.

Every integral in the package is evaluated on a list of breakpoints such that
the integrand is smooth (usually polynomial) between consecutive breakpoints.
On such pieces a fixed Gauss-Legendre rule of sufficient order is exact up to
rounding; when no degree bound is known the pieces are bisected until a
p-point rule and its two-halves refinement agree.
"""

from functools import lru_cache

import numpy as np

from .errors import NumericalError

DEFAULT_ORDER = 8
MAX_DEPTH = 48


@lru_cache(maxsize=64)
def _leggauss(p):
    nodes, weights = np.polynomial.legendre.leggauss(p)
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


def order_for_degree(degree):
    """Smallest Gauss-Legendre order that integrates polynomials of ``degree`` exactly."""
    return max(1, int(np.ceil((int(degree) + 1) / 2.0)))


def merge_breakpoints(*arrays, atol=1e-14):
    """Sorted union of breakpoint arrays, collapsing points closer than ``atol``."""
    pts = np.concatenate([np.asarray(a, dtype=float).ravel() for a in arrays if a is not None])
    pts = np.sort(pts)
    if pts.size == 0:
        return pts
    keep = np.empty(pts.size, dtype=bool)
    keep[0] = True
    keep[1:] = np.diff(pts) > atol
    return pts[keep]


def fixed_rule(breakpoints, order):
    """Nodes and weights of a composite ``order``-point rule on the given pieces.

    Returns ``(x, w, seg)`` where ``seg[i]`` is the index of the piece that
    holds node ``x[i]``.
    """
    bp = np.asarray(breakpoints, dtype=float)
    a, b = bp[:-1], bp[1:]
    xi, wi = _leggauss(order)
    half = 0.5 * (b - a)
    mid = 0.5 * (b + a)
    x = (mid[:, None] + half[:, None] * xi[None, :]).ravel()
    w = (half[:, None] * wi[None, :]).ravel()
    seg = np.repeat(np.arange(a.size), order)
    return x, w, seg


def _check_finite(values, x):
    bad = ~np.isfinite(values)
    if np.any(bad):
        raise NumericalError(f"non-finite integrand value at x = {x[bad][0]!r}")


def adaptive_rule(fn, breakpoints, tol=1e-12, order=DEFAULT_ORDER):
    """Adaptive composite Gauss-Legendre rule for a vectorised integrand.

    Each piece is compared against the same rule applied to its two halves;
    pieces whose local discrepancy exceeds ``tol`` times their share of the
    total length (or an absolute floor) are bisected. Returns ``(x, w, values, seg, err)`` where
    ``values = fn(x)``, ``seg`` maps every node to the original piece and
    ``err`` is the summed discrepancy of the accepted pieces.
    """
    bp = np.asarray(breakpoints, dtype=float)
    a, b = bp[:-1], bp[1:]
    owner = np.arange(a.size)
    total = max(bp[-1] - bp[0], np.finfo(float).tiny)
    # absolute floor so that pieces next to integrable singularities terminate
    floor = tol / (4.0 * a.size * MAX_DEPTH)
    xi, wi = _leggauss(order)

    xs, ws, vs, segs = [], [], [], []
    err = 0.0
    for _ in range(MAX_DEPTH):
        if a.size == 0:
            break
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        # coarse rule on [a, b]
        xc = mid[:, None] + half[:, None] * xi[None, :]
        # fine rule on the two halves
        q = 0.5 * half
        xl = (a + q)[:, None] + q[:, None] * xi[None, :]
        xr = (mid + q)[:, None] + q[:, None] * xi[None, :]
        xall = np.concatenate([xc, xl, xr], axis=1)
        fall = np.asarray(fn(xall.ravel()), dtype=float).reshape(xall.shape)
        _check_finite(fall, xall)
        p = order
        coarse = half * (fall[:, :p] @ wi)
        fine = q * (fall[:, p:2 * p] @ wi) + q * (fall[:, 2 * p:] @ wi)
        diff = np.abs(fine - coarse)
        scale = np.abs(fine) * 1e-14
        ok = diff <= np.maximum(np.maximum(tol * (b - a) / total, floor), scale)
        if np.any(ok):
            xs.append(xall[ok, p:].ravel())
            ws.append(np.concatenate([np.repeat(q[ok, None], p, 1) * wi, np.repeat(q[ok, None], p, 1) * wi], axis=1).ravel())
            vs.append(fall[ok, p:].ravel())
            segs.append(np.repeat(owner[ok], 2 * p))
            err += float(np.sum(diff[ok]))
        bad = ~ok
        a = np.concatenate([a[bad], mid[bad]])
        b = np.concatenate([mid[bad], b[bad]])
        owner = np.concatenate([owner[bad], owner[bad]])
    else:
        if a.size:
            raise NumericalError(f"adaptive quadrature did not converge near x = {a[0]!r}")
    if not xs:
        empty = np.zeros(0)
        return empty, empty, empty, np.zeros(0, dtype=int), 0.0
    return (np.concatenate(xs), np.concatenate(ws), np.concatenate(vs),
            np.concatenate(segs), err)


def integrate(fn, breakpoints, *, degree=None, tol=1e-12, order=DEFAULT_ORDER):
    """Integrate ``fn`` over ``[breakpoints[0], breakpoints[-1]]``.

    With a ``degree`` bound valid on every piece a single exact rule is used and
    the returned error is a rounding estimate. Returns ``(value, err)``.
    """
    if degree is not None:
        x, w, _ = fixed_rule(breakpoints, order_for_degree(degree))
        vals = np.asarray(fn(x), dtype=float)
        _check_finite(vals, x)
        terms = w * vals
        return float(np.sum(terms)), float(64 * np.finfo(float).eps * np.sum(np.abs(terms)))
    x, w, vals, _, err = adaptive_rule(fn, breakpoints, tol=tol, order=order)
    terms = w * vals
    return float(np.sum(terms)), err + float(64 * np.finfo(float).eps * np.sum(np.abs(terms)))
