"""Piecewise-linear bid functions and the admissible sets ``B_delta`` / ``W_delta``.

A :class:`PwlBid` is a continuous piecewise-linear function on [0, 1] given by
its knots and nodal values. The same type doubles as a *direction* (no sign or
slope constraints); feasibility is a property checked against a
:class:`FeasibleSet`:

* ``B_delta``: ``beta(0) = 0``, ``0 <= beta <= 1`` and every slope ``>= delta``;
* ``W_delta``: the same without the ``beta(0) = 0`` condition.

Projections onto these sets (in the ``L2(F)`` or ``H1(F)`` metric) are solved
exactly on the knot grid of the input as tridiagonal QPs, see :mod:`.qp`.
"""

import json
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from . import quadrature, qp
from .errors import ConfigurationError, DomainError, PreconditionError, RangeError
from .priors import Prior, integrate_dF

MEMBERSHIP_TOL = 1e-10
_KNOT_TOL = 1e-14


@dataclass(frozen=True, eq=False)
class PwlBid:
    """Continuous piecewise-linear function on [0, 1]."""

    knots: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        k = np.array(self.knots, dtype=float).ravel()
        v = np.array(self.values, dtype=float).ravel()
        if k.size < 2 or k.size != v.size:
            raise ValueError("need at least two knots and one value per knot")
        if abs(k[0]) > 1e-12 or abs(k[-1] - 1.0) > 1e-12:
            raise ValueError("knots must start at 0 and end at 1")
        k[0], k[-1] = 0.0, 1.0
        if np.any(np.diff(k) <= 0):
            raise ValueError("knots must be strictly increasing")
        if not np.all(np.isfinite(v)):
            raise ValueError("bid values must be finite")
        k.setflags(write=False)
        v.setflags(write=False)
        object.__setattr__(self, "knots", k)
        object.__setattr__(self, "values", v)

    # -- constructors ------------------------------------------------------

    @classmethod
    def identity(cls):
        return cls([0.0, 1.0], [0.0, 1.0])

    @classmethod
    def linear(cls, slope, intercept=0.0):
        return cls([0.0, 1.0], [intercept, intercept + slope])

    @classmethod
    def from_function(cls, fn, grid):
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.asarray(fn(grid), dtype=float))

    @classmethod
    def from_slopes(cls, knots, slopes, start=0.0):
        knots = np.asarray(knots, dtype=float)
        vals = start + np.concatenate([[0.0], np.cumsum(np.asarray(slopes, dtype=float) * np.diff(knots))])
        return cls(knots, vals)

    @classmethod
    def zero(cls):
        return cls([0.0, 1.0], [0.0, 0.0])

    # -- evaluation --------------------------------------------------------

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < -1e-12) or np.any(x > 1 + 1e-12):
            raise DomainError("bid evaluated outside [0, 1]")
        return np.interp(x, self.knots, self.values)

    @cached_property
    def slopes(self):
        return np.diff(self.values) / np.diff(self.knots)

    def piece_index(self, x):
        """Index of the piece holding ``x``; right-continuous, last piece at ``x = 1``."""
        return np.clip(np.searchsorted(self.knots, x, side="right") - 1, 0, self.knots.size - 2)

    def slope(self, x):
        """Right-continuous piece slope (left slope at ``x = 1``)."""
        return self.slopes[self.piece_index(np.asarray(x, dtype=float))]

    def inverse(self, b):
        """Value ``x`` with ``beta(x) = b``; requires a strictly increasing bid."""
        if not self.is_strictly_increasing():
            raise PreconditionError("inverse needs a strictly increasing bid function")
        b = np.asarray(b, dtype=float)
        lo, hi = self.values[0], self.values[-1]
        span = 1e-12 * max(1.0, abs(hi))
        if np.any(b < lo - span) or np.any(b > hi + span):
            raise RangeError(f"bid outside the range [{lo}, {hi}] of the bid function")
        return np.interp(b, self.values, self.knots)

    def is_strictly_increasing(self):
        return bool(np.all(np.diff(self.values) > 0))

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.values)))

    @property
    def n_pieces(self):
        return self.knots.size - 1

    # -- algebra -----------------------------------------------------------

    def resample(self, grid):
        grid = np.asarray(grid, dtype=float)
        return PwlBid(grid, self(grid))

    def _binary(self, other, op):
        if isinstance(other, PwlBid):
            grid = common_knots(self, other)
            return PwlBid(grid, op(self(grid), other(grid)))
        return PwlBid(self.knots, op(self.values, float(other)))

    def __add__(self, other):
        return self._binary(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, scalar):
        if isinstance(scalar, PwlBid):
            raise TypeError("product of two bids is not piecewise linear")
        return PwlBid(self.knots, self.values * float(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return PwlBid(self.knots, self.values / float(scalar))

    def __neg__(self):
        return PwlBid(self.knots, -self.values)

    def __eq__(self, other):
        return (isinstance(other, PwlBid) and np.array_equal(self.knots, other.knots)
                and np.array_equal(self.values, other.values))

    __hash__ = None

    def __repr__(self):
        if self.knots.size <= 6:
            return f"PwlBid(knots={self.knots.tolist()}, values={self.values.tolist()})"
        return f"PwlBid(<{self.knots.size} knots>, range=[{self.values[0]:.4g}, {self.values[-1]:.4g}])"

    # -- serialisation -----------------------------------------------------

    def to_dict(self):
        return {"knots": self.knots.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, data):
        return cls(data["knots"], data["values"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def to_csv(self, path, grid=None, header=None):
        """Write ``x, beta(x)`` rows on ``grid`` (default: the bid's knots)."""
        grid = self.knots if grid is None else np.asarray(grid, dtype=float)
        with open(path, "w") as fh:
            for line in header or ():
                fh.write(f"# {line}\n")
            fh.write("x,bid\n")
            for x, y in zip(grid, self(grid)):
                fh.write(f"{float(x)!r},{float(y)!r}\n")


def common_knots(*bids):
    """Sorted union of the knot vectors of ``bids``."""
    grid = quadrature.merge_breakpoints(*[b.knots for b in bids], atol=_KNOT_TOL)
    grid[0], grid[-1] = 0.0, 1.0
    return grid


@dataclass(frozen=True)
class FeasibleSet:
    """``B_delta`` (with ``beta(0) = 0``) or ``W_delta`` (without)."""

    delta: float = 0.01
    variant: str = "B_delta"

    def __post_init__(self):
        if self.variant not in ("B_delta", "W_delta"):
            raise ConfigurationError(f"unknown feasible-set variant {self.variant!r}")
        if not (0.0 < self.delta <= 1.0):
            raise ConfigurationError(f"delta must lie in (0, 1], got {self.delta!r}")

    @property
    def anchored(self):
        return self.variant == "B_delta"

    def violation(self, bid):
        """Largest constraint violation of ``bid`` (0 when feasible)."""
        v = bid.values
        viol = [np.max(self.delta - bid.slopes), np.max(-v), np.max(v - 1.0)]
        if self.anchored:
            viol.append(abs(v[0]))
        return float(max(0.0, *viol))

    def contains(self, bid, tol=MEMBERSHIP_TOL):
        return self.violation(bid) <= tol

    def require(self, bid, name="bid"):
        viol = self.violation(bid)
        if viol > MEMBERSHIP_TOL:
            raise PreconditionError(f"{name} is not in {self.variant} (delta={self.delta}); violation {viol:.3e}")


@dataclass(frozen=True)
class TwoSlope:
    """Two-piece bid with slope ``b1`` on [0, 1/2] and ``b2`` on (1/2, 1]."""

    b1: float
    b2: float

    def to_bid(self):
        return PwlBid([0.0, 0.5, 1.0], [0.0, self.b1 / 2, self.b1 / 2 + self.b2 / 2])

    @classmethod
    def from_bid(cls, bid):
        if bid.knots.size != 3 or bid.knots[1] != 0.5:
            raise ValueError("bid is not a two-slope bid with a kink at 1/2")
        s = bid.slopes
        return cls(float(s[0]), float(s[1]))

    def feasible(self, delta):
        return min(self.b1, self.b2) >= delta and self.b1 / 2 + self.b2 / 2 <= 1.0

    def as_array(self):
        return np.array([self.b1, self.b2])


# -- inner products -------------------------------------------------------

def inner_L2(u, v, prior):
    """``int u v dF``."""
    grid = common_knots(u, v)
    return integrate_dF(prior, lambda x: u(x) * v(x), grid, degree=2)


def inner_H1(u, v, prior):
    """``int u v + u' v' dF``."""
    grid = common_knots(u, v)
    return integrate_dF(prior, lambda x: u(x) * v(x) + u.slope(x) * v.slope(x), grid, degree=2)


def norm_L2(u, prior):
    return float(np.sqrt(max(inner_L2(u, u, prior), 0.0)))


def norm_H1(u, prior):
    return float(np.sqrt(max(inner_H1(u, u, prior), 0.0)))


def _zero_crossings(u):
    v, k = u.values, u.knots
    idx = np.flatnonzero(v[:-1] * v[1:] < 0)
    return k[idx] + v[idx] / (v[idx] - v[idx + 1]) * (k[idx + 1] - k[idx])


def norm_V(u, prior):
    """``int |u| + |u'| dF`` (the ``W^{1,1}(F)`` norm)."""
    grid = quadrature.merge_breakpoints(u.knots, _zero_crossings(u))
    return integrate_dF(prior, lambda x: np.abs(u(x)) + np.abs(u.slope(x)), grid, degree=1)


# -- finite-element matrices ---------------------------------------------

def _cell_rule(grid, prior):
    bp = quadrature.merge_breakpoints(grid, prior.breakpoints)
    dd = prior.density_degree
    order = quadrature.order_for_degree(2 + dd) if dd is not None else 16
    x, w, _ = quadrature.fixed_rule(bp, order)
    k = np.clip(np.searchsorted(grid, x, side="right") - 1, 0, grid.size - 2)
    return x, w * prior.f(x), k


def fem_matrices(grid, prior):
    """Exact mass and stiffness matrices of the hat basis on ``grid`` in ``L2(F)``.

    Returns ``(mass, stiffness)`` as sparse tridiagonal matrices.
    """
    grid = np.asarray(grid, dtype=float)
    m = grid.size
    h = np.diff(grid)
    x, wf, k = _cell_rule(grid, prior)
    left = (grid[k + 1] - x) / h[k]
    right = (x - grid[k]) / h[k]
    md = np.bincount(k, wf * left * left, m) + np.bincount(k + 1, wf * right * right, m)
    mo = np.bincount(k, wf * left * right, m - 1)
    cell = np.bincount(k, wf, m - 1) / h ** 2
    sd = np.concatenate([cell, [0.0]]) + np.concatenate([[0.0], cell])
    return qp.tridiag(md, mo), qp.tridiag(sd, -cell)


def metric_matrix(grid, prior, metric):
    mass, stiff = fem_matrices(grid, prior)
    if metric == "L2":
        return mass
    if metric == "H1":
        return (mass + stiff).tocsr()
    raise ConfigurationError(f"unknown metric {metric!r} (use 'L2' or 'H1')")


def grid_norm(values, matrix):
    values = np.asarray(values, dtype=float)
    return float(np.sqrt(max(values @ (matrix @ values), 0.0)))


# -- projection -----------------------------------------------------------

def set_constraints(grid, fset):
    """Constraint rows ``A z >= b`` of ``fset`` for nodal values on ``grid``.

    For ``B_delta`` the first node is fixed at zero and eliminated, so the
    rows act on ``z[1:]``.
    """
    grid = np.asarray(grid, dtype=float)
    h = np.diff(grid)
    m = grid.size
    d = fset.delta
    if fset.anchored:
        nv = m - 1
        rows = [sp.csr_matrix(([1.0], ([0], [0])), shape=(1, nv))]
        rhs = [np.array([d * h[0]])]
        if nv > 1:
            diff = sp.diags([-np.ones(nv - 1), np.ones(nv - 1)], [0, 1], shape=(nv - 1, nv))
            rows.append(diff)
            rhs.append(d * h[1:])
    else:
        nv = m
        rows = [sp.csr_matrix(([1.0], ([0], [0])), shape=(1, nv))]
        rhs = [np.array([0.0])]
        rows.append(sp.diags([-np.ones(nv - 1), np.ones(nv - 1)], [0, 1], shape=(nv - 1, nv)))
        rhs.append(d * h)
    rows.append(sp.csr_matrix(([-1.0], ([0], [nv - 1])), shape=(1, nv)))
    rhs.append(np.array([-1.0]))
    return sp.vstack(rows, format="csr"), np.concatenate(rhs)


def solve_on_set(Q, c, grid, fset):
    """Minimise ``1/2 z'Qz - c'z`` over nodal values of ``fset`` on ``grid``.

    Returns ``(z, result)`` with ``z`` the full nodal vector.
    """
    A, b = set_constraints(grid, fset)
    Q = sp.csr_matrix(Q)
    if fset.anchored:
        res = qp.solve_qp(Q[1:, 1:], np.asarray(c)[1:], A, b)
        z = np.concatenate([[0.0], res.x])
    else:
        res = qp.solve_qp(Q, c, A, b)
        z = res.x
    return _snap(z, grid, fset), res


def _snap(z, grid, fset):
    # remove rounding-level constraint violations (of order 1e-14 in value,
    # which become 1e-11 in slope on fine grids)
    step = fset.delta * np.diff(grid)
    z = z.copy()
    z[0] = 0.0 if fset.anchored else max(z[0], 0.0)
    for i in range(1, z.size):
        z[i] = max(z[i], z[i - 1] + step[i - 1])
    z[-1] = min(z[-1], 1.0)
    for i in range(z.size - 2, 0 if fset.anchored else -1, -1):
        z[i] = min(z[i], z[i + 1] - step[i])
    return z


def project(beta, fset, metric="L2", prior=None, grid=None, return_info=False):
    """Metric projection of ``beta`` onto ``fset`` over PL functions on ``grid``.

    ``grid`` defaults to the knots of ``beta``. Feasible inputs are returned
    unchanged.
    """
    prior = Prior.uniform() if prior is None else prior
    grid = beta.knots if grid is None else np.asarray(grid, dtype=float)
    y = beta(grid)
    current = PwlBid(grid, y)
    if fset.contains(current):
        return (current, None) if return_info else current
    Q = metric_matrix(grid, prior, metric)
    z, res = solve_on_set(Q, Q @ y, grid, fset)
    out = PwlBid(grid, z)
    return (out, res) if return_info else out


# -- sampling -------------------------------------------------------------

def sample_feasible(fset, prior=None, seed=None, roughness=1.0, grid=None):
    """Random member of ``fset``.

    ``roughness`` controls the number of pieces and the dispersion of their
    slopes; ``roughness = 0`` returns a linear bid ``a x`` with
    ``delta <= a <= 1``. Some pieces are pinned at the minimal slope so that
    near-boundary strategies are well represented. When ``grid`` is given
    the result is resampled onto it (which preserves feasibility).
    """
    if roughness < 0:
        raise ValueError("roughness must be nonnegative")
    rng = np.random.default_rng(seed)
    d = fset.delta
    if roughness == 0:
        bid = PwlBid.linear(rng.uniform(d, 1.0))
        return bid.resample(grid) if grid is not None else bid

    pieces = 1 + min(int(rng.poisson(3.0 * roughness)), 40)
    inner = np.sort(rng.uniform(0.0, 1.0, pieces - 1))
    knots = quadrature.merge_breakpoints([0.0], inner, [1.0], atol=1e-6)
    knots[0], knots[-1] = 0.0, 1.0
    h = np.diff(knots)
    raw = rng.lognormal(0.0, roughness, h.size)
    raw[rng.uniform(size=h.size) < min(0.5, 0.25 * roughness)] = 0.0
    top = 1.0 if rng.uniform() < 0.2 else rng.uniform(d, 1.0)
    mass = float(h @ raw)
    slopes = d + (raw * (top - d) / mass if mass > 0 else 0.0 * raw)
    start = 0.0 if fset.anchored else rng.uniform(0.0, 1.0 - top)
    vals = start + np.concatenate([[0.0], np.cumsum(slopes * h)])
    vals = np.minimum(vals, 1.0)
    bid = PwlBid(knots, vals)
    if grid is not None:
        bid = bid.resample(grid)
    return bid
