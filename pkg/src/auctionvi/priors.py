"""Value distributions on [0, 1] and integration against them.

A :class:`Prior` bundles the value CDF ``F`` with the bidder count ``n`` and
exposes the distribution of the highest competing value, ``G = F**(n-1)`` with
density ``g = G'``. Three families are supported: uniform, power
(``F(x) = x**a``) and tabulated CDFs with linear interpolation.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from . import quadrature
from .errors import ConfigurationError, DomainError

DEFAULT_GRID_SIZE = 1025
_DOMAIN_TOL = 1e-12


def master_grid(size=DEFAULT_GRID_SIZE):
    """Equispaced knot grid on [0, 1] with ``size`` points."""
    if size < 2:
        raise ConfigurationError("grid needs at least two points")
    return np.linspace(0.0, 1.0, int(size))


def _as_unit(x):
    x = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(x)) or np.any(x < -_DOMAIN_TOL) or np.any(x > 1 + _DOMAIN_TOL):
        bad = x[~((x >= -_DOMAIN_TOL) & (x <= 1 + _DOMAIN_TOL))]
        raise DomainError(f"value outside [0, 1]: {bad.ravel()[0]!r}")
    return np.clip(x, 0.0, 1.0)


@dataclass(frozen=True)
class Prior:
    """Symmetric independent private-value prior with ``n`` bidders.

    Use the constructors :meth:`uniform`, :meth:`power`, :meth:`tabulated`
    or :meth:`parse` rather than calling the dataclass directly.
    """

    kind: str
    n: int
    exponent: float = 1.0
    table_x: tuple = field(default=(), repr=False)
    table_F: tuple = field(default=(), repr=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 2:
            raise ConfigurationError(f"bidder count must be an integer >= 2, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        if self.kind not in ("uniform", "power", "tabulated"):
            raise ConfigurationError(f"unknown prior kind {self.kind!r}")
        if self.kind == "power" and not (np.isfinite(self.exponent) and self.exponent >= 1.0):
            raise ConfigurationError("power prior needs exponent >= 1 (bounded density)")
        if self.kind == "tabulated":
            x = np.asarray(self.table_x, dtype=float)
            F = np.asarray(self.table_F, dtype=float)
            if x.ndim != 1 or x.size < 2 or x.size != F.size:
                raise ConfigurationError("tabulated CDF needs matching x and F columns")
            if x[0] != 0.0 or x[-1] != 1.0 or np.any(np.diff(x) <= 0):
                raise ConfigurationError("tabulated x must increase strictly from 0 to 1")
            if abs(F[0]) > 1e-12 or abs(F[-1] - 1) > 1e-12 or np.any(np.diff(F) < 0):
                raise ConfigurationError("tabulated F must be nondecreasing from 0 to 1")

    # -- constructors ------------------------------------------------------

    @classmethod
    def uniform(cls, n=2):
        return cls("uniform", n)

    @classmethod
    def power(cls, exponent, n=2):
        if exponent == 1:
            return cls("uniform", n)
        return cls("power", n, exponent=float(exponent))

    @classmethod
    def tabulated(cls, x, F, n=2):
        F = np.asarray(F, dtype=float).copy()
        F[0], F[-1] = 0.0, 1.0
        return cls("tabulated", n, table_x=tuple(map(float, x)), table_F=tuple(map(float, F)))

    @classmethod
    def from_csv(cls, path, n=2):
        """Load a two-column ``x, F(x)`` CSV (an optional header line is skipped)."""
        xs, Fs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    xs.append(float(row[0]))
                    Fs.append(float(row[1]))
                except ValueError:
                    if xs:
                        raise ConfigurationError(f"malformed CSV row {row!r} in {path}")
        return cls.tabulated(xs, Fs, n)

    @classmethod
    def parse(cls, spec, n=2):
        """Build a prior from ``"uniform"``, ``"power:<a>"`` or ``"csv:<path>"``."""
        spec = spec.strip()
        if spec == "uniform":
            return cls.uniform(n)
        if spec.startswith("power:"):
            try:
                a = float(spec.split(":", 1)[1])
            except ValueError:
                raise ConfigurationError(f"bad power exponent in {spec!r}")
            return cls.power(a, n)
        if spec.startswith("csv:"):
            return cls.from_csv(spec.split(":", 1)[1], n)
        raise ConfigurationError(f"unknown prior spec {spec!r}")

    def spec(self):
        if self.kind == "uniform":
            return "uniform"
        if self.kind == "power":
            return f"power:{self.exponent:g}"
        return "tabulated"

    # -- tabulated helpers -------------------------------------------------

    @property
    def _tx(self):
        return np.asarray(self.table_x)

    @property
    def _tF(self):
        return np.asarray(self.table_F)

    @property
    def _tslopes(self):
        return np.diff(self._tF) / np.diff(self._tx)

    def _tpiece(self, x):
        return np.clip(np.searchsorted(self._tx, x, side="right") - 1, 0, len(self.table_x) - 2)

    # -- distribution functions -------------------------------------------

    @property
    def _a(self):
        return 1.0 if self.kind == "uniform" else self.exponent

    def F(self, x):
        x = _as_unit(x)
        if self.kind == "tabulated":
            return np.interp(x, self._tx, self._tF)
        return x if self.kind == "uniform" else x ** self._a

    def f(self, x):
        """Density; right-continuous at tabulation knots."""
        x = _as_unit(x)
        if self.kind == "tabulated":
            return self._tslopes[self._tpiece(x)]
        if self.kind == "uniform":
            return np.ones_like(x)
        return self._a * x ** (self._a - 1.0)

    def G(self, x):
        return self.F(x) ** (self.n - 1)

    def g(self, x):
        x = _as_unit(x)
        if self.kind in ("uniform", "power"):
            q = self._a * (self.n - 1)
            return q * x ** (q - 1.0)
        return (self.n - 1) * self.F(x) ** (self.n - 2) * self.f(x)

    def int_G(self, x):
        """Antiderivative ``int_0^x G(y) dy``."""
        x = _as_unit(x)
        m = self.n - 1
        if self.kind in ("uniform", "power"):
            q = self._a * m
            return x ** (q + 1.0) / (q + 1.0)
        tx, tF, s = self._tx, self._tF, self._tslopes
        h = np.diff(tx)
        # exact integral of (F_k + s_k (y - x_k))**m over each table piece
        with np.errstate(divide="ignore", invalid="ignore"):
            full = np.where(s > 0, (tF[1:] ** (m + 1) - tF[:-1] ** (m + 1)) / ((m + 1) * s),
                            tF[:-1] ** m * h)
        cum = np.concatenate([[0.0], np.cumsum(full)])
        k = self._tpiece(x)
        Fx = np.interp(x, tx, tF)
        with np.errstate(divide="ignore", invalid="ignore"):
            part = np.where(s[k] > 0, (Fx ** (m + 1) - tF[k] ** (m + 1)) / ((m + 1) * s[k]),
                            tF[k] ** m * (x - tx[k]))
        return cum[k] + part

    # -- bounds ------------------------------------------------------------

    @property
    def breakpoints(self):
        """Points where the density may fail to be smooth (always includes 0 and 1)."""
        if self.kind == "tabulated":
            return self._tx.copy()
        return np.array([0.0, 1.0])

    @property
    def f_inf(self):
        if self.kind == "tabulated":
            return float(np.min(self._tslopes))
        return 1.0 if self.kind == "uniform" else 0.0

    @property
    def f_sup(self):
        if self.kind == "tabulated":
            return float(np.max(self._tslopes))
        return float(self._a)

    @property
    def lipschitz_f(self):
        """Lipschitz constant of ``f``; ``None`` when ``f`` is not Lipschitz."""
        if self.kind == "uniform":
            return 0.0
        if self.kind == "power":
            a = self._a
            return a * (a - 1.0) if a >= 2.0 else None
        s = self._tslopes
        return 0.0 if np.ptp(s) <= 1e-12 * max(1.0, np.max(s)) else None

    @property
    def g_sup(self):
        """``sup |g|`` on [0, 1]."""
        if self.kind in ("uniform", "power"):
            return float(self._a * (self.n - 1))
        tF, s = self._tF, self._tslopes
        return float((self.n - 1) * np.max(tF[1:] ** (self.n - 2) * s))

    @property
    def density_degree(self):
        """Polynomial degree of ``f`` between breakpoints, or ``None`` if not polynomial."""
        if self.kind in ("uniform", "tabulated"):
            return 0
        a = self._a
        return int(a) - 1 if float(a).is_integer() else None

    @property
    def G_degree(self):
        """Polynomial degree of ``G`` between breakpoints, or ``None``."""
        d = self.density_degree
        return None if d is None else (self.n - 1) * (d + 1)

    @property
    def delta0(self):
        """Slope bound ``inf f / sup f`` of the first-price equilibrium."""
        return self.f_inf / self.f_sup


def integrate_dF(prior, integrand, segments=None, *, degree=None, tol=1e-12, return_error=False):
    """Integrate ``integrand`` against ``dF`` over [0, 1].

    ``integrand`` may be a vectorised callable, a bid-like object exposing
    ``knots`` and ``__call__`` (integrated as piecewise linear), or a
    ``numpy.polynomial.Polynomial``. ``segments`` lists breakpoints covering
    [0, 1] between which the integrand is smooth; the prior's own breakpoints
    are merged in. Piecewise polynomials against polynomial densities are
    integrated exactly; everything else adaptively to absolute tolerance
    ``tol``.
    """
    knots = getattr(integrand, "knots", None)
    if knots is not None and degree is None:
        degree = 1
    if isinstance(integrand, np.polynomial.Polynomial):
        degree = integrand.degree() if degree is None else degree
    if segments is None:
        segments = np.array([0.0, 1.0])
    segments = np.asarray(segments, dtype=float)
    if segments.size < 2 or abs(segments[0]) > _DOMAIN_TOL or abs(segments[-1] - 1) > _DOMAIN_TOL \
            or np.any(np.diff(segments) < 0):
        raise DomainError("segments must be sorted and cover [0, 1]")
    bp = quadrature.merge_breakpoints(segments, prior.breakpoints, knots)
    bp[0], bp[-1] = 0.0, 1.0

    def weighted(x):
        return np.asarray(integrand(x), dtype=float) * prior.f(x)

    dd = prior.density_degree
    total_degree = None if (degree is None or dd is None) else int(degree) + dd
    value, err = quadrature.integrate(weighted, bp, degree=total_degree, tol=tol)
    return (value, err) if return_error else value


def eval_F(prior, x):
    return prior.F(x)


def eval_G(prior, x):
    return prior.G(x)


def eval_g(prior, x):
    return prior.g(x)


__all__ = [
    "DEFAULT_GRID_SIZE",
    "Prior",
    "eval_F",
    "eval_G",
    "eval_g",
    "integrate_dF",
    "master_grid",
]
