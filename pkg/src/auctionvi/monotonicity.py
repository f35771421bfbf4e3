"""Monotonicity tests of the symmetric-diagonal gradient operator.

For a pair ``(beta, beta_t)`` with ``d = beta_t - beta`` let
``lhs = DU(beta)[d]`` and ``rhs = DU(beta_t)[d]``. In the sign convention of
utility maximisation the operator is

* monotone if ``rhs - lhs <= 0``,
* pseudo-monotone if ``lhs <= 0`` implies ``rhs <= 0``,
* quasi-monotone if ``lhs < 0`` implies ``rhs <= 0``.

A verdict is only reported when the quadrature error bounds separate the
values from zero by more than :data:`SIGN_TOL`.
"""

import json
from dataclasses import dataclass

import numpy as np

from .bidspace import FeasibleSet, PwlBid, sample_feasible
from .errors import ConfigurationError
from .operators import AuctionRule, symmetric_density

SIGN_TOL = 1e-8

VERDICTS = ("consistent", "violates_quasi", "violates_pseudo_only", "violates_monotone_only",
            "indeterminate")


@dataclass
class MonotonicityReport:
    beta: PwlBid
    beta_tilde: PwlBid
    rule: str
    gap_monotone: float
    lhs: float
    rhs: float
    lhs_err: float
    rhs_err: float
    verdict: str

    @property
    def violates_quasi(self):
        return self.verdict == "violates_quasi"

    @property
    def violates_pseudo(self):
        return self.verdict in ("violates_quasi", "violates_pseudo_only")

    @property
    def violates_monotone(self):
        return self.verdict in ("violates_quasi", "violates_pseudo_only", "violates_monotone_only")

    def to_dict(self):
        return {"beta": self.beta.to_dict(), "beta_tilde": self.beta_tilde.to_dict(),
                "rule": self.rule, "gap_monotone": self.gap_monotone, "lhs": self.lhs,
                "rhs": self.rhs, "lhs_err": self.lhs_err, "rhs_err": self.rhs_err,
                "verdict": self.verdict, "violates_quasi": self.violates_quasi,
                "violates_pseudo": self.violates_pseudo,
                "violates_monotone": self.violates_monotone}

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data):
        return cls(PwlBid.from_dict(data["beta"]), PwlBid.from_dict(data["beta_tilde"]),
                   data["rule"], data["gap_monotone"], data["lhs"], data["rhs"],
                   data["lhs_err"], data["rhs_err"], data["verdict"])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def _sign(value, err, tol=SIGN_TOL):
    """'neg', 'pos', 'zero' (certified zero) or 'grey'."""
    if value < -tol:
        return "neg"
    if value > tol:
        return "pos"
    if abs(value) <= err:
        return "zero"
    return "grey"


def classify(lhs, rhs, lhs_err, rhs_err, tol=SIGN_TOL):
    ls, rs = _sign(lhs, lhs_err, tol), _sign(rhs, rhs_err, tol)
    gap = rhs - lhs
    if rs == "pos" and ls == "neg":
        return "violates_quasi"
    if rs == "pos" and ls == "zero":
        return "violates_pseudo_only"
    if (rs == "pos" and ls == "grey") or (rs == "grey" and ls in ("neg", "zero", "grey")):
        return "indeterminate"
    if gap > tol:
        return "violates_monotone_only"
    if gap > lhs_err + rhs_err:
        return "indeterminate"
    return "consistent"


def _pairings(beta, beta_tilde, prior, rule, delta):
    fset = FeasibleSet(delta)
    fset.require(beta, "beta")
    fset.require(beta_tilde, "beta_tilde")
    d = beta_tilde - beta
    lhs, lerr = symmetric_density(beta, prior, rule, delta).apply_with_error(d)
    rhs, rerr = symmetric_density(beta_tilde, prior, rule, delta).apply_with_error(d)
    return lhs, rhs, lerr, rerr


def monotone_gap(beta, beta_tilde, prior, rule, delta=0.01):
    """``(DU(beta_t) - DU(beta))[beta_t - beta]`` on the symmetric diagonal."""
    lhs, rhs, _, _ = _pairings(beta, beta_tilde, prior, rule, delta)
    return rhs - lhs


def quasi_mono_check(beta, beta_tilde, prior, rule, delta=0.01):
    rule = AuctionRule.parse(rule)
    lhs, rhs, lerr, rerr = _pairings(beta, beta_tilde, prior, rule, delta)
    return MonotonicityReport(beta, beta_tilde, rule.short, rhs - lhs, lhs, rhs, lerr, rerr,
                              classify(lhs, rhs, lerr, rerr))


def _three_piece(slopes, start_values):
    knots = [0.0, 1 / 3, 2 / 3, 1.0]
    return PwlBid.from_slopes(knots, slopes, start_values)


def counterexample(name):
    """Named constructed pair ``(beta, beta_tilde, rule, delta)`` (uniform prior, two bidders)."""
    beta = PwlBid.linear(0.61)
    if name == "spa-prop":
        return beta, _three_piece([1.0, 0.09, 0.63], 0.0), AuctionRule.SECOND_PRICE, 0.09
    if name == "fpa-prop":
        return beta, _three_piece([1.0, 0.1, 0.63], 0.0), AuctionRule.FIRST_PRICE, 0.1
    raise ConfigurationError(f"unknown counterexample {name!r} (use 'spa-prop' or 'fpa-prop')")


COUNTEREXAMPLES = ("spa-prop", "fpa-prop")


def random_monotonicity_sweep(count, prior, rule, delta=0.01, seed=0, roughness=1.0):
    """Verdict frequencies over random feasible pairs and the strongest violation found."""
    if count < 1:
        raise ValueError("count must be at least 1")
    rule = AuctionRule.parse(rule)
    fset = FeasibleSet(delta)
    rng = np.random.default_rng(seed)
    counts = dict.fromkeys(VERDICTS, 0)
    worst, worst_score = None, -np.inf
    for _ in range(count):
        s1, s2 = (int(v) for v in rng.integers(2**63, size=2))
        beta = sample_feasible(fset, prior, seed=s1, roughness=roughness)
        beta_t = sample_feasible(fset, prior, seed=s2, roughness=roughness)
        rep = quasi_mono_check(beta, beta_t, prior, rule, delta)
        counts[rep.verdict] += 1
        score = min(-rep.lhs, rep.rhs) if rep.violates_quasi else rep.gap_monotone - 1.0
        if rep.violates_monotone and score > worst_score:
            worst, worst_score = rep, score
    return {"count": count, "rule": rule.short, "delta": delta, "seed": seed,
            "counts": counts, "worst": None if worst is None else worst.to_dict()}
