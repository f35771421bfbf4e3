"""Symmetric auction equilibria as variational inequalities over piecewise-linear bids."""

__version__ = "0.1.0"

from .bidspace import FeasibleSet, PwlBid, TwoSlope, project, sample_feasible
from .equilibria import BneSolution, bne, bne_first_price, bne_second_price, fpa_ode_residual, vi_residual
from .errors import (AuctionVIError, ConfigurationError, DomainError, NumericalError, PreconditionError,
                     RangeError, UnsupportedOperationError)
from .minty import MintyReport, ViolationMap, fpa_mvi_counterexample, minty_probe_sweep, minty_residual, scan_two_slope
from .monotonicity import MonotonicityReport, monotone_gap, quasi_mono_check, random_monotonicity_sweep
from .operators import (AuctionRule, GradientDensity, apply_density, ex_ante_utility, finite_difference_pairing,
                        gateaux_density, gateaux_density_fpa, gateaux_density_spa, symmetric_density)
from .priors import Prior, integrate_dF, master_grid

__all__ = [
    "AuctionRule", "AuctionVIError", "BneSolution", "ConfigurationError", "DomainError", "FeasibleSet",
    "GradientDensity", "MintyReport", "MonotonicityReport", "NumericalError", "PreconditionError",
    "Prior", "PwlBid", "RangeError", "TwoSlope", "UnsupportedOperationError", "ViolationMap",
    "apply_density", "bne", "bne_first_price", "bne_second_price", "ex_ante_utility",
    "finite_difference_pairing", "fpa_mvi_counterexample", "fpa_ode_residual", "gateaux_density",
    "gateaux_density_fpa", "gateaux_density_spa", "integrate_dF", "master_grid", "minty_probe_sweep",
    "minty_residual", "monotone_gap", "project", "quasi_mono_check", "random_monotonicity_sweep",
    "sample_feasible", "scan_two_slope", "symmetric_density", "vi_residual",
]
