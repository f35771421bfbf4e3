"""Exception hierarchy shared by all modules."""


class AuctionVIError(Exception):
    """Base class for all library errors."""


class DomainError(AuctionVIError, ValueError):
    """An argument lies outside the domain of a function (e.g. x outside [0, 1])."""


class RangeError(AuctionVIError, ValueError):
    """A bid lies outside the range of the bid function being inverted."""


class PreconditionError(AuctionVIError, ValueError):
    """Inputs violate the contract of an operation (infeasible bids, bad slopes)."""


class ConfigurationError(AuctionVIError, ValueError):
    """Parameters that cannot describe a valid problem (e.g. delta > 1)."""


class UnsupportedOperationError(AuctionVIError):
    """The requested operation is not available for this prior."""


class NumericalError(AuctionVIError, ArithmeticError):
    """A numerical routine produced non-finite values or failed to converge."""
