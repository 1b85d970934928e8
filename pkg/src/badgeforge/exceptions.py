"""Exception hierarchy for badgeforge."""


class BadgeForgeError(Exception):
    """Base class for all package errors."""


class DomainError(BadgeForgeError, ValueError):
    """Argument outside the domain of a function (e.g. a quantile outside [0, 1])."""


class NonConvergence(BadgeForgeError, ArithmeticError):
    """An iterative numerical routine exhausted its iteration budget."""


class NoBracket(BadgeForgeError, ValueError):
    """Root-finding endpoints do not bracket a sign change."""


class SummationOverflow(BadgeForgeError, OverflowError):
    """Bernstein summation requested beyond the configured population cap."""


class NotRegular(BadgeForgeError):
    """The ability distribution has a non-concave revenue curve."""


class OutOfRange(BadgeForgeError, ValueError):
    """Requested level lies outside the range of a monotone map."""


class ShapeMismatch(BadgeForgeError):
    """A construction was requested for a status function of the wrong shape class."""


class DivisionDegenerate(BadgeForgeError, ZeroDivisionError):
    """Approximation ratio requested for a mechanism with zero contribution."""


class UnsupportedBeta(BadgeForgeError, ValueError):
    """No closed-form optimal mechanism exists for this tie-breaking parameter."""


class TooLarge(BadgeForgeError, ValueError):
    """Brute-force enumeration requested for too many players."""


class ConfigError(BadgeForgeError, ValueError):
    """Invalid run configuration."""
