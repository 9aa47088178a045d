"""Exception hierarchy shared across the package."""


class HerdvolError(Exception):
    """Base class for all package-specific errors."""


class SingularPointError(HerdvolError):
    """Mean-field bull ratio is indeterminate (the 1 + alpha - beta denominator vanishes)."""


class DivergentError(HerdvolError):
    """Social responsivity diverges (herding at the phase-transition point I = 1)."""


class DomainError(HerdvolError):
    """Argument outside the mathematical domain of the operation."""


class ConfigError(HerdvolError):
    """Invalid simulation or run configuration."""


class ConvergenceError(HerdvolError):
    """Numerical quadrature failed to reach the requested tolerance."""


class OutOfBandError(HerdvolError):
    """Option price outside the arbitrage band; no implied volatility exists."""


class NoConvergenceError(HerdvolError):
    """Iterative solver exhausted its iteration budget."""


class ParseError(HerdvolError):
    """Malformed input file; message carries line/field context."""


class ValidationError(HerdvolError):
    """Parsed input violates surface invariants; message lists offending points."""


class UnknownPresetError(HerdvolError):
    """Requested preset name is not in the library."""


class NoImprovementError(HerdvolError):
    """Every calibration descent terminated at its initial simplex."""
