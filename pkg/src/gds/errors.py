"""Exception types raised across the package."""


class GDSError(Exception):
    """Base class for all package errors."""


class ConfigError(GDSError, ValueError):
    """Invalid or incomplete experiment configuration."""

    def __init__(self, message, field=None):
        self.field = field
        if field is not None:
            message = f"{field}: {message}"
        super().__init__(message)


class NonFinite(GDSError, ArithmeticError):
    """A quadrature or moment diverged (regularity violation)."""


class SupportError(GDSError, ValueError):
    """Target support is not contained in the data support."""


class SpecBoundsViolated(GDSError, ValueError):
    """A perturbation function exceeds its declared bound."""


class DegenerateData(GDSError, ValueError):
    """Data too degenerate to pick a rule-based bandwidth."""


class AllZeroWeights(GDSError, ValueError):
    """No data point lies in the target support."""


class InsufficientMass(GDSError, ArithmeticError):
    """Remaining pool mass vanished before all draws were made."""


class ZeroDenominator(GDSError, ZeroDivisionError):
    """Remaining mass hit zero while evaluating a chain probability."""


class DomainError(GDSError, ValueError):
    """Argument outside the domain of a coefficient formula."""


class InsufficientSignal(GDSError, ValueError):
    """Too many rate-fit points are below the noise floor."""

    def __init__(self, message, excluded=()):
        self.excluded = list(excluded)
        super().__init__(message)
