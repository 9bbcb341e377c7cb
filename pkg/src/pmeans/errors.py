"""Exception types shared across the package."""


class PMeansError(Exception):
    """Base class for package errors."""


class ConfigError(PMeansError):
    """Invalid configuration; the message names the offending field."""


class DomainError(PMeansError):
    """Argument outside the mathematical domain of an operation (e.g. s <= 0)."""


class NondifferentiableError(PMeansError):
    """Gradient requested at a point where the objective is not differentiable."""


class NumericalError(PMeansError):
    """A numerical procedure failed to converge to its advertised tolerance."""
