"""Exception hierarchy shared by all modules."""


class ReinsuranceError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(ReinsuranceError, ValueError):
    """Invalid model, contract, premium or scenario configuration."""


class DomainError(ReinsuranceError, ValueError):
    """Argument outside the domain of an operation."""


class StructuralError(ReinsuranceError, ValueError):
    """Malformed input data such as unsorted jump lists."""


class UnsupportedPolicyError(ReinsuranceError, TypeError):
    """Policy form not supported by the requested estimator."""


class NumericalError(ReinsuranceError, RuntimeError):
    """A numerical routine failed to converge or bracket a root."""


class ConcavityViolation(NumericalError):
    """Sign pattern of the first-order condition contradicts concavity."""
