"""Exception hierarchy shared by every gasl module."""


class GaslError(Exception):
    """Base class for all framework errors."""

    exit_code = 1


class ConfigError(GaslError):
    exit_code = 2


class InvalidTask(ConfigError):
    pass


class ShotOverflow(ConfigError):
    """Requested shots cannot be drawn from the smallest targeted class."""


class ProtocolViolation(GaslError):
    """Training would see data the zero-/few-shot protocol forbids."""

    exit_code = 3


class IngestError(GaslError):
    exit_code = 4


class ValidationError(GaslError, ValueError):
    """A domain type was constructed with values violating its invariants."""


class DegenerateInput(GaslError, ValueError):
    pass


class DomainError(GaslError, ValueError):
    pass


class ShapeError(GaslError, ValueError):
    pass


class MissingDescription(GaslError, KeyError):
    pass


class ClusterError(GaslError, ValueError):
    pass


class NumericalError(GaslError, ArithmeticError):
    pass


class Unsupported(GaslError, NotImplementedError):
    pass


class EvalError(GaslError, ValueError):
    pass


class EmptyReport(GaslError, ValueError):
    pass


class ExperimentError(GaslError):
    """Wraps a module error with the fingerprint of the failing experiment."""

    def __init__(self, fingerprint, cause):
        super().__init__(f"experiment {fingerprint[:12]} failed: {cause!r}")
        self.fingerprint = fingerprint
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
