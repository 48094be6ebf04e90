"""Exception hierarchy shared by every module of the package."""


class ConcessionError(Exception):
    """Base class for all package errors."""


class InvalidParameterError(ConcessionError, ValueError):
    pass


class DomainError(ConcessionError, ValueError):
    pass


class DegenerateCurveError(ConcessionError, ValueError):
    pass


class EmptyScheduleError(ConcessionError, ValueError):
    pass


class InsufficientDataError(ConcessionError, ValueError):
    pass


class CorpusTooSmallError(ConcessionError, ValueError):
    """Raised when min-max scaling has no spread to work with."""


class EmptyCorpusError(ConcessionError, ValueError):
    pass


class ConfigError(ConcessionError, ValueError):
    pass


class ProtocolViolationError(ConcessionError):
    pass


class CorruptCorpusError(ConcessionError):
    pass


class SchemaError(ConcessionError, ValueError):
    """Input file does not match the documented schema."""


class BridgeError(ConcessionError):
    """Base for malformed external-agent replies."""


class SchemaViolation(BridgeError):
    pass


class TurnMismatch(BridgeError):
    pass


class NonNumericOffer(BridgeError):
    pass


class BridgeTimeout(BridgeError):
    pass


class ClusterError(ConcessionError, ValueError):
    pass
