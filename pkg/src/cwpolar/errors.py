"""Domain errors raised by the library.

Every error carries a stable ``code`` string that the CLI prints before
exiting with status 1, so scripts can dispatch on it.
"""


class DomainError(Exception):
    """Base class for all recoverable domain errors."""

    code = "DOMAIN_ERROR"

    def __init__(self, message: str = ""):
        self.message = message
        super().__init__(f"{self.code}: {message}" if message else self.code)


class BadRowSum(DomainError):
    code = "BAD_ROW_SUM"


class Reducible(DomainError):
    code = "REDUCIBLE"


class Singular(DomainError):
    code = "SINGULAR"


class NotYetMixed(DomainError):
    code = "NOT_YET_MIXED"


class BadChannel(DomainError):
    code = "BAD_CHANNEL"


class EmptyEvent(DomainError):
    code = "EMPTY_EVENT"


class BadWeight(DomainError):
    code = "BAD_WEIGHT"


class Unsatisfiable(DomainError):
    code = "UNSATISFIABLE"


class TooLarge(DomainError):
    code = "TOO_LARGE"


class BadLength(DomainError):
    code = "BAD_LENGTH"


class ShapeMismatch(DomainError):
    code = "SHAPE_MISMATCH"


class ZeroEvidence(DomainError):
    code = "ZERO_EVIDENCE"


class EmptyInfo(DomainError):
    code = "EMPTY_INFO"


class Violation(DomainError):
    code = "VIOLATION"


class BadFile(DomainError):
    code = "BAD_FILE"
