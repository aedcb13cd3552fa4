"""Exception hierarchy shared by every stage of the pipeline."""

from __future__ import annotations

import enum


class PractiqError(Exception):
    """Base class for all library errors."""


class ParseError(PractiqError):
    """Malformed input file (catalog, examples, ratings)."""


class ResolutionError(PractiqError):
    """A catalog key index does not resolve to a column."""


class MissingDatabase(PractiqError):
    pass


class DeltaConflict(PractiqError):
    """A database delta references a missing object or recreates an existing one."""


class SchemaVersionMismatch(PractiqError):
    pass


class SqlParseError(PractiqError):
    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class UnknownTable(PractiqError):
    pass


class RefNotFound(PractiqError):
    """A rewrite targets a column or literal that is not in the tree."""


class ExecErrorKind(str, enum.Enum):
    SYNTAX_ERROR = "SyntaxError"
    UNKNOWN_COLUMN = "UnknownColumn"
    UNKNOWN_TABLE = "UnknownTable"
    OTHER = "Other"


class ExecError(PractiqError):
    def __init__(self, kind: ExecErrorKind, message: str):
        super().__init__(f"{kind.value}: {message}")
        self.kind = kind
        self.message = message


class ProviderRefusal(PractiqError):
    """The provider declined, returned nothing usable, or a non-retryable error."""


class RateLimited(PractiqError):
    """Retries against the live endpoint were exhausted."""


class TagMissing(PractiqError):
    pass


class InsufficientShots(PractiqError):
    pass


class DegenerateData(PractiqError):
    pass


class SkipReason(str, enum.Enum):
    """Closed set of reasons an example is dropped during generation."""

    PRECONDITION = "precondition"
    PROVIDER_REFUSAL = "provider_refusal"
    EXEC_ERROR = "exec_error"
    DELTA_CONFLICT = "delta_conflict"
    INSUFFICIENT_ROWS = "insufficient_rows"
    NO_SUBSTITUTE_COLUMN = "no_substitute_column"
    NO_MATCHING_SQL = "no_matching_sql"
    NO_ALTERNATE_VALUE = "no_alternate_value"
    POSTCONDITION = "postcondition"
    NO_EXECUTABLE_CANDIDATE = "no_executable_candidate"
    MENTION_RULE = "mention_rule"
    BINARY_GATE = "binary_gate"
    QUOTA = "quota"


class Skip(PractiqError):
    """Raised by a stage to drop the current example with a diagnostic."""

    def __init__(self, reason: SkipReason, detail: str = ""):
        super().__init__(f"{reason.value}: {detail}" if detail else reason.value)
        self.reason = reason
        self.detail = detail


class FilterReject(Skip):
    def __init__(self, detail: str = ""):
        super().__init__(SkipReason.MENTION_RULE, detail)
