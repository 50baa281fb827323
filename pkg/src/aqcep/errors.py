"""Exception hierarchy. Every domain failure derives from :class:`AqcepError`."""


class AqcepError(Exception):
    pass


class SchemaError(AqcepError):
    pass


class ImputationError(AqcepError):
    pass


class ContractError(AqcepError):
    pass


class DomainError(AqcepError, ValueError):
    pass


class TableError(AqcepError):
    pass


class RuleSyntaxError(AqcepError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{line}:{column}: {message}")
        self.line = line
        self.column = column


class MiningError(AqcepError):
    pass


class DeploymentError(AqcepError):
    pass


class StreamOrderError(AqcepError):
    pass


class SinkError(AqcepError):
    """Raised when an alert sink rejects an alert; carries the partial metrics."""

    def __init__(self, message: str, event_seq: int, metrics=None):
        super().__init__(message)
        self.event_seq = event_seq
        self.metrics = metrics


class NTriplesError(AqcepError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class ChunkError(AqcepError):
    pass


class AdvisoryLookupError(AqcepError, KeyError):
    pass


class QuerySyntaxError(AqcepError):
    def __init__(self, message: str, position: int):
        super().__init__(f"at offset {position}: {message}")
        self.position = position


class ModeError(AqcepError):
    pass


class BenchSpecError(AqcepError):
    pass
