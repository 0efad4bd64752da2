class MadaccError(Exception):
    """Base class for every error raised by this package."""


# corpus
class CorpusError(MadaccError):
    pass


class MalformedAnnotation(CorpusError):
    def __init__(self, message: str, source: str = "", line_no: int | None = None):
        where = source
        if line_no is not None:
            where = f"{source}:{line_no}" if source else f"line {line_no}"
        super().__init__(f"{where}: {message}" if where else message)
        self.source = source
        self.line_no = line_no


class OverlappingSpans(CorpusError):
    pass


class MissingEssayFile(CorpusError):
    def __init__(self, essay_id: str, path):
        super().__init__(f"essay {essay_id!r}: missing file {path}")
        self.essay_id = essay_id
        self.path = path


# backend
class BackendError(MadaccError):
    pass


class TransportError(BackendError):
    pass


class AuthError(BackendError):
    pass


class RefusalError(BackendError):
    pass


class CacheError(BackendError):
    def __init__(self, key: str, reason: str):
        super().__init__(f"cache entry {key}: {reason}")
        self.key = key


# agents
class TemplateError(MadaccError):
    pass


class ParseError(MadaccError):
    pass


class IncompleteTranscript(MadaccError):
    pass


# protocol
class DebateFailure(MadaccError):
    def __init__(self, instance_id: str, message: str):
        super().__init__(f"{instance_id}: {message}")
        self.instance_id = instance_id


class ManagerFailure(DebateFailure):
    pass


class JudgeFailure(DebateFailure):
    pass


class BackendFailure(DebateFailure):
    pass


# metrics
class DuplicateInstanceId(MadaccError):
    pass


class EmptyMatrix(MadaccError):
    pass


# cli
class ConfigError(MadaccError):
    pass


class UnknownInstanceId(MadaccError):
    pass
