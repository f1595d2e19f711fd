"""Exception hierarchy shared by every stage."""


class SenseLabelError(Exception):
    """Base class for all library errors."""


# ingest
class MalformedFile(SenseLabelError):
    def __init__(self, path, line, reason):
        self.path = str(path)
        self.line = line
        self.reason = reason
        super().__init__(f"{self.path}:{line}: {reason}")


class UnknownAdapter(SenseLabelError):
    pass


class EmptyDataset(SenseLabelError):
    pass


class EmptyRecording(SenseLabelError):
    pass


class EmptySplit(SenseLabelError):
    pass


# numerics
class ZeroVector(SenseLabelError, ValueError):
    pass


class ShapeMismatch(SenseLabelError, ValueError):
    pass


class NonFiniteLoss(SenseLabelError, FloatingPointError):
    def __init__(self, message, epoch=None, batch=None):
        self.epoch = epoch
        self.batch = batch
        where = ""
        if epoch is not None:
            where = f" (epoch {epoch}, batch {batch})"
        super().__init__(f"{message}{where}")


# projection
class PerplexityTooLarge(SenseLabelError, ValueError):
    pass


class DegenerateInput(SenseLabelError, ValueError):
    pass


# prompts
class InsufficientExamples(SenseLabelError, ValueError):
    def __init__(self, class_name, available, requested):
        self.class_name = class_name
        self.available = available
        self.requested = requested
        super().__init__(
            f"class {class_name!r}: requested {requested} examples, {available} available"
        )


# llm client
class TerminalTransportError(SenseLabelError):
    def __init__(self, query_ids, detail=""):
        if isinstance(query_ids, str):
            query_ids = [query_ids]
        self.query_ids = list(query_ids)
        super().__init__(f"requests failed after retries: {', '.join(self.query_ids)} {detail}".rstrip())


class AuthError(SenseLabelError):
    pass


# evaluation
class MissingGroundTruth(SenseLabelError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class AllRefusals(SenseLabelError, ValueError):
    pass


class ConfigError(SenseLabelError, ValueError):
    pass
