"""Exception types shared across the pipeline."""

from __future__ import annotations


class TriageError(Exception):
    """Base class for all pipeline errors."""


# corpus
class EmptyDocument(TriageError):
    pass


class DuplicateDocId(TriageError):
    pass


class EmptyCorpus(TriageError):
    pass


# retrieval
class NoEvidence(TriageError):
    pass


# providers / tools
class ProviderUnavailable(TriageError):
    pass


class MalformedProviderOutput(TriageError):
    pass


class ToolFailure(TriageError):
    pass


class SnapshotMissing(TriageError):
    pass


# messages / bus
class SchemaViolation(TriageError):
    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


class BusClosed(TriageError):
    pass


class MissingIdentity(TriageError):
    pass


# feedback
class MissingRationale(TriageError):
    pass


class MissingOverrideLabel(TriageError):
    pass


class NotAwaitingHuman(TriageError):
    pass


# orchestrator
class StageExhausted(TriageError):
    def __init__(self, stage: str, attempts: int, last_error: Exception | None = None):
        super().__init__(f"stage {stage} failed after {attempts} attempts: {last_error}")
        self.stage = stage
        self.attempts = attempts
        self.last_error = last_error


class StageTimeout(TriageError):
    pass


# audit
class StoreSealed(TriageError):
    pass


class UnknownItem(TriageError):
    pass


class SnapshotMismatch(TriageError):
    pass


class ConfigMismatch(TriageError):
    pass


# eval
class EmptyEvalSet(TriageError):
    pass
