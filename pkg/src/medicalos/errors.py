"""Exception hierarchy shared across MedicalOS subsystems."""

from __future__ import annotations


class MedicalOSError(Exception):
    """Base class for all MedicalOS errors."""


# --- record store ---------------------------------------------------------


class StoreError(MedicalOSError):
    pass


class PathNotWritable(StoreError):
    pass


class CorruptLayout(StoreError):
    pass


class DuplicatePatient(StoreError):
    pass


class InvalidId(StoreError):
    pass


class UnknownPatient(StoreError):
    pass


class UnknownSpecialty(StoreError):
    pass


class AlreadyCentral(StoreError):
    pass


class FilenameCollision(StoreError):
    pass


class EmptyQuery(StoreError):
    pass


# --- llm gateway ----------------------------------------------------------


class GatewayError(MedicalOSError):
    pass


class TransportError(GatewayError):
    pass


class RateLimited(TransportError):
    def __init__(self, message: str, retry_after: float | None = None):
        super().__init__(message)
        self.retry_after = retry_after


class ScriptMiss(GatewayError):
    pass


class InvalidMessages(GatewayError):
    pass


class DimensionMismatch(GatewayError):
    pass


class ZeroVector(GatewayError):
    pass


# --- grounding ------------------------------------------------------------


class GroundingError(MedicalOSError):
    pass


class EmptyTranscript(GroundingError):
    pass


class AllSourcesFailed(GroundingError):
    pass


# --- clinical documents ---------------------------------------------------


class DocumentError(MedicalOSError):
    pass


class GenerationMalformed(DocumentError):
    pass


class EmptyInputs(DocumentError):
    pass


class UnknownSpecialtyProposed(DocumentError):
    pass


# --- viewer ---------------------------------------------------------------


class EmptyKeyword(MedicalOSError):
    pass


# --- workflow engine ------------------------------------------------------


class WorkflowError(MedicalOSError):
    pass


class WrongStage(WorkflowError):
    pass


class BudgetExhausted(WorkflowError):
    pass


class NoFinalAssessment(WorkflowError):
    pass


# --- react orchestrator ---------------------------------------------------


class OrchestratorError(MedicalOSError):
    pass


class DuplicateTool(OrchestratorError):
    pass


class InvalidName(OrchestratorError):
    pass


# --- eval harness ---------------------------------------------------------


class SchemaViolation(MedicalOSError):
    """Case-file validation failure; aggregates per-case messages."""

    def __init__(self, violations: list[str]):
        super().__init__("; ".join(violations))
        self.violations = violations


# --- api service ----------------------------------------------------------


class PortInUse(MedicalOSError):
    pass


class StoreUnavailable(MedicalOSError):
    pass
