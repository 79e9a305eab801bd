"""Error hierarchy with stable machine-readable codes.

Every failure that can cross a layer boundary (engine -> HTTP service -> CLI)
is a StoryError subclass carrying a `code` that stays identical at all three
layers: the engine raises it, the service puts it in the response body, and
the CLI prints it before exiting 1. The full table lives in API.md.
"""

from __future__ import annotations

from typing import Any


class StoryError(Exception):
    """Base class for all engine errors."""

    code = "STORY_ERROR"
    http_status = 400

    def __init__(self, message: str = "", **details: Any):
        super().__init__(message or self.code)
        self.details = details


# ── story-model ──────────────────────────────────────────────────────────

class EmptyPremise(StoryError):
    code = "EMPTY_PREMISE"


class DuplicateName(StoryError):
    code = "DUPLICATE_NAME"
    http_status = 409


class TraitOutOfRange(StoryError):
    code = "TRAIT_OUT_OF_RANGE"


class DuplicateTraitName(StoryError):
    code = "DUPLICATE_TRAIT_NAME"


class UnknownCharacter(StoryError):
    code = "UNKNOWN_CHARACTER"
    http_status = 404


class EmptyParticipants(StoryError):
    code = "EMPTY_PARTICIPANTS"


class EmptySituation(StoryError):
    code = "EMPTY_SITUATION"


class InvalidParams(StoryError):
    """Enum membership or numeric-domain violation outside the named cases."""

    code = "INVALID_PARAMS"


class SchemaVersionTooNew(StoryError):
    code = "SCHEMA_VERSION_TOO_NEW"


class MalformedDocument(StoryError):
    """Unparseable or structurally invalid project document.

    Carries either `offset` (byte position for syntax errors) or `path`
    (dotted location for structural errors) in details.
    """

    code = "MALFORMED_DOCUMENT"


class InvariantViolation(StoryError):
    """Syntactically valid document with broken semantics; carries the report."""

    code = "INVARIANT_VIOLATION"

    def __init__(self, report, message: str = ""):
        super().__init__(message or f"{len(report.findings)} invariant violation(s)")
        self.report = report


# ── prompt-builder ───────────────────────────────────────────────────────

class UnknownScene(StoryError):
    code = "UNKNOWN_SCENE"
    http_status = 404


class StaleChain(StoryError):
    """Derived situation chain has stale entries; recompute before extending."""

    code = "STALE_CHAIN"
    http_status = 409


class EmptyNudge(StoryError):
    code = "EMPTY_NUDGE"


class EmptyDraft(StoryError):
    code = "EMPTY_DRAFT"


class EmptyInput(StoryError):
    code = "EMPTY_INPUT"


class UnknownBeat(StoryError):
    code = "UNKNOWN_BEAT"
    http_status = 404


class UnknownSituation(StoryError):
    code = "UNKNOWN_SITUATION"
    http_status = 404


class UpstreamStale(StoryError):
    code = "UPSTREAM_STALE"
    http_status = 409


class BudgetUnsatisfiable(StoryError):
    code = "BUDGET_UNSATISFIABLE"


# ── llm-provider ─────────────────────────────────────────────────────────

class ProviderError(StoryError):
    """Base for failures talking to a completion backend."""

    code = "PROVIDER_ERROR"
    http_status = 502


class TemperatureOutOfRange(StoryError):
    code = "TEMPERATURE_OUT_OF_RANGE"


class AuthFailed(ProviderError):
    code = "AUTH_FAILED"


class RateLimited(ProviderError):
    code = "RATE_LIMITED"
    http_status = 429


class ProviderTimeout(ProviderError):
    code = "TIMEOUT"
    http_status = 504


class MalformedResponse(ProviderError):
    code = "MALFORMED_RESPONSE"


class ContentFiltered(ProviderError):
    code = "CONTENT_FILTERED"


class ProviderUnavailable(ProviderError):
    code = "PROVIDER_UNAVAILABLE"
    http_status = 503


class ScriptExhausted(ProviderError):
    code = "SCRIPT_EXHAUSTED"
    http_status = 500


# ── beat-engine ──────────────────────────────────────────────────────────

class DraftAlreadyPending(StoryError):
    code = "DRAFT_ALREADY_PENDING"
    http_status = 409


class NoPendingDraft(StoryError):
    code = "NO_PENDING_DRAFT"
    http_status = 409


class EmptyGeneration(ProviderError):
    code = "EMPTY_GENERATION"


class NothingToRecompute(StoryError):
    code = "NOTHING_TO_RECOMPUTE"
    http_status = 409


# ── prose-renderer ───────────────────────────────────────────────────────

class EmptyScene(StoryError):
    code = "EMPTY_SCENE"
    http_status = 409


class NoDocument(StoryError):
    code = "NO_DOCUMENT"
    http_status = 409


class MissingProse(StoryError):
    code = "MISSING_PROSE"
    http_status = 409


# ── project-service ──────────────────────────────────────────────────────

class NotFound(StoryError):
    code = "NOT_FOUND"
    http_status = 404


class StorageFailure(StoryError):
    code = "STORAGE_FAILURE"
    http_status = 500


class UnknownRequest(StoryError):
    code = "UNKNOWN_REQUEST"
    http_status = 404


#: code -> class, used by the scripted provider's fault entries and the CLI.
ERRORS_BY_CODE: dict[str, type[StoryError]] = {
    cls.code: cls
    for cls in list(globals().values())
    if isinstance(cls, type) and issubclass(cls, StoryError)
}
