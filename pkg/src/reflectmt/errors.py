"""Exception hierarchy for the reflective translation pipeline."""

from __future__ import annotations


class ReflectMtError(Exception):
    """Base class for every error raised by this package."""


# --- corpus ---------------------------------------------------------------


class FormatError(ReflectMtError):
    """A corpus line is malformed (missing fields, empty text, bad record)."""

    def __init__(self, line_no: int, reason: str, total_bad: int = 1) -> None:
        self.line_no = line_no
        self.reason = reason
        self.total_bad = total_bad
        suffix = "" if total_bad <= 1 else f" ({total_bad} malformed lines in total)"
        super().__init__(f"line {line_no}: {reason}{suffix}")


class AlignmentError(ReflectMtError):
    """Paired corpus files differ in line count."""


class EmptyCorpus(ReflectMtError):
    """An operation that needs at least one sentence pair received none."""


# --- prompts --------------------------------------------------------------


class UnknownLanguage(ReflectMtError):
    """No human-readable name is registered for a language code."""


class MissingExamples(ReflectMtError):
    """The few-shot strategy was rendered without any in-context examples."""


class EmptyReflection(ReflectMtError):
    """A second-pass prompt was requested with an empty reflection."""


class DelimiterMissing(ReflectMtError):
    """Model output lacks the translation delimiters, or they are out of order."""


class EmptyTranslation(ReflectMtError):
    """The span between the translation delimiters is whitespace-only."""


# --- llm client -----------------------------------------------------------


class LlmError(ReflectMtError):
    """Base class for provider/transport failures."""


class AuthError(LlmError):
    """Credentials are missing or rejected; never retried."""


class RateLimitExhausted(LlmError):
    """Every attempt was turned away with a rate-limit response."""


class ProviderError(LlmError):
    """The provider returned a non-retryable error, or retries ran out."""

    def __init__(self, status: int, body_excerpt: str = "") -> None:
        self.status = status
        self.body_excerpt = body_excerpt
        super().__init__(f"provider returned status {status}: {body_excerpt}")


class Timeout(LlmError):
    """Request timed out on every attempt."""


class FixtureMissingKey(LlmError):
    """A strict mock fixture has no entry for the requested key."""


# --- reflection -----------------------------------------------------------


class SectionMissing(ReflectMtError):
    """A required critique section header is absent from model output."""

    def __init__(self, name: str) -> None:
        self.name = name
        super().__init__(f"critique section missing: {name}")


# --- metrics --------------------------------------------------------------


class EmptyReference(ReflectMtError):
    """The reference tokenizes to nothing; the score is undefined."""


class EmptyBatch(ReflectMtError):
    """Corpus-level scoring was invoked on an empty batch."""


class ScorerUnavailable(ReflectMtError):
    """The semantic scorer endpoint is unreachable or not ready."""


class ScorerProtocolError(ReflectMtError):
    """The semantic scorer replied with an unexpected shape or status."""


# --- stats ----------------------------------------------------------------


class LengthMismatch(ReflectMtError):
    """First- and second-pass score vectors differ in length."""


class AllZeroDifferences(ReflectMtError):
    """Every paired difference is zero; the signed-rank test is undefined."""


# --- pipeline / config ----------------------------------------------------


class ConfigError(ReflectMtError):
    """A run configuration field is missing or invalid."""

    def __init__(self, field: str, reason: str) -> None:
        self.field = field
        self.reason = reason
        super().__init__(f"{field}: {reason}")


class MissingBaseRun(ReflectMtError):
    """A threshold sweep needs a completed refine-everything base run."""


class ResumeMismatch(ReflectMtError):
    """An existing record log does not match the configured sample."""
