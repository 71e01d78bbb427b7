"""Exception hierarchy shared across the package."""

from __future__ import annotations


class FwmError(Exception):
    """Base class for every error raised by this package."""


class ContractViolationError(FwmError):
    """An operation was called with inputs that break its contract."""


class DomainError(FwmError):
    """Numerically invalid input (non-finite values, degenerate geometry)."""


class ConfigError(FwmError):
    """Invalid run configuration; carries the offending field name."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


class SegmentationError(FwmError):
    """A frame pixel matched no palette color, or a mask was empty."""

    def __init__(self, message: str, color: tuple[int, int, int] | None = None):
        super().__init__(message)
        self.color = color


class MaskFormatError(FwmError):
    """Malformed mask container file."""


class LabelMismatchError(FwmError):
    """Two latent states / mask sets carry different label sets."""

    def __init__(self, message: str, labels: tuple[str, ...] = ()):
        super().__init__(message)
        self.labels = labels


class ControllerError(FwmError):
    """Image-based controller could not produce an action."""


class PromptError(FwmError):
    """Prompt assembly failed (e.g. empty object set)."""


class ParseError(FwmError):
    """Model reply could not be parsed into a latent state."""

    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text


class LlmError(FwmError):
    """Base class for wire-level LLM client failures."""


class LlmTransportError(LlmError):
    """Connection-level failure (DNS, refused, timeout)."""


class LlmHttpError(LlmError):
    """Non-2xx HTTP status from the endpoint."""

    def __init__(self, status: int, body: str = ""):
        super().__init__(f"endpoint returned HTTP {status}")
        self.status = status
        self.body = body


class LlmAuthError(LlmHttpError):
    """401/403 from the endpoint."""


class LlmRetriesExhaustedError(LlmError):
    """Every parse attempt failed within the retry budget."""

    def __init__(self, attempts: int, last_text: str):
        super().__init__(f"no parsable prediction after {attempts} attempts")
        self.attempts = attempts
        self.last_text = last_text


class OracleError(FwmError):
    """Ground-truth continuation missing for the requested step."""


class SafetyEvalError(FwmError):
    """Safety predicate could not be evaluated (required object missing)."""


class EpisodeFormatError(FwmError):
    """Episode directory is malformed or fails hash verification."""


class RolloutAbortError(FwmError):
    """Closed-loop rollout aborted mid-way; keeps the partial trajectory."""

    def __init__(self, step_index: int, cause: Exception, partial=None):
        super().__init__(f"rollout aborted at predicted step {step_index}: {cause}")
        self.step_index = step_index
        self.cause = cause
        self.partial = partial
