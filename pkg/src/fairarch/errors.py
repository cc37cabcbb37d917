"""Exception types shared across the package."""

from __future__ import annotations


class FairarchError(Exception):
    """Base class for all errors raised by this package."""


class ParseError(FairarchError):
    """Malformed document text (not valid JSON / CSV)."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        self.message = message
        super().__init__(f"line {line}: {message}" if line is not None else message)


class SchemaError(FairarchError):
    """Structurally valid document that violates the schema: unknown op,
    missing field, or out-of-domain field value."""


class ShapeError(FairarchError):
    """Shape inference failed at a specific layer."""

    def __init__(self, layer_index: int, message: str):
        self.layer_index = layer_index
        self.message = message
        super().__init__(f"layer {layer_index}: {message}")


class EmptyInput(FairarchError):
    """An operation that needs at least one record got none."""


class SchemaMismatch(FairarchError):
    """Records or CSV columns do not line up with the demographic schema."""


class UndefinedRate(FairarchError):
    """A rate (TPR/FPR/TNR) is undefined: zero positives or zero negatives
    in a group slice."""


class TemplateError(FairarchError):
    """Prompt template lacks the required placeholder structure."""


class PromptTooLarge(FairarchError):
    """Assembled prompt exceeds the configured size threshold."""


class TransportError(FairarchError):
    """Could not reach the LLM backend (connect failure, timeout, or an
    exhausted mock reply script)."""


class ApiError(FairarchError):
    """LLM backend answered with a non-2xx status."""

    def __init__(self, status: int, body: str):
        self.status = status
        self.body = body
        super().__init__(f"backend returned HTTP {status}")


class MalformedResponse(FairarchError):
    """LLM backend answered 2xx but the payload lacks the message content."""


class ExtractionError(FairarchError):
    """No parseable architecture document found in an LLM reply."""


class ExhaustedRetries(FairarchError):
    """Design loop used up max_retries without obtaining a valid architecture.

    Carries the validation report of the final failed attempt.
    """

    def __init__(self, attempts: int, last_report):
        self.attempts = attempts
        self.last_report = last_report
        self.last_violations = list(last_report.violations) if last_report is not None else []
        super().__init__(f"no valid architecture after {attempts} attempts")


class ConfigError(FairarchError):
    """Invalid evaluator or search configuration."""


class SpawnError(FairarchError):
    """External trainer process could not be started."""


class ProtocolError(FairarchError):
    """External trainer emitted a line that does not parse as a protocol event."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


class TrainerFailure(FairarchError):
    """External trainer exited nonzero or reported an error event."""

    def __init__(self, exit_code: int | None, stderr_tail: str):
        self.exit_code = exit_code
        self.stderr_tail = stderr_tail
        super().__init__(f"trainer failed (exit {exit_code}): {stderr_tail[-200:]}")


class TrainerTimeout(FairarchError):
    """External trainer did not produce a result within the time budget."""


class CorruptLogError(FairarchError):
    """Run log contains an unparseable non-trailing line."""

    def __init__(self, line: int, message: str):
        self.line = line
        super().__init__(f"line {line}: {message}")
