"""Design-candidate generation through a chat-completion backend.

One round trip sends the prompt bundle as a [system, user] message pair and
returns the assistant text. From that text we extract an architecture
document (first parseable fenced code block, else the largest balanced JSON
object), validate it against the session choices, and retry with structured
violation feedback until a valid design appears or the retry budget runs out.

A scripted mock backend replays canned replies from a file (one JSON string
per line) so the whole loop is deterministic under test.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from typing import Iterable, Protocol

import requests

from .arch import Architecture, Choices, ValidationReport, Violation, parse_architecture, \
    structural_key, validate
from .errors import ApiError, ConfigError, ExhaustedRetries, ExtractionError, \
    MalformedResponse, ParseError, TransportError
from .prompting import PromptBundle

FENCE_RE = re.compile(r"```[^\n`]*\n(.*?)```", re.DOTALL)


@dataclass(frozen=True)
class LlmConfig:
    base_url: str = "https://api.openai.com/v1"
    model_name: str = "gpt-4"
    temperature: float = 0.7
    max_retries: int = 3
    timeout_s: float = 60.0
    api_key_env: str = "FAIRARCH_API_KEY"
    mock_replies_path: str | None = None


@dataclass(frozen=True)
class DesignOutcome:
    architecture: Architecture
    attempts: int
    raw_replies: tuple[str, ...]


class Backend(Protocol):
    def complete(self, bundle: PromptBundle) -> str: ...


def build_request_payload(bundle: PromptBundle, cfg: LlmConfig) -> dict:
    return {
        "model": cfg.model_name,
        "temperature": cfg.temperature,
        "messages": [
            {"role": "system", "content": bundle.system_text},
            {"role": "user", "content": bundle.user_text},
        ],
    }


class HttpBackend:
    """Chat-completions client. One blocking request per call, no retries here;
    the design loop owns retry policy."""

    def __init__(self, cfg: LlmConfig, api_key: str | None = None):
        self.cfg = cfg
        self.api_key = api_key

    def complete(self, bundle: PromptBundle) -> str:
        url = self.cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        try:
            resp = requests.post(
                url,
                json=build_request_payload(bundle, self.cfg),
                headers=headers,
                timeout=self.cfg.timeout_s,
            )
        except requests.RequestException as e:
            raise TransportError(f"chat completion request failed: {e}") from e
        if not 200 <= resp.status_code < 300:
            raise ApiError(resp.status_code, resp.text)
        try:
            doc = resp.json()
            content = doc["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise MalformedResponse(f"response lacks choices[0].message.content: {e}") from e
        if not isinstance(content, str):
            raise MalformedResponse("assistant content is not a string")
        return content


class MockBackend:
    """Scripted replies consumed in order. skip() lets a resumed run fast
    forward past replies already consumed by logged attempts."""

    def __init__(self, replies: list[str]):
        self.replies = list(replies)
        self.cursor = 0

    @classmethod
    def from_file(cls, path: str) -> "MockBackend":
        replies = []
        with open(path, encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    reply = json.loads(line)
                except json.JSONDecodeError as e:
                    raise ParseError(f"mock replies: {e.msg}", line=lineno) from e
                if not isinstance(reply, str):
                    raise ParseError("mock replies: each line must be a JSON string",
                                     line=lineno)
                replies.append(reply)
        return cls(replies)

    def skip(self, n: int) -> None:
        self.cursor += n

    @property
    def consumed(self) -> int:
        return self.cursor

    def complete(self, bundle: PromptBundle) -> str:
        if self.cursor >= len(self.replies):
            raise TransportError(
                f"mock reply list exhausted after {len(self.replies)} replies"
            )
        reply = self.replies[self.cursor]
        self.cursor += 1
        return reply


def make_backend(cfg: LlmConfig, api_key: str | None = None) -> Backend:
    if cfg.mock_replies_path is not None:
        return MockBackend.from_file(cfg.mock_replies_path)
    return HttpBackend(cfg, api_key=api_key)


def complete(bundle: PromptBundle, cfg: LlmConfig, backend: Backend | None = None) -> str:
    """One chat round trip; returns the assistant message content."""
    if backend is None:
        backend = make_backend(cfg)
    return backend.complete(bundle)


# ---------------------------------------------------------------------------
# reply extraction

def _balanced_objects(text: str) -> list[str]:
    """Top-level {...} spans, quote- and escape-aware."""
    spans = []
    depth = 0
    start = -1
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            if depth > 0:
                in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    spans.append(text[start:i + 1])
    return spans


def extract_architecture(reply: str) -> Architecture:
    """Pull an architecture document out of assistant prose.

    Fenced code blocks are tried first, in order; the first one that parses
    wins. Otherwise balanced JSON objects are tried largest-first.
    """
    errors = []
    for block in FENCE_RE.findall(reply):
        try:
            return parse_architecture(block)
        except Exception as e:
            errors.append(str(e))
    for candidate in sorted(_balanced_objects(reply), key=len, reverse=True):
        try:
            return parse_architecture(candidate)
        except Exception as e:
            errors.append(str(e))
    if errors:
        raise ExtractionError(f"no candidate region parses; last error: {errors[-1]}")
    raise ExtractionError("reply contains no code block or JSON object")


# ---------------------------------------------------------------------------
# validity-retry loop

def _failure_report(code: str, message: str) -> ValidationReport:
    return ValidationReport(
        valid=False,
        per_layer_shapes=None,
        violations=(Violation(layer_index=-1, code=code, message=message),),
    )


def _correction_paragraph(report: ValidationReport) -> str:
    lines = ["Your previous reply was rejected for these reasons:"]
    for v in report.violations:
        where = "architecture" if v.layer_index < 0 else f"layer {v.layer_index}"
        lines.append(f"- {v.code} at {where}: {v.message}")
    lines.append("Generate a corrected architecture in the same format.")
    return "\n".join(lines)


def design_candidate(
    bundle: PromptBundle,
    cfg: LlmConfig,
    choices: Choices,
    *,
    backend: Backend | None = None,
    known_keys: Iterable[str] = (),
) -> DesignOutcome:
    """Ask for designs until one validates.

    Each retry re-sends the original prompt plus a paragraph listing what was
    wrong with the latest reply. Architectures structurally identical to an
    entry in known_keys count as failed attempts (code DUPLICATE). Transport
    and API errors are not retried here.
    """
    if cfg.max_retries < 1:
        raise ConfigError(f"max_retries must be >= 1, got {cfg.max_retries}")
    if backend is None:
        backend = make_backend(cfg)
    known = set(known_keys)
    raw_replies: list[str] = []
    current = bundle
    last_report: ValidationReport | None = None
    for attempt in range(1, cfg.max_retries + 1):
        reply = backend.complete(current)
        raw_replies.append(reply)
        try:
            arch = extract_architecture(reply)
        except ExtractionError as e:
            last_report = _failure_report("EXTRACTION_ERROR", str(e))
        else:
            report = validate(arch, choices)
            if report.valid:
                if structural_key(arch) in known:
                    last_report = _failure_report(
                        "DUPLICATE", f"architecture {arch.name!r} matches an archived design"
                    )
                else:
                    return DesignOutcome(
                        architecture=arch,
                        attempts=attempt,
                        raw_replies=tuple(raw_replies),
                    )
            else:
                last_report = report
        current = PromptBundle(
            system_text=bundle.system_text,
            user_text=bundle.user_text + "\n\n" + _correction_paragraph(last_report),
            metadata=bundle.metadata,
        )
    raise ExhaustedRetries(cfg.max_retries, last_report)


# ---------------------------------------------------------------------------
# config document

def llm_config_from_dict(doc: dict) -> LlmConfig:
    if not isinstance(doc, dict):
        raise ConfigError("llm config must be an object")
    known = {"base_url", "model_name", "temperature", "max_retries", "timeout_s",
             "api_key_env", "mock_replies_path"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"llm config: unknown field(s) {sorted(extra)}")
    cfg = LlmConfig()
    merged = {
        "base_url": doc.get("base_url", cfg.base_url),
        "model_name": doc.get("model_name", cfg.model_name),
        "temperature": doc.get("temperature", cfg.temperature),
        "max_retries": doc.get("max_retries", cfg.max_retries),
        "timeout_s": doc.get("timeout_s", cfg.timeout_s),
        "api_key_env": doc.get("api_key_env", cfg.api_key_env),
        "mock_replies_path": doc.get("mock_replies_path", None),
    }
    if not isinstance(merged["base_url"], str) or not merged["base_url"]:
        raise ConfigError("llm config: 'base_url' must be a nonempty string")
    if not isinstance(merged["model_name"], str) or not merged["model_name"]:
        raise ConfigError("llm config: 'model_name' must be a nonempty string")
    t = merged["temperature"]
    if isinstance(t, bool) or not isinstance(t, (int, float)) or t < 0:
        raise ConfigError("llm config: 'temperature' must be a number >= 0")
    r = merged["max_retries"]
    if isinstance(r, bool) or not isinstance(r, int) or r < 1:
        raise ConfigError("llm config: 'max_retries' must be a positive integer")
    ts = merged["timeout_s"]
    if isinstance(ts, bool) or not isinstance(ts, (int, float)) or ts <= 0:
        raise ConfigError("llm config: 'timeout_s' must be a positive number")
    if not isinstance(merged["api_key_env"], str) or not merged["api_key_env"]:
        raise ConfigError("llm config: 'api_key_env' must be a nonempty string")
    mp = merged["mock_replies_path"]
    if mp is not None and not isinstance(mp, str):
        raise ConfigError("llm config: 'mock_replies_path' must be a string or null")
    return LlmConfig(
        base_url=merged["base_url"],
        model_name=merged["model_name"],
        temperature=float(t),
        max_retries=r,
        timeout_s=float(ts),
        api_key_env=merged["api_key_env"],
        mock_replies_path=mp,
    )
