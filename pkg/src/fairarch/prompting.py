"""Prompt assembly for the design loop.

The wording lives in a template file, not in code. Its first line becomes the
system message; everything after the first blank line becomes the user message
once five placeholders are filled in:

  {template}  architecture-format description the reply must follow
  {arch}      canonical JSON of the current best architecture
  {eval}      one-line metrics report of that architecture
  {env}       deployment target name (and memory limit when declared)
  {choices}   JSON rendering of the search-space bounds

The shipped default template reproduces the framing used throughout this
project: expert persona, format instruction, then the constraint narrative
with the fairness-over-accuracy-over-hardware priority ordering.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .arch import Architecture, Choices, serialize_architecture, serialize_choices
from .cost import DeviceProfile
from .errors import PromptTooLarge, TemplateError
from .fairness import MetricsRecord, format_metrics_report

PLACEHOLDERS = ("{template}", "{arch}", "{eval}", "{env}", "{choices}")

# what the {arch} and {eval} slots say before anything has been evaluated
COLD_START_TEXT = "none yet — propose an initial design"

DEFAULT_MAX_PROMPT_CHARS = 120_000


@dataclass(frozen=True)
class PromptMeta:
    iteration: int
    best_name: str | None


@dataclass(frozen=True)
class PromptBundle:
    system_text: str
    user_text: str
    metadata: PromptMeta


def load_default_prompt_template() -> str:
    return resources.files("fairarch.data").joinpath("prompt_template.txt").read_text("utf-8")


def load_default_arch_template() -> str:
    return resources.files("fairarch.data").joinpath("arch_template.txt").read_text("utf-8")


def _split_template(prompt_template: str) -> tuple[str, str]:
    """First line is the system message; the rest (past one blank separator
    line) is the user-message template."""
    if not prompt_template.strip():
        raise TemplateError("prompt template is empty")
    lines = prompt_template.split("\n")
    system_text = lines[0].strip()
    if not system_text:
        raise TemplateError("prompt template must start with the system line")
    body = "\n".join(lines[1:]).lstrip("\n")
    if not body.strip():
        raise TemplateError("prompt template has no user-message body")
    for ph in PLACEHOLDERS:
        if ph not in body:
            raise TemplateError(f"prompt template body lacks placeholder {ph}")
    return system_text, body.rstrip("\n")


def render_environment(env: DeviceProfile) -> str:
    if env.memory_limit_bytes is not None:
        return f"{env.name} (memory limit {env.memory_limit_bytes} bytes)"
    return env.name


def generate_prompt(
    best_arch: Architecture | None,
    best_metrics: MetricsRecord | None,
    template: str,
    choices: Choices,
    env: DeviceProfile,
    iteration: int,
    *,
    prompt_template: str | None = None,
    max_chars: int = DEFAULT_MAX_PROMPT_CHARS,
) -> PromptBundle:
    """Fill the prompt template for one iteration.

    `template` is the architecture-format text the reply must follow (the
    {template} slot). On the cold start both best_arch and best_metrics are
    None and the {arch}/{eval} slots ask for an initial design instead.
    """
    if iteration < 1:
        raise ValueError(f"iteration must be >= 1, got {iteration}")
    if (best_arch is None) != (best_metrics is None):
        raise ValueError("best_arch and best_metrics must be both present or both absent")
    if not template.strip():
        raise TemplateError("architecture-format template is empty")

    if prompt_template is None:
        prompt_template = load_default_prompt_template()
    system_text, body = _split_template(prompt_template)

    if best_arch is None:
        arch_text = COLD_START_TEXT
        eval_text = COLD_START_TEXT
        best_name = None
    else:
        arch_text = serialize_architecture(best_arch)
        eval_text = format_metrics_report(best_metrics)
        best_name = best_arch.name

    user_text = body
    for ph, value in (
        ("{template}", template.rstrip("\n")),
        ("{arch}", arch_text),
        ("{eval}", eval_text),
        ("{env}", render_environment(env)),
        ("{choices}", serialize_choices(choices)),
    ):
        user_text = user_text.replace(ph, value)

    total = len(system_text) + len(user_text)
    if total > max_chars:
        raise PromptTooLarge(
            f"prompt is {total} characters, limit {max_chars}; refusing to truncate"
        )
    return PromptBundle(
        system_text=system_text,
        user_text=user_text,
        metadata=PromptMeta(iteration=iteration, best_name=best_name),
    )
