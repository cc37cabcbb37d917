"""The search loop: select best-so-far, prompt, design, evaluate, archive.

Runs a fixed number of iterations. Every iteration appends one JSONL record
to the run log and fsyncs it before the next backend call, so a killed run
can resume: the archive is rebuilt from logged records and, under a scripted
mock backend, the reply cursor fast-forwards past already-consumed attempts.

Candidate selection is lexicographic over configurable metric keys; the
default prefers low unfairness, then high validation accuracy, then few
parameters, mirroring the priority ordering stated in the prompt.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass
from datetime import datetime, timezone

from .arch import Architecture, Choices, architecture_from_dict, architecture_to_dict, \
    parse_choices, structural_key
from .cost import DeviceProfile, parse_profile
from .designer import Backend, LlmConfig, MockBackend, design_candidate, \
    llm_config_from_dict, make_backend
from .errors import ConfigError, CorruptLogError, ExhaustedRetries, FairarchError
from .evaluation import EvaluatorSpec, evaluate, evaluator_spec_from_dict
from .fairness import MetricsRecord, metrics_from_dict, metrics_to_dict
from .prompting import PromptBundle, generate_prompt, load_default_arch_template, \
    load_default_prompt_template
from .resources_util import read_packaged

DEFAULT_POLICY: tuple[tuple[str, str], ...] = (
    ("unfairness", "asc"),
    ("valid_acc", "desc"),
    ("param_count", "asc"),
)

_METRIC_FIELDS = frozenset({
    "train_loss", "train_acc", "valid_loss", "valid_acc", "test_acc",
    "unfairness", "eodd", "eopp1", "eopp2",
})
_COST_FIELDS = frozenset({
    "param_count", "flops", "peak_memory_bytes", "latency_s", "throughput_items_per_s",
})


@dataclass(frozen=True)
class ArchiveEntry:
    name: str
    architecture: Architecture
    metrics: MetricsRecord
    iteration: int


class Archive:
    """Insertion-ordered store of evaluated candidates, keyed by unique name.
    Iterations must arrive strictly increasing."""

    def __init__(self) -> None:
        self._entries: dict[str, ArchiveEntry] = {}
        self._last_iteration = 0

    def add(self, name: str, architecture: Architecture, metrics: MetricsRecord,
            iteration: int) -> ArchiveEntry:
        if name in self._entries:
            raise ValueError(f"archive already has an entry named {name!r}")
        if iteration <= self._last_iteration:
            raise ValueError(
                f"iteration {iteration} not after previous {self._last_iteration}"
            )
        entry = ArchiveEntry(name, architecture, metrics, iteration)
        self._entries[name] = entry
        self._last_iteration = iteration
        return entry

    def entries(self) -> list[ArchiveEntry]:
        return list(self._entries.values())

    def get(self, name: str) -> ArchiveEntry | None:
        return self._entries.get(name)

    def structural_keys(self) -> set[str]:
        return {structural_key(e.architecture) for e in self._entries.values()}

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)


# ---------------------------------------------------------------------------
# selection

def validate_policy(policy: tuple[tuple[str, str], ...]) -> None:
    if not policy:
        raise ConfigError("selection policy must not be empty")
    for field, direction in policy:
        if field not in _METRIC_FIELDS and field not in _COST_FIELDS:
            raise ConfigError(f"selection policy: unknown metric field {field!r}")
        if direction not in ("asc", "desc"):
            raise ConfigError(f"selection policy: direction must be asc or desc, "
                              f"got {direction!r}")


def _field_value(metrics: MetricsRecord, field: str) -> float | None:
    if field in _COST_FIELDS:
        return getattr(metrics.cost, field)
    return getattr(metrics, field)


def _policy_key(entry: ArchiveEntry, policy) -> tuple:
    # None (unavailable metric) always loses to any real value
    key = []
    for field, direction in policy:
        v = _field_value(entry.metrics, field)
        if v is None:
            key.append((1, 0.0))
        else:
            key.append((0, float(v) if direction == "asc" else -float(v)))
    key.append(entry.iteration)
    return tuple(key)


def get_best_metrics(archive: Archive,
                     policy: tuple[tuple[str, str], ...] = DEFAULT_POLICY,
                     ) -> ArchiveEntry | None:
    """Winner of the lexicographic comparison; ties go to the earliest
    iteration. None on an empty archive."""
    validate_policy(policy)
    entries = archive.entries()
    if not entries:
        return None
    return min(entries, key=lambda e: _policy_key(e, policy))


# ---------------------------------------------------------------------------
# run log

@dataclass(frozen=True)
class LogRecord:
    iteration: int
    name: str | None
    architecture: Architecture | None
    metrics: MetricsRecord | None
    prompt_hash: str
    attempts: int
    status: str
    timestamp: str
    error: str | None = None


@dataclass(frozen=True)
class LoadedRun:
    archive: Archive
    records: tuple[LogRecord, ...]
    dropped_lines: int


def prompt_hash(bundle: PromptBundle) -> str:
    text = bundle.system_text + "\x00" + bundle.user_text
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def log_record_to_dict(r: LogRecord) -> dict:
    doc = {
        "iteration": r.iteration,
        "name": r.name,
        "architecture": None if r.architecture is None
        else architecture_to_dict(r.architecture),
        "metrics": None if r.metrics is None else metrics_to_dict(r.metrics),
        "prompt_hash": r.prompt_hash,
        "attempts": r.attempts,
        "status": r.status,
        "timestamp": r.timestamp,
    }
    if r.error is not None:
        doc["error"] = r.error
    return doc


def append_log(path: str, record: LogRecord) -> None:
    """Append one line and force it to disk before returning."""
    parent = os.path.dirname(path)
    if parent:
        os.makedirs(parent, exist_ok=True)
    with open(path, "a", encoding="utf-8") as f:
        f.write(json.dumps(log_record_to_dict(record)) + "\n")
        f.flush()
        os.fsync(f.fileno())


def _record_from_dict(doc, lineno: int) -> LogRecord:
    if not isinstance(doc, dict):
        raise CorruptLogError(lineno, "record is not an object")
    try:
        iteration = doc["iteration"]
        status = doc["status"]
        prompt_h = doc["prompt_hash"]
        attempts = doc["attempts"]
        timestamp = doc["timestamp"]
    except KeyError as e:
        raise CorruptLogError(lineno, f"record missing field {e}") from e
    if isinstance(iteration, bool) or not isinstance(iteration, int) or iteration < 1:
        raise CorruptLogError(lineno, "'iteration' must be a positive integer")
    if status not in ("ok", "failed"):
        raise CorruptLogError(lineno, f"unknown status {status!r}")
    if isinstance(attempts, bool) or not isinstance(attempts, int) or attempts < 0:
        raise CorruptLogError(lineno, "'attempts' must be a nonnegative integer")
    if not isinstance(prompt_h, str) or not isinstance(timestamp, str):
        raise CorruptLogError(lineno, "'prompt_hash' and 'timestamp' must be strings")

    architecture = None
    metrics = None
    name = doc.get("name")
    if status == "ok":
        if not isinstance(name, str) or not name:
            raise CorruptLogError(lineno, "ok record needs a name")
        try:
            architecture = architecture_from_dict(doc.get("architecture"))
            metrics = metrics_from_dict(doc.get("metrics"))
        except FairarchError as e:
            raise CorruptLogError(lineno, str(e)) from e
    error = doc.get("error")
    if error is not None and not isinstance(error, str):
        raise CorruptLogError(lineno, "'error' must be a string")
    return LogRecord(
        iteration=iteration,
        name=name if status == "ok" else None,
        architecture=architecture,
        metrics=metrics,
        prompt_hash=prompt_h,
        attempts=attempts,
        status=status,
        timestamp=timestamp,
        error=error,
    )


def load_run(path: str) -> LoadedRun:
    """Rebuild run state from the log. A torn final line (no parse, no
    trailing newline) is dropped and counted; torn lines anywhere else are an
    error."""
    with open(path, encoding="utf-8") as f:
        raw = f.read()
    lines = raw.split("\n")
    complete, tail = lines[:-1], lines[-1]
    records: list[LogRecord] = []
    for lineno, line in enumerate(complete, start=1):
        if not line.strip():
            raise CorruptLogError(lineno, "blank line in append-only log")
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as e:
            raise CorruptLogError(lineno, f"unparseable JSON: {e.msg}") from e
        records.append(_record_from_dict(doc, lineno))
    dropped = 0
    if tail.strip():
        lineno = len(complete) + 1
        try:
            records.append(_record_from_dict(json.loads(tail), lineno))
        except (json.JSONDecodeError, CorruptLogError):
            dropped = 1

    archive = Archive()
    for r in records:
        if r.status == "ok":
            try:
                archive.add(r.name, r.architecture, r.metrics, r.iteration)
            except ValueError as e:
                raise CorruptLogError(0, f"inconsistent log: {e}") from e
    return LoadedRun(archive=archive, records=tuple(records), dropped_lines=dropped)


# ---------------------------------------------------------------------------
# configuration

@dataclass(frozen=True)
class SearchConfig:
    iter_max: int
    template_path: str | None
    prompt_template_path: str | None
    choices: Choices
    env: DeviceProfile
    llm: LlmConfig
    evaluator: EvaluatorSpec
    run_log_path: str
    selection_policy: tuple[tuple[str, str], ...] = DEFAULT_POLICY
    fail_fast: bool = False


def _resolve(base_dir: str, path: str) -> str:
    return path if os.path.isabs(path) else os.path.join(base_dir, path)


def load_search_config(path: str) -> SearchConfig:
    """Read the aggregate config file. Relative paths inside it are taken
    relative to the file's own directory."""
    try:
        with open(path, encoding="utf-8") as f:
            text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read config {path!r}: {e}") from e
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path!r}: invalid JSON at line {e.lineno}: {e.msg}") from e
    if not isinstance(doc, dict):
        raise ConfigError("config root must be an object")
    known = {"iter_max", "template_path", "prompt_template_path", "choices_path",
             "device_path", "llm", "evaluator", "run_log_path", "selection_policy",
             "fail_fast"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"config: unknown field(s) {sorted(extra)}")
    base_dir = os.path.dirname(os.path.abspath(path))

    iter_max = doc.get("iter_max", 10)
    if isinstance(iter_max, bool) or not isinstance(iter_max, int) or iter_max < 1:
        raise ConfigError("config: 'iter_max' must be a positive integer")

    def _opt_path(key: str) -> str | None:
        v = doc.get(key)
        if v is None:
            return None
        if not isinstance(v, str) or not v:
            raise ConfigError(f"config: {key!r} must be a nonempty string")
        return _resolve(base_dir, v)

    template_path = _opt_path("template_path")
    prompt_template_path = _opt_path("prompt_template_path")

    choices_path = _opt_path("choices_path")
    try:
        if choices_path is None:
            choices = parse_choices(read_packaged("choices_default.json"))
        else:
            with open(choices_path, encoding="utf-8") as f:
                choices = parse_choices(f.read())
    except (OSError, FairarchError) as e:
        raise ConfigError(f"config: bad choices file: {e}") from e

    device_path = _opt_path("device_path")
    try:
        if device_path is None:
            env = parse_profile(read_packaged("device_nvidia_a10.json"))
        else:
            with open(device_path, encoding="utf-8") as f:
                env = parse_profile(f.read())
    except (OSError, FairarchError) as e:
        raise ConfigError(f"config: bad device profile: {e}") from e

    llm = llm_config_from_dict(doc.get("llm", {}))
    if llm.mock_replies_path is not None:
        llm = dataclasses.replace(
            llm, mock_replies_path=_resolve(base_dir, llm.mock_replies_path)
        )

    ev_doc = doc.get("evaluator")
    if ev_doc is None:
        raise ConfigError("config: 'evaluator' section is required")
    if isinstance(ev_doc, dict) and isinstance(ev_doc.get("dataset"), dict):
        ds = dict(ev_doc["dataset"])
        for key in ("path", "schema_path"):
            if isinstance(ds.get(key), str):
                ds[key] = _resolve(base_dir, ds[key])
        ev_doc = {**ev_doc, "dataset": ds}
    evaluator = evaluator_spec_from_dict(ev_doc, env)

    run_log_path = _opt_path("run_log_path") or os.path.join(base_dir, "run_log.jsonl")

    policy_doc = doc.get("selection_policy")
    if policy_doc is None:
        policy = DEFAULT_POLICY
    else:
        if (not isinstance(policy_doc, list)
                or not all(isinstance(p, list) and len(p) == 2
                           and all(isinstance(x, str) for x in p) for p in policy_doc)):
            raise ConfigError("config: 'selection_policy' must be [field, direction] pairs")
        policy = tuple((p[0], p[1]) for p in policy_doc)
    validate_policy(policy)

    fail_fast = doc.get("fail_fast", False)
    if not isinstance(fail_fast, bool):
        raise ConfigError("config: 'fail_fast' must be true or false")

    return SearchConfig(
        iter_max=iter_max,
        template_path=template_path,
        prompt_template_path=prompt_template_path,
        choices=choices,
        env=env,
        llm=llm,
        evaluator=evaluator,
        run_log_path=run_log_path,
        selection_policy=policy,
        fail_fast=fail_fast,
    )


# ---------------------------------------------------------------------------
# the loop

@dataclass(frozen=True)
class SearchResult:
    name: str
    architecture: Architecture
    metrics: MetricsRecord
    archive: Archive


def _unique_name(archive: Archive, base: str, iteration: int) -> str:
    if base not in archive:
        return base
    name = f"{base}-{iteration}"
    k = 2
    while name in archive:
        name = f"{base}-{iteration}-{k}"
        k += 1
    return name


def run_search(cfg: SearchConfig, *, backend: Backend | None = None,
               resume: bool = False) -> SearchResult:
    """Execute the loop for iter_max iterations and return the optimum.

    Failed iterations (design retries exhausted, evaluator errors) are logged
    with status "failed" and consume their slot; transport-level errors abort.
    With resume=True the run log is reloaded first and only the remaining
    iterations execute.
    """
    validate_policy(cfg.selection_policy)
    try:
        if cfg.template_path is None:
            template_text = load_default_arch_template()
        else:
            with open(cfg.template_path, encoding="utf-8") as f:
                template_text = f.read()
        if cfg.prompt_template_path is None:
            prompt_template_text = load_default_prompt_template()
        else:
            with open(cfg.prompt_template_path, encoding="utf-8") as f:
                prompt_template_text = f.read()
    except OSError as e:
        raise ConfigError(f"cannot read template: {e}") from e

    if backend is None:
        backend = make_backend(cfg.llm, api_key=os.environ.get(cfg.llm.api_key_env))

    archive = Archive()
    start_iteration = 1
    if resume and os.path.exists(cfg.run_log_path):
        loaded = load_run(cfg.run_log_path)
        archive = loaded.archive
        if loaded.records:
            start_iteration = max(r.iteration for r in loaded.records) + 1
            if isinstance(backend, MockBackend):
                backend.skip(sum(r.attempts for r in loaded.records))

    for iteration in range(start_iteration, cfg.iter_max + 1):
        best = get_best_metrics(archive, cfg.selection_policy)
        bundle = generate_prompt(
            best.architecture if best else None,
            best.metrics if best else None,
            template_text,
            cfg.choices,
            cfg.env,
            iteration,
            prompt_template=prompt_template_text,
        )
        phash = prompt_hash(bundle)

        outcome = None
        failure: str | None = None
        attempts = 0
        try:
            outcome = design_candidate(
                bundle, cfg.llm, cfg.choices,
                backend=backend,
                known_keys=archive.structural_keys(),
            )
            attempts = outcome.attempts
        except ExhaustedRetries as e:
            attempts = e.attempts
            details = "; ".join(f"{v.code}: {v.message}" for v in e.last_violations)
            failure = f"{e}" + (f" ({details})" if details else "")

        metrics = None
        if outcome is not None:
            try:
                metrics = evaluate(outcome.architecture, cfg.evaluator)
            except (FairarchError, OSError) as e:
                failure = f"evaluation failed: {e}"

        if failure is not None:
            record = LogRecord(
                iteration=iteration,
                name=None,
                architecture=None,
                metrics=None,
                prompt_hash=phash,
                attempts=attempts,
                status="failed",
                timestamp=_utc_now(),
                error=failure,
            )
            append_log(cfg.run_log_path, record)
            if cfg.fail_fast:
                raise FairarchError(f"iteration {iteration}: {failure}")
            continue

        name = _unique_name(archive, outcome.architecture.name, iteration)
        archive.add(name, outcome.architecture, metrics, iteration)
        append_log(cfg.run_log_path, LogRecord(
            iteration=iteration,
            name=name,
            architecture=outcome.architecture,
            metrics=metrics,
            prompt_hash=phash,
            attempts=attempts,
            status="ok",
            timestamp=_utc_now(),
        ))

    best = get_best_metrics(archive, cfg.selection_policy)
    if best is None:
        raise FairarchError("search finished with no successful iterations")
    return SearchResult(
        name=best.name,
        architecture=best.architecture,
        metrics=best.metrics,
        archive=archive,
    )
