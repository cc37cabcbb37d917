"""Candidate evaluation backends.

Three ways to turn an architecture into a MetricsRecord:

  simulated        deterministic synthetic landscape, no training, for tests
                   and desk-scale search runs
  predictions_file fairness metrics over an existing predictions CSV
  external         spawn a trainer process speaking the line-delimited JSON
                   protocol and score its returned predictions

Whatever the backend, hardware cost fields always come from static analysis
and fairness fields always come from the fairness kernel run over per-sample
records; no backend computes its own metric variants.
"""

from __future__ import annotations

import hashlib
import itertools
import json
import math
import queue
import random
import subprocess
import threading
from collections import deque
from dataclasses import dataclass
from importlib import resources

from .arch import Architecture, architecture_to_dict, serialize_architecture
from .cost import DeviceProfile, cost_report
from .errors import ConfigError, ProtocolError, SpawnError, TrainerFailure, TrainerTimeout
from .fairness import (
    DemographicSchema,
    EvalRecord,
    MetricsRecord,
    metrics_from_records,
    overall_accuracy,
    parse_predictions_csv,
    parse_schema,
)

EVALUATOR_KINDS = ("simulated", "predictions_file", "external")

# trainer contract: stop after this many epochs without valid-loss improvement
TRAINING_MAX_EPOCHS = 50
TRAINING_PATIENCE = 3

# synthetic landscape: accuracy peaks for architectures near this many
# parameters and falls off log-normally on either side
LANDSCAPE_PEAK_PARAMS = 3e5
LANDSCAPE_BASE = 0.5
LANDSCAPE_AMPLITUDE = 0.35
LANDSCAPE_WIDTH = 8.0
GROUP_OFFSET_RANGE = 0.15
CELL_SIZE = 100


@dataclass(frozen=True)
class DatasetSpec:
    path: str
    schema_path: str
    split: tuple[float, float, float] = (0.70, 0.20, 0.10)


@dataclass(frozen=True)
class EvaluatorSpec:
    kind: str
    seed: int
    device: DeviceProfile
    batch: int = 1
    dataset: DatasetSpec | None = None
    external_cmd: tuple[str, ...] | None = None
    timeout_s: float = 300.0


def default_schema() -> DemographicSchema:
    text = resources.files("fairarch.data").joinpath("schema_default.json").read_text("utf-8")
    return parse_schema(text)


def _check_spec(spec: EvaluatorSpec) -> None:
    if spec.kind not in EVALUATOR_KINDS:
        raise ConfigError(f"evaluator kind must be one of {list(EVALUATOR_KINDS)}, "
                          f"got {spec.kind!r}")
    if spec.batch < 1:
        raise ConfigError(f"evaluator batch must be positive, got {spec.batch}")
    if spec.dataset is not None:
        if abs(sum(spec.dataset.split) - 1.0) > 1e-9:
            raise ConfigError(f"dataset split must sum to 1, got {spec.dataset.split}")
    if spec.kind == "predictions_file" and spec.dataset is None:
        raise ConfigError("predictions_file evaluator requires a dataset")
    if spec.kind == "external":
        if spec.external_cmd is None:
            raise ConfigError("external evaluator requires external_cmd")
        if spec.dataset is None:
            raise ConfigError("external evaluator requires a dataset")


def _resolve_schema(spec: EvaluatorSpec) -> DemographicSchema:
    if spec.dataset is not None:
        with open(spec.dataset.schema_path, encoding="utf-8") as f:
            return parse_schema(f.read())
    return default_schema()


# ---------------------------------------------------------------------------
# simulated backend

def landscape_accuracy(param_count: int) -> float:
    """Closed-form base accuracy as a function of model size."""
    x = math.log(max(param_count, 1)) - math.log(LANDSCAPE_PEAK_PARAMS)
    return LANDSCAPE_BASE + LANDSCAPE_AMPLITUDE * math.exp(-(x * x) / LANDSCAPE_WIDTH)


def _design_hash(arch: Architecture, seed: int) -> int:
    text = serialize_architecture(arch) + "\x00" + str(seed)
    return int.from_bytes(hashlib.sha256(text.encode("utf-8")).digest()[:8], "big")


def group_accuracy_targets(arch: Architecture, seed: int,
                           schema: DemographicSchema, param_count: int) -> dict[str, float]:
    """Per-group target accuracy: landscape base plus a seeded group offset."""
    h = _design_hash(arch, seed)
    base = landscape_accuracy(param_count)
    targets = {}
    for g in schema.all_groups():
        offset = random.Random(f"{h}:{g}").uniform(-GROUP_OFFSET_RANGE, GROUP_OFFSET_RANGE)
        targets[g] = min(1.0, max(0.0, base + offset))
    return targets


def synthetic_records(arch: Architecture, seed: int,
                      schema: DemographicSchema, param_count: int) -> list[EvalRecord]:
    """Deterministic record set realizing the group targets.

    One cell of CELL_SIZE samples per combination of groups across attributes;
    a cell's hit count is the rounded mean of its member groups' targets, so
    every group's accuracy lands near its target while every record still
    carries a full membership row.
    """
    targets = group_accuracy_targets(arch, seed, schema, param_count)
    num_classes = arch.num_classes
    records = []
    n = 0
    for combo in itertools.product(*[a.groups for a in schema.attributes]):
        cell_target = sum(targets[g] for g in combo) / len(combo)
        correct = round(CELL_SIZE * cell_target)
        memberships = {a.name: g for a, g in zip(schema.attributes, combo)}
        for i in range(CELL_SIZE):
            true = i % num_classes
            pred = true if i < correct else (true + 1) % num_classes
            records.append(EvalRecord(
                sample_id=f"s{n:06d}",
                true_label=true,
                pred_label=pred,
                memberships=memberships,
            ))
            n += 1
    return records


def simulated_evaluate(arch: Architecture, spec: EvaluatorSpec) -> MetricsRecord:
    """Score a candidate on the synthetic landscape: pure in (canonical arch
    text, seed), so repeated calls are bitwise identical."""
    _check_spec(spec)
    schema = _resolve_schema(spec)
    cost = cost_report(arch, spec.batch, spec.device)
    records = synthetic_records(arch, spec.seed, schema, cost.param_count)
    valid_acc = overall_accuracy(records)
    train_acc = min(1.0, valid_acc + 0.03)
    return metrics_from_records(
        records,
        schema,
        train_loss=1.6 * (1.0 - train_acc),
        train_acc=train_acc,
        valid_loss=1.6 * (1.0 - valid_acc),
        valid_acc=valid_acc,
        test_acc=valid_acc,
        cost=cost,
    )


# ---------------------------------------------------------------------------
# predictions-file backend

def predictions_evaluate(arch: Architecture, spec: EvaluatorSpec) -> MetricsRecord:
    """Score an existing predictions CSV. There is no training signal, so the
    losses are None and all accuracy fields equal the CSV's overall accuracy;
    the architecture contributes only the cost fields."""
    _check_spec(spec)
    assert spec.dataset is not None
    schema = _resolve_schema(spec)
    with open(spec.dataset.path, encoding="utf-8") as f:
        records = parse_predictions_csv(f.read(), schema)
    acc = overall_accuracy(records)
    return metrics_from_records(
        records,
        schema,
        train_loss=None,
        train_acc=acc,
        valid_loss=None,
        valid_acc=acc,
        test_acc=acc,
        cost=cost_report(arch, spec.batch, spec.device),
    )


# ---------------------------------------------------------------------------
# external trainer backend

def build_train_request(arch: Architecture, spec: EvaluatorSpec) -> dict:
    assert spec.dataset is not None
    return {
        "architecture": architecture_to_dict(arch),
        "dataset": {
            "path": spec.dataset.path,
            "schema": spec.dataset.schema_path,
            "split": list(spec.dataset.split),
            "seed": spec.seed,
        },
        "training": {
            "max_epochs": TRAINING_MAX_EPOCHS,
            "patience": TRAINING_PATIENCE,
            "batch": spec.batch,
        },
    }


def _require_number(doc: dict, key: str, lineno: int) -> float:
    v = doc.get(key)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ProtocolError(f"result field {key!r} must be a number", line=lineno)
    return float(v)


def _records_from_predictions(preds, lineno: int) -> list[EvalRecord]:
    if not isinstance(preds, list) or not preds:
        raise ProtocolError("result 'predictions' must be a nonempty array", line=lineno)
    records = []
    for p in preds:
        if not isinstance(p, dict):
            raise ProtocolError("each prediction must be an object", line=lineno)
        try:
            sample_id = p["sample_id"]
            true_label = p["true_label"]
            pred_label = p["pred_label"]
            groups = p["groups"]
        except KeyError as e:
            raise ProtocolError(f"prediction missing field {e}", line=lineno) from e
        if (not isinstance(sample_id, str)
                or isinstance(true_label, bool) or not isinstance(true_label, int)
                or isinstance(pred_label, bool) or not isinstance(pred_label, int)
                or not isinstance(groups, dict)):
            raise ProtocolError("prediction has wrongly typed fields", line=lineno)
        records.append(EvalRecord(
            sample_id=sample_id,
            true_label=true_label,
            pred_label=pred_label,
            memberships=groups,
        ))
    return records


class _StderrTail:
    def __init__(self, stream):
        self.lines: deque[str] = deque(maxlen=50)
        self.thread = threading.Thread(target=self._drain, args=(stream,), daemon=True)
        self.thread.start()

    def _drain(self, stream):
        for line in stream:
            self.lines.append(line.rstrip("\n"))

    def tail(self) -> str:
        self.thread.join(timeout=1.0)
        return "\n".join(self.lines)


def external_evaluate(arch: Architecture, spec: EvaluatorSpec) -> MetricsRecord:
    """Run the trainer child process for one candidate.

    Writes one request line, consumes epoch events until the result event,
    then computes every fairness figure locally from the returned per-sample
    predictions. The trainer's own hardware block is shape-checked but cost
    fields still come from static analysis, keeping hardware metrics identical
    across backends.
    """
    _check_spec(spec)
    assert spec.external_cmd is not None
    schema = _resolve_schema(spec)
    try:
        proc = subprocess.Popen(
            list(spec.external_cmd),
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
    except OSError as e:
        raise SpawnError(f"cannot start trainer {spec.external_cmd!r}: {e}") from e

    stderr_tail = _StderrTail(proc.stderr)
    lines: queue.Queue = queue.Queue()

    def _read_stdout():
        for line in proc.stdout:
            lines.put(line)
        lines.put(None)

    reader = threading.Thread(target=_read_stdout, daemon=True)
    reader.start()

    def _fail_cleanup():
        if proc.poll() is None:
            proc.kill()
        proc.wait()

    try:
        proc.stdin.write(json.dumps(build_train_request(arch, spec)) + "\n")
        proc.stdin.flush()
        proc.stdin.close()
    except (BrokenPipeError, OSError) as e:
        _fail_cleanup()
        raise TrainerFailure(proc.returncode, stderr_tail.tail() or str(e)) from e

    deadline = threading.Event()
    timer = threading.Timer(spec.timeout_s, deadline.set)
    timer.start()
    result_doc = None
    lineno = 0
    try:
        while True:
            try:
                line = lines.get(timeout=0.1)
            except queue.Empty:
                if deadline.is_set():
                    _fail_cleanup()
                    raise TrainerTimeout(
                        f"trainer produced no result within {spec.timeout_s} s"
                    ) from None
                continue
            if line is None:
                rc = proc.wait()
                if rc != 0:
                    raise TrainerFailure(rc, stderr_tail.tail())
                raise ProtocolError("stream ended before a result event", line=lineno)
            lineno += 1
            if not line.strip():
                continue
            try:
                event = json.loads(line)
            except json.JSONDecodeError as e:
                _fail_cleanup()
                raise ProtocolError(f"unparseable event: {e.msg}", line=lineno) from e
            if not isinstance(event, dict) or "event" not in event:
                _fail_cleanup()
                raise ProtocolError("event object lacks 'event' field", line=lineno)
            kind = event["event"]
            if kind == "epoch":
                for key in ("epoch", "train_loss", "valid_loss"):
                    if key not in event:
                        _fail_cleanup()
                        raise ProtocolError(f"epoch event missing {key!r}", line=lineno)
                continue
            if kind == "error":
                msg = event.get("message", "trainer reported an error")
                _fail_cleanup()
                raise TrainerFailure(proc.returncode, str(msg))
            if kind == "result":
                result_doc = event
                break
            _fail_cleanup()
            raise ProtocolError(f"unknown event kind {kind!r}", line=lineno)
    finally:
        timer.cancel()

    try:
        proc.wait(timeout=10)
    except subprocess.TimeoutExpired:
        proc.kill()
        proc.wait()

    train_loss = _require_number(result_doc, "train_loss", lineno)
    train_acc = _require_number(result_doc, "train_acc", lineno)
    valid_loss = _require_number(result_doc, "valid_loss", lineno)
    valid_acc = _require_number(result_doc, "valid_acc", lineno)
    hardware = result_doc.get("hardware")
    if not isinstance(hardware, dict):
        raise ProtocolError("result lacks 'hardware' object", line=lineno)
    for key in ("latency_s_per_item", "peak_memory_bytes"):
        if key not in hardware:
            raise ProtocolError(f"hardware block missing {key!r}", line=lineno)
    records = _records_from_predictions(result_doc.get("predictions"), lineno)

    return metrics_from_records(
        records,
        schema,
        train_loss=train_loss,
        train_acc=train_acc,
        valid_loss=valid_loss,
        valid_acc=valid_acc,
        test_acc=overall_accuracy(records),
        cost=cost_report(arch, spec.batch, spec.device),
    )


# ---------------------------------------------------------------------------
# dispatch and config

def evaluate(arch: Architecture, spec: EvaluatorSpec) -> MetricsRecord:
    _check_spec(spec)
    if spec.kind == "simulated":
        return simulated_evaluate(arch, spec)
    if spec.kind == "predictions_file":
        return predictions_evaluate(arch, spec)
    return external_evaluate(arch, spec)


def evaluator_spec_from_dict(doc: dict, device: DeviceProfile) -> EvaluatorSpec:
    """Build an EvaluatorSpec from the config file's evaluator section. Path
    fields are taken as already resolved by the config loader."""
    if not isinstance(doc, dict):
        raise ConfigError("evaluator config must be an object")
    known = {"kind", "seed", "batch", "dataset", "external_cmd", "timeout_s"}
    extra = set(doc) - known
    if extra:
        raise ConfigError(f"evaluator config: unknown field(s) {sorted(extra)}")
    kind = doc.get("kind")
    if kind not in EVALUATOR_KINDS:
        raise ConfigError(f"evaluator config: 'kind' must be one of {list(EVALUATOR_KINDS)}")
    seed = doc.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("evaluator config: 'seed' must be an integer")
    batch = doc.get("batch", 1)
    if isinstance(batch, bool) or not isinstance(batch, int) or batch < 1:
        raise ConfigError("evaluator config: 'batch' must be a positive integer")
    timeout_s = doc.get("timeout_s", 300.0)
    if isinstance(timeout_s, bool) or not isinstance(timeout_s, (int, float)) or timeout_s <= 0:
        raise ConfigError("evaluator config: 'timeout_s' must be a positive number")

    dataset = None
    ds = doc.get("dataset")
    if ds is not None:
        if not isinstance(ds, dict) or not {"path", "schema_path"} <= set(ds):
            raise ConfigError("evaluator config: 'dataset' needs 'path' and 'schema_path'")
        split = ds.get("split", [0.70, 0.20, 0.10])
        if (not isinstance(split, list) or len(split) != 3
                or any(isinstance(x, bool) or not isinstance(x, (int, float)) for x in split)):
            raise ConfigError("evaluator config: 'split' must be three numbers")
        dataset = DatasetSpec(
            path=str(ds["path"]),
            schema_path=str(ds["schema_path"]),
            split=tuple(float(x) for x in split),
        )

    cmd = doc.get("external_cmd")
    if cmd is not None:
        if not isinstance(cmd, list) or not cmd or not all(isinstance(x, str) for x in cmd):
            raise ConfigError("evaluator config: 'external_cmd' must be a string array")
        cmd = tuple(cmd)

    spec = EvaluatorSpec(
        kind=kind,
        seed=seed,
        device=device,
        batch=batch,
        dataset=dataset,
        external_cmd=cmd,
        timeout_s=float(timeout_s),
    )
    _check_spec(spec)
    return spec
