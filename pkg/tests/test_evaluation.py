import json
import math
import sys
import textwrap

import pytest

from fairarch import (
    ConfigError,
    DatasetSpec,
    EvaluatorSpec,
    ProtocolError,
    SpawnError,
    TrainerFailure,
    TrainerTimeout,
    build_train_request,
    count_parameters,
    default_schema,
    eodd,
    evaluate,
    evaluator_spec_from_dict,
    external_evaluate,
    group_accuracies,
    overall_accuracy,
    predictions_evaluate,
    render_predictions_csv,
    simulated_evaluate,
    unfairness,
)
from fairarch.evaluation import (
    CELL_SIZE,
    TRAINING_MAX_EPOCHS,
    TRAINING_PATIENCE,
    group_accuracy_targets,
    landscape_accuracy,
    synthetic_records,
)

from conftest import TWO_GROUPS, rec, schema_of


def sim_spec(profile, seed=7, batch=1):
    return EvaluatorSpec(kind="simulated", seed=seed, device=profile,
                         batch=batch)


# ---------------------------------------------------------------------------
# synthetic landscape

def test_landscape_peaks_at_the_sweet_spot():
    assert landscape_accuracy(300_000) == 0.85


def test_landscape_tails_off_to_base():
    assert landscape_accuracy(1) == pytest.approx(0.5, abs=1e-6)
    assert landscape_accuracy(10**12) == pytest.approx(0.5, abs=1e-3)


def test_landscape_is_log_symmetric():
    assert landscape_accuracy(30_000) == pytest.approx(
        landscape_accuracy(3_000_000), abs=1e-12)


def test_landscape_monotone_toward_the_peak():
    assert (landscape_accuracy(100) < landscape_accuracy(10_000)
            < landscape_accuracy(300_000) > landscape_accuracy(30_000_000))


def test_landscape_accepts_zero_params():
    assert landscape_accuracy(0) == landscape_accuracy(1)


def test_group_targets_are_seeded_and_bounded(minimal_arch):
    schema = default_schema()
    t1 = group_accuracy_targets(minimal_arch, 7, schema, 584)
    t2 = group_accuracy_targets(minimal_arch, 7, schema, 584)
    t3 = group_accuracy_targets(minimal_arch, 8, schema, 584)
    assert t1 == t2
    assert t1 != t3
    base = landscape_accuracy(584)
    for g, v in t1.items():
        assert 0.0 <= v <= 1.0
        assert abs(v - base) <= 0.15 + 1e-12


# ---------------------------------------------------------------------------
# synthetic records

def test_synthetic_records_cover_every_cell(minimal_arch):
    schema = default_schema()
    records = synthetic_records(minimal_arch, 7, schema, 584)
    cells = {tuple(r.memberships[a.name] for a in schema.attributes)
             for r in records}
    assert len(records) == 6 * CELL_SIZE
    assert len(cells) == 6
    for r in records:
        assert set(r.memberships) == {a.name for a in schema.attributes}
    assert len({r.sample_id for r in records}) == len(records)


def test_cell_hit_counts_follow_the_targets(minimal_arch):
    schema = default_schema()
    targets = group_accuracy_targets(minimal_arch, 7, schema, 584)
    records = synthetic_records(minimal_arch, 7, schema, 584)
    by_cell = {}
    for r in records:
        key = tuple(r.memberships[a.name] for a in schema.attributes)
        hit = r.pred_label == r.true_label
        got = by_cell.setdefault(key, [0, 0])
        got[0] += hit
        got[1] += 1
    for combo, (hits, total) in by_cell.items():
        assert total == CELL_SIZE
        want = round(CELL_SIZE * sum(targets[g] for g in combo) / len(combo))
        assert hits == want


def test_wrong_predictions_use_the_next_class(minimal_arch):
    records = synthetic_records(minimal_arch, 7, default_schema(), 584)
    classes = minimal_arch.num_classes
    for r in records:
        if r.pred_label != r.true_label:
            assert r.pred_label == (r.true_label + 1) % classes


# ---------------------------------------------------------------------------
# simulated evaluator

def test_simulated_is_deterministic(minimal_arch, profile):
    a = simulated_evaluate(minimal_arch, sim_spec(profile))
    b = simulated_evaluate(minimal_arch, sim_spec(profile))
    assert a == b


def test_simulated_depends_on_seed(minimal_arch, profile):
    a = simulated_evaluate(minimal_arch, sim_spec(profile, seed=1))
    b = simulated_evaluate(minimal_arch, sim_spec(profile, seed=2))
    assert a.group_detail != b.group_detail


def test_simulated_metrics_are_internally_consistent(minimal_arch, profile):
    m = simulated_evaluate(minimal_arch, sim_spec(profile))
    schema = default_schema()
    records = synthetic_records(minimal_arch, 7, schema, m.cost.param_count)
    assert m.valid_acc == overall_accuracy(records)
    assert m.test_acc == m.valid_acc
    assert m.train_acc == min(1.0, m.valid_acc + 0.03)
    assert m.train_loss == 1.6 * (1.0 - m.train_acc)
    assert m.valid_loss == 1.6 * (1.0 - m.valid_acc)
    assert m.unfairness == unfairness(records, schema)
    assert m.eodd == eodd(records, schema)
    assert m.group_detail == group_accuracies(records, schema)


def test_simulated_cost_comes_from_static_analysis(minimal_arch, profile):
    m = simulated_evaluate(minimal_arch, sim_spec(profile))
    assert m.cost.param_count == count_parameters(minimal_arch)
    assert m.cost.peak_memory_bytes == 80160


def test_dispatch_routes_simulated(minimal_arch, profile):
    assert (evaluate(minimal_arch, sim_spec(profile))
            == simulated_evaluate(minimal_arch, sim_spec(profile)))


# ---------------------------------------------------------------------------
# spec checking

def make_dataset(tmp_path, records, schema):
    csv_path = tmp_path / "preds.csv"
    csv_path.write_text(render_predictions_csv(records, schema),
                        encoding="utf-8")
    schema_path = tmp_path / "schema.json"
    schema_path.write_text(json.dumps({
        "attributes": [{"name": a.name, "groups": list(a.groups)}
                       for a in schema.attributes],
    }), encoding="utf-8")
    return DatasetSpec(path=str(csv_path), schema_path=str(schema_path))


@pytest.mark.parametrize("build", [
    lambda p, d: EvaluatorSpec(kind="magic", seed=0, device=p),
    lambda p, d: EvaluatorSpec(kind="simulated", seed=0, device=p, batch=0),
    lambda p, d: EvaluatorSpec(kind="predictions_file", seed=0, device=p),
    lambda p, d: EvaluatorSpec(kind="external", seed=0, device=p, dataset=d),
    lambda p, d: EvaluatorSpec(kind="external", seed=0, device=p,
                               external_cmd=("x",)),
    lambda p, d: EvaluatorSpec(
        kind="simulated", seed=0, device=p,
        dataset=DatasetSpec(path=d.path, schema_path=d.schema_path,
                            split=(0.5, 0.2, 0.2))),
])
def test_bad_specs_rejected(build, profile, tmp_path):
    dataset = make_dataset(tmp_path, [rec(0, 0, grp="g1")], TWO_GROUPS)
    with pytest.raises(ConfigError):
        evaluate(None, build(profile, dataset))


# ---------------------------------------------------------------------------
# predictions-file evaluator

def quarters_records():
    rows = []
    rows += [rec(1, 1, grp="g1")] * 3 + [rec(1, 0, grp="g1")]
    rows += [rec(0, 0, grp="g1")] * 3 + [rec(0, 1, grp="g1")]
    rows += [rec(1, 1, grp="g2")] * 2 + [rec(1, 0, grp="g2")] * 2
    rows += [rec(0, 0, grp="g2")] * 2 + [rec(0, 1, grp="g2")] * 2
    return [rec(r.true_label, r.pred_label, sample_id=f"s{i}",
                **dict(r.memberships)) for i, r in enumerate(rows)]


def test_predictions_file_evaluator(minimal_arch, profile, tmp_path):
    records = quarters_records()
    dataset = make_dataset(tmp_path, records, TWO_GROUPS)
    spec = EvaluatorSpec(kind="predictions_file", seed=0, device=profile,
                         dataset=dataset)
    m = predictions_evaluate(minimal_arch, spec)
    acc = overall_accuracy(records)
    assert m.train_loss is None and m.valid_loss is None
    assert m.train_acc == m.valid_acc == m.test_acc == acc
    assert m.unfairness == unfairness(records, TWO_GROUPS)
    assert m.eodd == eodd(records, TWO_GROUPS)
    assert m.cost.param_count == count_parameters(minimal_arch)


def test_predictions_file_uses_dataset_schema(minimal_arch, profile, tmp_path):
    schema = schema_of(("region", ("north", "south")))
    records = [rec(0, 0, region="north"), rec(1, 0, region="south")]
    dataset = make_dataset(tmp_path, records, schema)
    spec = EvaluatorSpec(kind="predictions_file", seed=0, device=profile,
                         dataset=dataset)
    m = predictions_evaluate(minimal_arch, spec)
    assert set(m.group_detail) == {"north", "south"}


# ---------------------------------------------------------------------------
# external trainer protocol

GOOD_RESULT = {
    "event": "result",
    "train_loss": 0.8, "train_acc": 0.71,
    "valid_loss": 0.7, "valid_acc": 0.66,
    "hardware": {"latency_s_per_item": 0.001, "peak_memory_bytes": 1000},
}


def trainer_cmd(tmp_path, body: str) -> tuple[str, ...]:
    script = tmp_path / "trainer.py"
    script.write_text(textwrap.dedent(body), encoding="utf-8")
    return (sys.executable, str(script))


def external_spec(profile, tmp_path, body, timeout_s=30.0):
    dataset = make_dataset(tmp_path, quarters_records(), TWO_GROUPS)
    return EvaluatorSpec(
        kind="external", seed=3, device=profile, dataset=dataset,
        external_cmd=trainer_cmd(tmp_path, body), timeout_s=timeout_s,
    )


def result_preds():
    return [
        {"sample_id": r.sample_id, "true_label": r.true_label,
         "pred_label": r.pred_label, "groups": dict(r.memberships)}
        for r in quarters_records()
    ]


def good_trainer_body():
    result = dict(GOOD_RESULT, predictions=result_preds())
    return f"""
    import json, sys
    req = json.loads(sys.stdin.readline())
    assert req["training"]["max_epochs"] == {TRAINING_MAX_EPOCHS}
    assert req["training"]["patience"] == {TRAINING_PATIENCE}
    assert req["architecture"]["name"]
    assert req["dataset"]["schema"].endswith("schema.json")
    print(json.dumps({{"event": "epoch", "epoch": 1,
                       "train_loss": 1.1, "valid_loss": 1.0}}))
    print(json.dumps({{"event": "epoch", "epoch": 2,
                       "train_loss": 0.9, "valid_loss": 0.8}}))
    print(json.dumps({json.dumps(result)}))
    """


def test_build_train_request_layout(minimal_arch, profile, tmp_path):
    dataset = make_dataset(tmp_path, quarters_records(), TWO_GROUPS)
    spec = EvaluatorSpec(kind="external", seed=3, device=profile,
                         dataset=dataset, external_cmd=("t",), batch=16)
    req = build_train_request(minimal_arch, spec)
    assert list(req) == ["architecture", "dataset", "training"]
    assert req["architecture"]["name"] == minimal_arch.name
    assert req["dataset"] == {
        "path": dataset.path,
        "schema": dataset.schema_path,
        "split": [0.70, 0.20, 0.10],
        "seed": 3,
    }
    assert req["training"] == {"max_epochs": 50, "patience": 3, "batch": 16}
    json.dumps(req)  # must be wire-ready


def test_external_round_trip(minimal_arch, profile, tmp_path):
    spec = external_spec(profile, tmp_path, good_trainer_body())
    m = external_evaluate(minimal_arch, spec)
    records = quarters_records()
    assert m.train_loss == 0.8
    assert m.train_acc == 0.71
    assert m.valid_acc == 0.66
    assert m.test_acc == overall_accuracy(records)
    assert m.unfairness == unfairness(records, TWO_GROUPS)
    assert m.eodd == eodd(records, TWO_GROUPS)
    # hardware block was shape-checked, but cost fields stay static
    assert m.cost.param_count == count_parameters(minimal_arch)
    assert m.cost.peak_memory_bytes != 1000


def test_external_dispatch(minimal_arch, profile, tmp_path):
    spec = external_spec(profile, tmp_path, good_trainer_body())
    assert evaluate(minimal_arch, spec) == external_evaluate(minimal_arch, spec)


def test_external_garbage_line(minimal_arch, profile, tmp_path):
    spec = external_spec(profile, tmp_path, """
    import sys
    sys.stdin.readline()
    print("garbage, not an event")
    """)
    with pytest.raises(ProtocolError) as exc:
        external_evaluate(minimal_arch, spec)
    assert exc.value.line == 1


def test_external_unknown_event(minimal_arch, profile, tmp_path):
    spec = external_spec(profile, tmp_path, """
    import json, sys
    sys.stdin.readline()
    print(json.dumps({"event": "telemetry"}))
    """)
    with pytest.raises(ProtocolError, match="telemetry"):
        external_evaluate(minimal_arch, spec)


def test_external_epoch_event_missing_field(minimal_arch, profile, tmp_path):
    spec = external_spec(profile, tmp_path, """
    import json, sys
    sys.stdin.readline()
    print(json.dumps({"event": "epoch", "epoch": 1}))
    """)
    with pytest.raises(ProtocolError, match="train_loss"):
        external_evaluate(minimal_arch, spec)


def test_external_nonzero_exit(minimal_arch, profile, tmp_path):
    spec = external_spec(profile, tmp_path, """
    import json, sys
    sys.stdin.readline()
    print(json.dumps({"event": "epoch", "epoch": 1,
                      "train_loss": 1.0, "valid_loss": 1.0}))
    print("cuda out of memory", file=sys.stderr)
    sys.exit(3)
    """)
    with pytest.raises(TrainerFailure) as exc:
        external_evaluate(minimal_arch, spec)
    assert exc.value.exit_code == 3
    assert "cuda out of memory" in exc.value.stderr_tail


def test_external_error_event(minimal_arch, profile, tmp_path):
    spec = external_spec(profile, tmp_path, """
    import json, sys, time
    sys.stdin.readline()
    print(json.dumps({"event": "error", "message": "dataset missing"}),
          flush=True)
    time.sleep(5)
    """)
    with pytest.raises(TrainerFailure) as exc:
        external_evaluate(minimal_arch, spec)
    assert exc.value.stderr_tail == "dataset missing"


def test_external_eof_before_result(minimal_arch, profile, tmp_path):
    spec = external_spec(profile, tmp_path, """
    import json, sys
    sys.stdin.readline()
    print(json.dumps({"event": "epoch", "epoch": 1,
                      "train_loss": 1.0, "valid_loss": 1.0}))
    """)
    with pytest.raises(ProtocolError, match="ended before a result"):
        external_evaluate(minimal_arch, spec)


def test_external_timeout(minimal_arch, profile, tmp_path):
    spec = external_spec(profile, tmp_path, """
    import sys, time
    sys.stdin.readline()
    time.sleep(30)
    """, timeout_s=0.5)
    with pytest.raises(TrainerTimeout):
        external_evaluate(minimal_arch, spec)


def test_external_result_missing_hardware(minimal_arch, profile, tmp_path):
    result = dict(GOOD_RESULT, predictions=result_preds())
    del result["hardware"]
    spec = external_spec(profile, tmp_path, f"""
    import json, sys
    sys.stdin.readline()
    print(json.dumps({json.dumps(result)}))
    """)
    with pytest.raises(ProtocolError, match="hardware"):
        external_evaluate(minimal_arch, spec)


def test_external_result_bad_predictions(minimal_arch, profile, tmp_path):
    result = dict(GOOD_RESULT, predictions=[{"sample_id": 1}])
    spec = external_spec(profile, tmp_path, f"""
    import json, sys
    sys.stdin.readline()
    print(json.dumps({json.dumps(result)}))
    """)
    with pytest.raises(ProtocolError):
        external_evaluate(minimal_arch, spec)


def test_external_result_nonnumeric_loss(minimal_arch, profile, tmp_path):
    result = dict(GOOD_RESULT, predictions=result_preds(), train_loss="low")
    spec = external_spec(profile, tmp_path, f"""
    import json, sys
    sys.stdin.readline()
    print(json.dumps({json.dumps(result)}))
    """)
    with pytest.raises(ProtocolError, match="train_loss"):
        external_evaluate(minimal_arch, spec)


def test_external_spawn_failure(minimal_arch, profile, tmp_path):
    dataset = make_dataset(tmp_path, quarters_records(), TWO_GROUPS)
    spec = EvaluatorSpec(kind="external", seed=3, device=profile,
                         dataset=dataset,
                         external_cmd=("/nonexistent/trainer-bin",))
    with pytest.raises(SpawnError):
        external_evaluate(minimal_arch, spec)


# ---------------------------------------------------------------------------
# evaluator config documents

def test_spec_from_dict_defaults(profile):
    spec = evaluator_spec_from_dict({"kind": "simulated"}, profile)
    assert spec.seed == 0
    assert spec.batch == 1
    assert spec.timeout_s == 300.0
    assert spec.dataset is None


def test_spec_from_dict_full(profile, tmp_path):
    dataset = make_dataset(tmp_path, quarters_records(), TWO_GROUPS)
    spec = evaluator_spec_from_dict({
        "kind": "external",
        "seed": 11,
        "batch": 8,
        "timeout_s": 60,
        "dataset": {"path": dataset.path, "schema_path": dataset.schema_path,
                    "split": [0.8, 0.1, 0.1]},
        "external_cmd": ["python3", "trainer.py"],
    }, profile)
    assert spec.seed == 11
    assert spec.dataset.split == (0.8, 0.1, 0.1)
    assert spec.external_cmd == ("python3", "trainer.py")
    assert math.isclose(sum(spec.dataset.split), 1.0)


@pytest.mark.parametrize("doc", [
    {"kind": "nope"},
    {"kind": "simulated", "seed": True},
    {"kind": "simulated", "batch": 0},
    {"kind": "simulated", "timeout_s": 0},
    {"kind": "simulated", "extra": 1},
    {"kind": "predictions_file"},
    {"kind": "external", "external_cmd": ["t"]},
    {"kind": "external", "external_cmd": "t"},
    {"kind": "simulated", "dataset": {"path": "p"}},
    {"kind": "simulated",
     "dataset": {"path": "p", "schema_path": "s", "split": [1, 0]}},
    "nope",
])
def test_spec_from_dict_rejections(doc, profile):
    with pytest.raises(ConfigError):
        evaluator_spec_from_dict(doc, profile)
