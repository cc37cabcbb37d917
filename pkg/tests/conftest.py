"""Shared fixtures and builders for the test suite."""

from __future__ import annotations

import json
import random

import pytest

from fairarch import (
    Architecture,
    AttributeSpec,
    CostReport,
    DemographicSchema,
    DeviceProfile,
    EvalRecord,
    architecture_from_dict,
    parse_choices,
)
from fairarch.resources_util import read_packaged


# ---------------------------------------------------------------------------
# architecture builders (plain dicts so oracles can share them)

def conv(out_channels=16, kernel=3, stride=1, padding=1, bias=True):
    return {"op": "conv2d", "out_channels": out_channels, "kernel": kernel,
            "stride": stride, "padding": padding, "bias": bias}


def norm(kind="batch", groups=None):
    d = {"op": "norm", "kind": kind}
    if groups is not None:
        d["groups"] = groups
    return d


def act(kind="relu"):
    return {"op": "act", "kind": kind}


def pool(kind="max", size=2, stride=2):
    return {"op": "pool", "kind": kind, "size": size, "stride": stride}


def global_pool():
    return {"op": "global_pool", "kind": "avg"}


def dropout(p=0.5):
    return {"op": "dropout", "p": p}


def flatten():
    return {"op": "flatten"}


def dense(out_features, bias=True):
    return {"op": "dense", "out_features": out_features, "bias": bias}


def arch_doc(layers, channels=3, height=32, width=32, num_classes=8, name="t"):
    return {
        "name": name,
        "input": {"channels": channels, "height": height, "width": width},
        "num_classes": num_classes,
        "layers": layers,
    }


def make_arch(layers, **kwargs) -> Architecture:
    return architecture_from_dict(arch_doc(layers, **kwargs))


MINIMAL_LAYERS = [conv(16), global_pool(), flatten(), dense(8)]


@pytest.fixture
def minimal_arch() -> Architecture:
    """Conv 3->16 k3 s1 p1, global avg pool, flatten, dense to 8 classes."""
    return make_arch(MINIMAL_LAYERS)


@pytest.fixture
def default_choices():
    return parse_choices(read_packaged("choices_default.json"))


@pytest.fixture
def profile() -> DeviceProfile:
    return DeviceProfile(name="testbox", flops_per_second=1e12,
                         per_layer_overhead_s=1e-5, bytes_per_scalar=4)


def cost_stub(param_count=1000, flops=10_000, peak=40_000,
              latency=0.002153, throughput=464.38) -> CostReport:
    return CostReport(param_count=param_count, flops=flops,
                      peak_memory_bytes=peak, latency_s=latency,
                      throughput_items_per_s=throughput)


# ---------------------------------------------------------------------------
# fairness builders

def schema_of(*attrs: tuple[str, tuple[str, ...]]) -> DemographicSchema:
    return DemographicSchema(attributes=tuple(
        AttributeSpec(name=n, groups=tuple(gs)) for n, gs in attrs
    ))


TWO_GROUPS = schema_of(("grp", ("g1", "g2")))


def rec(true, pred, sample_id="s", **memberships) -> EvalRecord:
    return EvalRecord(sample_id=sample_id, true_label=true, pred_label=pred,
                      memberships=memberships)


def records_rows(records):
    """Project EvalRecords onto the (true, pred, memberships) triples the
    oracles consume."""
    return [(r.true_label, r.pred_label, dict(r.memberships)) for r in records]


def schema_attrs(schema: DemographicSchema):
    return [(a.name, list(a.groups)) for a in schema.attributes]


def random_dataset(rng: random.Random, max_records=200, max_classes=4,
                   max_groups=3):
    """A random schema plus random records over it. Group counts per
    attribute range over [2, max_groups]; single-attribute and two-attribute
    schemas both occur."""
    n_attrs = rng.randint(1, 2)
    attrs = []
    for a in range(n_attrs):
        n_groups = rng.randint(2, max_groups)
        attrs.append((f"a{a}", tuple(f"a{a}g{i}" for i in range(n_groups))))
    schema = schema_of(*attrs)
    n_classes = rng.randint(1, max_classes)
    n_records = rng.randint(1, max_records)
    records = []
    for i in range(n_records):
        memberships = {name: rng.choice(groups)
                       for name, groups in attrs}
        records.append(EvalRecord(
            sample_id=f"s{i}",
            true_label=rng.randrange(n_classes),
            pred_label=rng.randrange(n_classes),
            memberships=memberships,
        ))
    return schema, records


# ---------------------------------------------------------------------------
# random valid architectures (for cost oracles)

def random_valid_arch_doc(rng: random.Random, max_blocks=3):
    """Valid-by-construction architecture document, shapes tracked as drawn."""
    c0 = rng.randint(1, 8)
    h0 = rng.randint(3, 12)
    w0 = rng.randint(3, 12)
    c, h, w = c0, h0, w0
    num_classes = rng.randint(1, 8)
    layers = []
    for _ in range(rng.randint(0, max_blocks)):
        choices = [k for k in (1, 3, 5) if k <= min(h, w)]
        kernel = rng.choice(choices)
        padding = rng.randint(0, 2)
        stride = rng.randint(1, 2)
        oh = (h + 2 * padding - kernel) // stride + 1
        ow = (w + 2 * padding - kernel) // stride + 1
        if oh < 1 or ow < 1:
            continue
        out_channels = rng.randint(1, 12)
        layers.append(conv(out_channels, kernel, stride, padding,
                           bias=rng.random() < 0.5))
        c, h, w = out_channels, oh, ow
        if rng.random() < 0.5:
            kind = rng.choice(["batch", "layer", "group", "none"])
            if kind == "group":
                divisors = [d for d in range(1, c + 1) if c % d == 0]
                layers.append(norm("group", groups=rng.choice(divisors)))
            else:
                layers.append(norm(kind))
        if rng.random() < 0.5:
            layers.append(act(rng.choice(["relu", "gelu", "sigmoid", "tanh"])))
        if rng.random() < 0.3:
            layers.append(dropout(round(rng.uniform(0.0, 0.9), 2)))
        if rng.random() < 0.4 and min(h, w) >= 2:
            size = rng.randint(2, min(h, w))
            pstride = rng.randint(1, size)
            ph = (h - size) // pstride + 1
            pw = (w - size) // pstride + 1
            if ph >= 1 and pw >= 1:
                layers.append(pool(rng.choice(["max", "avg"]), size, pstride))
                h, w = ph, pw
    if rng.random() < 0.5:
        layers.append(global_pool())
        h = w = 1
    layers.append(flatten())
    for _ in range(rng.randint(0, 2)):
        layers.append(dense(rng.randint(1, 64), bias=rng.random() < 0.5))
    layers.append(dense(num_classes, bias=rng.random() < 0.5))
    return arch_doc(layers, channels=c0, height=h0, width=w0,
                    num_classes=num_classes, name="rand")


def random_layer_stack(rng: random.Random):
    """Arbitrary (often shape-invalid) stack for the accept/reject property."""
    layers = []
    for _ in range(rng.randint(1, 8)):
        pick = rng.randrange(8)
        if pick == 0:
            layers.append(conv(rng.randint(1, 8), rng.choice([1, 3, 5, 7]),
                               rng.randint(1, 3), rng.randint(0, 2),
                               bias=rng.random() < 0.5))
        elif pick == 1:
            kind = rng.choice(["batch", "layer", "group", "none"])
            groups = rng.randint(1, 6) if kind == "group" else None
            layers.append(norm(kind, groups=groups))
        elif pick == 2:
            layers.append(act(rng.choice(["relu", "gelu", "sigmoid", "tanh"])))
        elif pick == 3:
            layers.append(pool(rng.choice(["max", "avg"]),
                               rng.randint(1, 4), rng.randint(1, 3)))
        elif pick == 4:
            layers.append(global_pool())
        elif pick == 5:
            layers.append(dropout(round(rng.uniform(0.0, 0.9), 2)))
        elif pick == 6:
            layers.append(flatten())
        else:
            layers.append(dense(rng.randint(1, 16), bias=rng.random() < 0.5))
    return arch_doc(
        layers,
        channels=rng.randint(1, 6),
        height=rng.randint(1, 8),
        width=rng.randint(1, 8),
        num_classes=rng.randint(1, 8),
        name="stack",
    )


# ---------------------------------------------------------------------------
# mock LLM reply helpers

def reply_with(doc: dict, prose="Here is the design:") -> str:
    return f"{prose}\n```json\n{json.dumps(doc, indent=2)}\n```\n"


def replies_file(tmp_path, replies, name="replies.jsonl"):
    path = tmp_path / name
    with open(path, "w", encoding="utf-8") as f:
        for r in replies:
            f.write(json.dumps(r) + "\n")
    return str(path)
