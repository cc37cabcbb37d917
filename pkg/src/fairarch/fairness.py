"""Accuracy and demographic fairness metrics over per-sample predictions.

Inputs are evaluation records: one row per sample carrying the true label, the
predicted label, and the sample's group under each demographic attribute.
From these we compute overall accuracy, per-group accuracies, the unfairness
score (mean absolute deviation of group accuracies from overall), and three
equalized-odds style scores over within-attribute group pairs:

  eodd   mean over pairs of the class-averaged max(|dTPR|, |dFPR|)
  eopp1  same with |dTPR| only (favorable outcomes)
  eopp2  same with |dTNR| only (unfavorable outcomes)

Multi-class inputs are binarized one-vs-rest per class and macro-averaged over
classes. A (pair, class) term is defined only when both groups have at least
one positive and one negative sample for that class; undefined terms shrink
the average, and a score with no defined terms at all is None, never 0.
"""

from __future__ import annotations

import csv
import io
import json
import re
from dataclasses import dataclass
from typing import Callable, Mapping

from .cost import CostReport, cost_report_from_dict, cost_report_to_dict
from .errors import EmptyInput, ParseError, SchemaError, SchemaMismatch, UndefinedRate

IDENT_PATTERN = re.compile(r"^[A-Za-z0-9_-]{1,64}$")


@dataclass(frozen=True)
class AttributeSpec:
    name: str
    groups: tuple[str, ...]


@dataclass(frozen=True)
class DemographicSchema:
    """Ordered demographic attributes, each with its ordered group names.

    Group names are unique across the whole schema, not just within an
    attribute, so per-group results can live in one flat map.
    """

    attributes: tuple[AttributeSpec, ...]

    def all_groups(self) -> list[str]:
        return [g for a in self.attributes for g in a.groups]

    def attribute_of(self, group: str) -> str | None:
        for a in self.attributes:
            if group in a.groups:
                return a.name
        return None

    def group_pairs(self) -> list[tuple[str, str]]:
        """All unordered within-attribute pairs, in schema order."""
        pairs = []
        for a in self.attributes:
            for i in range(len(a.groups)):
                for j in range(i + 1, len(a.groups)):
                    pairs.append((a.groups[i], a.groups[j]))
        return pairs


@dataclass(frozen=True)
class EvalRecord:
    """One evaluated sample. memberships maps attribute name to group name and
    must cover every schema attribute."""

    sample_id: str
    true_label: int
    pred_label: int
    memberships: Mapping[str, str]


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int


@dataclass(frozen=True)
class RateDiffs:
    tpr_diff: float
    fpr_diff: float
    tnr_diff: float


@dataclass(frozen=True)
class GroupStat:
    """Per-group slice: accuracy (None when the slice is empty), record count,
    and number of correct predictions."""

    accuracy: float | None
    count: int
    correct: int


@dataclass(frozen=True)
class MetricsRecord:
    """Everything the search loop knows about one evaluated candidate.

    The three pair metrics are None when no (pair, class) term was defined.
    Losses are None when the backend has no training signal (for example when
    metrics come from a predictions file); None means unavailable, never 0.
    """

    train_loss: float | None
    train_acc: float
    valid_loss: float | None
    valid_acc: float
    test_acc: float
    unfairness: float
    eodd: float | None
    eopp1: float | None
    eopp2: float | None
    group_detail: Mapping[str, GroupStat]
    cost: CostReport


# ---------------------------------------------------------------------------
# record checks

def _check(records: list[EvalRecord], schema: DemographicSchema) -> None:
    if not records:
        raise EmptyInput("no evaluation records")
    for r in records:
        if r.true_label < 0 or r.pred_label < 0:
            raise SchemaMismatch(
                f"sample {r.sample_id!r}: labels must be nonnegative class indices"
            )
        for a in schema.attributes:
            g = r.memberships.get(a.name)
            if g is None:
                raise SchemaMismatch(f"sample {r.sample_id!r}: missing attribute {a.name!r}")
            if g not in a.groups:
                raise SchemaMismatch(
                    f"sample {r.sample_id!r}: group {g!r} not in attribute {a.name!r}"
                )


# ---------------------------------------------------------------------------
# accuracy

def overall_accuracy(records: list[EvalRecord]) -> float:
    if not records:
        raise EmptyInput("no evaluation records")
    return sum(r.pred_label == r.true_label for r in records) / len(records)


def group_accuracies(records: list[EvalRecord], schema: DemographicSchema) -> dict[str, GroupStat]:
    """Accuracy over each group's slice, keyed by group name in schema order.
    Empty groups appear with count 0 and accuracy None."""
    _check(records, schema)
    out: dict[str, GroupStat] = {}
    for a in schema.attributes:
        for g in a.groups:
            member = [r for r in records if r.memberships[a.name] == g]
            correct = sum(r.pred_label == r.true_label for r in member)
            acc = correct / len(member) if member else None
            out[g] = GroupStat(accuracy=acc, count=len(member), correct=correct)
    return out


def unfairness(records: list[EvalRecord], schema: DemographicSchema) -> float:
    """Mean |group accuracy - overall accuracy| over nonempty groups, on the
    [0, 1] accuracy scale."""
    _check(records, schema)
    overall = overall_accuracy(records)
    devs = [
        abs(stat.accuracy - overall)
        for stat in group_accuracies(records, schema).values()
        if stat.count > 0
    ]
    return sum(devs) / len(devs)


# ---------------------------------------------------------------------------
# pairwise rate metrics

def binary_confusion(records: list[EvalRecord], positive_class: int) -> ConfusionCounts:
    """One-vs-rest confusion for a record slice: positive iff the true label is
    positive_class, predicted positive iff the predicted label is."""
    tp = fp = tn = fn = 0
    for r in records:
        actual = r.true_label == positive_class
        predicted = r.pred_label == positive_class
        if actual and predicted:
            tp += 1
        elif actual:
            fn += 1
        elif predicted:
            fp += 1
        else:
            tn += 1
    return ConfusionCounts(tp=tp, fp=fp, tn=tn, fn=fn)


def _rates(c: ConfusionCounts, group: str, class_c: int) -> tuple[float, float, float]:
    pos = c.tp + c.fn
    neg = c.fp + c.tn
    if pos == 0:
        raise UndefinedRate(f"group {group!r} has no positive samples for class {class_c}")
    if neg == 0:
        raise UndefinedRate(f"group {group!r} has no negative samples for class {class_c}")
    return c.tp / pos, c.fp / neg, c.tn / neg


def pairwise_rates(
    records: list[EvalRecord],
    schema: DemographicSchema,
    class_c: int,
    pair: tuple[str, str],
) -> RateDiffs:
    """Absolute TPR/FPR/TNR differences between two groups of one attribute for
    the one-vs-rest problem of class_c. Raises UndefinedRate when either group
    lacks positives or negatives for that class."""
    _check(records, schema)
    g1, g2 = pair
    a1 = schema.attribute_of(g1)
    a2 = schema.attribute_of(g2)
    if a1 is None or a2 is None:
        missing = g1 if a1 is None else g2
        raise SchemaMismatch(f"group {missing!r} not in schema")
    if a1 != a2:
        raise SchemaMismatch(f"groups {g1!r} and {g2!r} belong to different attributes")
    slice1 = [r for r in records if r.memberships[a1] == g1]
    slice2 = [r for r in records if r.memberships[a1] == g2]
    tpr1, fpr1, tnr1 = _rates(binary_confusion(slice1, class_c), g1, class_c)
    tpr2, fpr2, tnr2 = _rates(binary_confusion(slice2, class_c), g2, class_c)
    return RateDiffs(
        tpr_diff=abs(tpr1 - tpr2),
        fpr_diff=abs(fpr1 - fpr2),
        tnr_diff=abs(tnr1 - tnr2),
    )


def _pair_metric(
    records: list[EvalRecord],
    schema: DemographicSchema,
    term: Callable[[RateDiffs], float],
) -> float | None:
    """Two-level average: per pair, the mean of term over classes where both
    groups have positives and negatives; then the mean over pairs with at
    least one defined class. None when nothing is defined."""
    _check(records, schema)
    classes = sorted({r.true_label for r in records})
    pair_means = []
    for pair in schema.group_pairs():
        terms = []
        for c in classes:
            try:
                diffs = pairwise_rates(records, schema, c, pair)
            except UndefinedRate:
                continue
            terms.append(term(diffs))
        if terms:
            pair_means.append(sum(terms) / len(terms))
    if not pair_means:
        return None
    return sum(pair_means) / len(pair_means)


def eodd(records: list[EvalRecord], schema: DemographicSchema) -> float | None:
    return _pair_metric(records, schema, lambda d: max(d.tpr_diff, d.fpr_diff))


def eopp1(records: list[EvalRecord], schema: DemographicSchema) -> float | None:
    return _pair_metric(records, schema, lambda d: d.tpr_diff)


def eopp2(records: list[EvalRecord], schema: DemographicSchema) -> float | None:
    return _pair_metric(records, schema, lambda d: d.tnr_diff)


# ---------------------------------------------------------------------------
# metrics assembly and report rendering

def metrics_from_records(
    records: list[EvalRecord],
    schema: DemographicSchema,
    *,
    train_loss: float | None,
    train_acc: float,
    valid_loss: float | None,
    valid_acc: float,
    test_acc: float,
    cost: CostReport,
) -> MetricsRecord:
    """Fill every fairness field of a MetricsRecord from raw records."""
    return MetricsRecord(
        train_loss=train_loss,
        train_acc=train_acc,
        valid_loss=valid_loss,
        valid_acc=valid_acc,
        test_acc=test_acc,
        unfairness=unfairness(records, schema),
        eodd=eodd(records, schema),
        eopp1=eopp1(records, schema),
        eopp2=eopp2(records, schema),
        group_detail=group_accuracies(records, schema),
        cost=cost,
    )


def _fmt4(x: float | None) -> str:
    return "undefined" if x is None else f"{x:.4f}"


def _fmt_acc(x: float | None) -> str:
    return "undefined" if x is None else f"{x * 100:.2f}%"


def format_metrics_report(m: MetricsRecord) -> str:
    """One-line human-readable summary fed back to the design LLM.

    Latency and throughput render the stored cost fields as-is; keeping the
    per-image reading truthful is the evaluator's job (it reports per-item
    figures in the cost report). Unavailable values render as "undefined".
    """
    detail = ", ".join(
        f"{g}: ({_fmt_acc(s.accuracy)}, {s.correct})" for g, s in m.group_detail.items()
    )
    mb = m.cost.peak_memory_bytes / (1024 * 1024)
    return (
        f"Train Loss: {_fmt4(m.train_loss)}, "
        f"Train Acc: {m.train_acc * 100:.2f}%, "
        f"Valid Loss: {_fmt4(m.valid_loss)}, "
        f"Valid Acc: {m.valid_acc * 100:.2f}%, "
        f"Unfairness Score: {_fmt4(m.unfairness)}, "
        f"EODD: {_fmt4(m.eodd)}, "
        f"EOPP1: {_fmt4(m.eopp1)}, "
        f"EOPP2: {_fmt4(m.eopp2)}, "
        f"Fairness Detail: [{detail}] "
        f"Latency: {m.cost.latency_s:.6f} seconds per image, "
        f"Throughput: {m.cost.throughput_items_per_s:.2f} images per second, "
        f"Peak GPU Memory Usage: {mb:.2f} MB"
    )


# ---------------------------------------------------------------------------
# schema document

def schema_from_dict(doc: dict) -> DemographicSchema:
    if not isinstance(doc, dict) or set(doc) != {"attributes"}:
        raise SchemaError("schema document must be an object with one field 'attributes'")
    attrs = doc["attributes"]
    if not isinstance(attrs, list) or not attrs:
        raise SchemaError("schema: 'attributes' must be a nonempty array")
    seen_attr: set[str] = set()
    seen_group: set[str] = set()
    parsed = []
    for a in attrs:
        if not isinstance(a, dict) or set(a) != {"name", "groups"}:
            raise SchemaError("schema: each attribute must be {name, groups}")
        name = a["name"]
        if not isinstance(name, str) or not IDENT_PATTERN.match(name):
            raise SchemaError(f"schema: bad attribute name {name!r}")
        if name in seen_attr:
            raise SchemaError(f"schema: duplicate attribute {name!r}")
        seen_attr.add(name)
        groups = a["groups"]
        if not isinstance(groups, list) or not groups:
            raise SchemaError(f"schema: attribute {name!r} needs a nonempty group list")
        for g in groups:
            if not isinstance(g, str) or not IDENT_PATTERN.match(g):
                raise SchemaError(f"schema: bad group name {g!r}")
            if g in seen_group:
                raise SchemaError(f"schema: group name {g!r} used twice")
            seen_group.add(g)
        parsed.append(AttributeSpec(name=name, groups=tuple(groups)))
    if not any(len(a.groups) >= 2 for a in parsed):
        raise SchemaError("schema: need at least one attribute with two or more groups")
    return DemographicSchema(attributes=tuple(parsed))


def parse_schema(text: str) -> DemographicSchema:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno) from e
    return schema_from_dict(doc)


def schema_to_dict(schema: DemographicSchema) -> dict:
    return {
        "attributes": [
            {"name": a.name, "groups": list(a.groups)} for a in schema.attributes
        ]
    }


# ---------------------------------------------------------------------------
# predictions CSV

def parse_predictions_csv(text: str, schema: DemographicSchema) -> list[EvalRecord]:
    """Read the predictions table: header sample_id,true_label,pred_label
    followed by one column per schema attribute, in schema order."""
    expected = ["sample_id", "true_label", "pred_label"] + [a.name for a in schema.attributes]
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("predictions file is empty") from None
    if header != expected:
        raise ParseError(
            f"bad predictions header: expected {','.join(expected)}, got {','.join(header)}"
        )
    records = []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != len(expected):
            raise ParseError(f"expected {len(expected)} columns, got {len(row)}", line=lineno)
        sample_id = row[0]
        if not sample_id:
            raise ParseError("empty sample_id", line=lineno)
        try:
            true_label = int(row[1])
            pred_label = int(row[2])
        except ValueError:
            raise ParseError(f"labels must be integers, got {row[1]!r}/{row[2]!r}",
                             line=lineno) from None
        if true_label < 0 or pred_label < 0:
            raise ParseError("labels must be nonnegative", line=lineno)
        memberships = {}
        for a, value in zip(schema.attributes, row[3:]):
            if value not in a.groups:
                raise SchemaMismatch(
                    f"line {lineno}: {value!r} is not a group of attribute {a.name!r}"
                )
            memberships[a.name] = value
        records.append(EvalRecord(
            sample_id=sample_id,
            true_label=true_label,
            pred_label=pred_label,
            memberships=memberships,
        ))
    if not records:
        raise EmptyInput("predictions file has a header but no rows")
    return records


def render_predictions_csv(records: list[EvalRecord], schema: DemographicSchema) -> str:
    header = ["sample_id", "true_label", "pred_label"] + [a.name for a in schema.attributes]
    lines = [",".join(header)]
    for r in records:
        row = [r.sample_id, str(r.true_label), str(r.pred_label)]
        row += [r.memberships[a.name] for a in schema.attributes]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# MetricsRecord serialization (run log round-trip)

def group_stat_to_dict(s: GroupStat) -> dict:
    return {"accuracy": s.accuracy, "count": s.count, "correct": s.correct}


def metrics_to_dict(m: MetricsRecord) -> dict:
    return {
        "train_loss": m.train_loss,
        "train_acc": m.train_acc,
        "valid_loss": m.valid_loss,
        "valid_acc": m.valid_acc,
        "test_acc": m.test_acc,
        "unfairness": m.unfairness,
        "eodd": m.eodd,
        "eopp1": m.eopp1,
        "eopp2": m.eopp2,
        "group_detail": {g: group_stat_to_dict(s) for g, s in m.group_detail.items()},
        "cost": cost_report_to_dict(m.cost),
    }


def metrics_from_dict(doc: dict) -> MetricsRecord:
    if not isinstance(doc, dict):
        raise SchemaError("metrics record must be an object")

    def _num(key: str) -> float:
        v = doc.get(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"metrics record: {key!r} must be a number")
        return float(v)

    def _opt(key: str) -> float | None:
        v = doc.get(key)
        if v is None:
            return None
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"metrics record: {key!r} must be a number or null")
        return float(v)

    detail_doc = doc.get("group_detail")
    if not isinstance(detail_doc, dict):
        raise SchemaError("metrics record: 'group_detail' must be an object")
    detail = {}
    for g, s in detail_doc.items():
        if not isinstance(s, dict):
            raise SchemaError(f"metrics record: group_detail[{g!r}] must be an object")
        acc = s.get("accuracy")
        if acc is not None and (isinstance(acc, bool) or not isinstance(acc, (int, float))):
            raise SchemaError(f"metrics record: group_detail[{g!r}].accuracy must be a number")
        try:
            detail[g] = GroupStat(
                accuracy=None if acc is None else float(acc),
                count=int(s["count"]),
                correct=int(s["correct"]),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"metrics record: group_detail[{g!r}]: {e}") from e

    cost_doc = doc.get("cost")
    if not isinstance(cost_doc, dict):
        raise SchemaError("metrics record: 'cost' must be an object")

    return MetricsRecord(
        train_loss=_opt("train_loss"),
        train_acc=_num("train_acc"),
        valid_loss=_opt("valid_loss"),
        valid_acc=_num("valid_acc"),
        test_acc=_num("test_acc"),
        unfairness=_num("unfairness"),
        eodd=_opt("eodd"),
        eopp1=_opt("eopp1"),
        eopp2=_opt("eopp2"),
        group_detail=detail,
        cost=cost_report_from_dict(cost_doc),
    )
