"""
Group fairness metrics from a prediction table
==============================================

"""

from fairarch import (
    EvalRecord,
    eodd,
    eopp1,
    eopp2,
    group_accuracies,
    overall_accuracy,
    schema_from_dict,
    unfairness,
)
from fairarch.fairness import render_predictions_csv

# A schema lists the demographic attributes and their groups. Every record
# must name one group per attribute.
schema = schema_from_dict({
    "attributes": [
        {"name": "gender", "groups": ["female", "male"]},
        {"name": "age", "groups": ["young", "old"]},
    ],
})

# Hand-built predictions for a binary task. The male/old cell is served
# noticeably worse than the rest, which the metrics should surface.
CELLS = {
    ("female", "young"): [(1, 1), (1, 1), (0, 0), (0, 0), (1, 0)],
    ("female", "old"): [(1, 1), (1, 1), (0, 0), (0, 1), (1, 1)],
    ("male", "young"): [(1, 1), (0, 0), (0, 0), (1, 1), (1, 0)],
    ("male", "old"): [(1, 0), (0, 1), (1, 0), (0, 0), (1, 1)],
}
records = []
for (g, a), outcomes in CELLS.items():
    for i, (true, pred) in enumerate(outcomes):
        records.append(EvalRecord(sample_id=f"{g[0]}{a[0]}{i}",
                                  true_label=true, pred_label=pred,
                                  memberships={"gender": g, "age": a}))

# Overall accuracy plus one accuracy per group. Unfairness is the mean
# absolute gap between each group's accuracy and the overall number.
print(f"overall accuracy: {overall_accuracy(records):.2%}")
for group, stat in group_accuracies(records, schema).items():
    print(f"  {group:6s} {stat.accuracy:.2%} ({stat.correct}/{stat.count})")
print(f"unfairness: {unfairness(records, schema):.4f}")

# The pairwise metrics compare true/false positive rates between groups of
# the same attribute, one-vs-rest per class, worst case over rate kind for
# EODD. Scores are averages over group pairs.
print(f"eodd:  {eodd(records, schema):.4f}")
print(f"eopp1: {eopp1(records, schema):.4f}")
print(f"eopp2: {eopp2(records, schema):.4f}")

# The same records serialize to the CSV the command line consumes.
print("\npredictions csv, first three lines:")
for line in render_predictions_csv(records, schema).splitlines()[:3]:
    print(f"  {line}")
