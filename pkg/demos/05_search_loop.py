"""
The full search loop with scripted replies
==========================================

"""

import json
import tempfile
from pathlib import Path

from fairarch import (
    EvaluatorSpec,
    LlmConfig,
    SearchConfig,
    format_metrics_report,
    load_run,
    parse_choices,
    parse_profile,
    run_search,
)
from fairarch.resources_util import read_packaged

choices = parse_choices(read_packaged("choices_default.json"))
device = parse_profile(read_packaged("device_nvidia_a10.json"))


def scripted(name, out_channels, kernel=3, padding=1):
    doc = {
        "name": name,
        "input": {"channels": 3, "height": 32, "width": 32},
        "num_classes": 8,
        "layers": [
            {"op": "conv2d", "out_channels": out_channels, "kernel": kernel,
             "stride": 1, "padding": padding, "bias": True},
            {"op": "act", "kind": "relu"},
            {"op": "global_pool", "kind": "avg"},
            {"op": "flatten"},
            {"op": "dense", "out_features": 8, "bias": True},
        ],
    }
    return "```json\n" + json.dumps(doc, indent=2) + "\n```"


# Three scripted designs stand in for a live model; the simulated evaluator
# turns each into deterministic metrics, so the whole run is reproducible.
replies = [
    scripted("wide-early", 48),
    scripted("narrow", 12),
    scripted("mid-k5", 24, kernel=5, padding=2),
]

workdir = Path(tempfile.mkdtemp(prefix="fairarch-demo-"))
replies_path = workdir / "replies.jsonl"
replies_path.write_text("".join(json.dumps(r) + "\n" for r in replies),
                        encoding="utf-8")

cfg = SearchConfig(
    iter_max=3,
    template_path=None,
    prompt_template_path=None,
    choices=choices,
    env=device,
    llm=LlmConfig(mock_replies_path=str(replies_path)),
    evaluator=EvaluatorSpec(kind="simulated", seed=11, device=device),
    run_log_path=str(workdir / "run_log.jsonl"),
)
result = run_search(cfg)

# Every iteration appended one durable line to the run log; reloading it
# rebuilds the archive and reaches the same optimum.
loaded = load_run(cfg.run_log_path)
print("run log:")
for r in loaded.records:
    m = r.metrics
    print(f"  iter {r.iteration}: {r.name:12s} unfairness={m.unfairness:.4f}"
          f" valid_acc={m.valid_acc:.2%} params={m.cost.param_count:,}")

# Selection is lexicographic: lowest unfairness first, accuracy and then
# parameter count as tiebreakers.
print(f"\nbest: {result.name}")
print(format_metrics_report(result.metrics))
