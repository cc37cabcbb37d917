"""
Prompt generation and a scripted design round
=============================================

"""

import json

from fairarch import (
    DeviceProfile,
    ExhaustedRetries,
    LlmConfig,
    MockBackend,
    design_candidate,
    generate_prompt,
    load_default_arch_template,
    parse_choices,
    structural_key,
)
from fairarch.resources_util import read_packaged

choices = parse_choices(read_packaged("choices_default.json"))
env = DeviceProfile(name="jetson-like", flops_per_second=5e11,
                    per_layer_overhead_s=5e-5, bytes_per_scalar=4,
                    memory_limit_bytes=4_000_000_000)

# Iteration 1 has no archive yet, so the best-so-far slots render a fixed
# cold-start sentence instead of an architecture and a metrics report.
bundle = generate_prompt(None, None, load_default_arch_template(), choices,
                         env, 1)
print("system text:")
print(f"  {bundle.system_text}")
print("\nfirst lines of the user text:")
for line in bundle.user_text.splitlines()[:4]:
    print(f"  {line}")

# The designer sends the bundle to a backend and keeps asking until a reply
# contains a valid architecture. MockBackend replays scripted strings, so the
# whole exchange is deterministic. The first reply below is rejected (kernel
# size 2 is off-menu) and the correction request gets a fixed second reply.
doc = {
    "name": "scripted-net",
    "input": {"channels": 3, "height": 32, "width": 32},
    "num_classes": 8,
    "layers": [
        {"op": "conv2d", "out_channels": 24, "kernel": 3, "stride": 1,
         "padding": 1, "bias": True},
        {"op": "global_pool", "kind": "avg"},
        {"op": "flatten"},
        {"op": "dense", "out_features": 8, "bias": True},
    ],
}
bad = dict(doc, layers=[dict(doc["layers"][0], kernel=2)] + doc["layers"][1:])
replies = [
    "How about this?\n```json\n" + json.dumps(bad, indent=2) + "\n```",
    "Fixed:\n```json\n" + json.dumps(doc, indent=2) + "\n```",
]
outcome = design_candidate(bundle, LlmConfig(max_retries=3), choices,
                           backend=MockBackend(replies))
print(f"\naccepted {outcome.architecture.name!r} "
      f"after {outcome.attempts} attempts")

# Structural keys hash everything except the name; the loop uses them to
# reject candidates that only rename an architecture already in the archive.
renamed = dict(doc, name="same-thing-again")
try:
    design_candidate(
        bundle, LlmConfig(max_retries=1), choices,
        backend=MockBackend(["```json\n" + json.dumps(renamed) + "\n```"]),
        known_keys={structural_key(outcome.architecture)})
except ExhaustedRetries as e:
    codes = [v.code for v in e.last_violations]
    print(f"renamed duplicate rejected with codes {codes}")
