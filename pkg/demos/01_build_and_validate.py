"""
Building, checking, and serializing an architecture
===================================================

"""

import json

from fairarch import (
    architecture_from_dict,
    infer_shapes,
    parse_architecture,
    parse_choices,
    serialize_architecture,
    validate,
)
from fairarch.resources_util import read_packaged

# An architecture is a plain JSON document: an input shape, a class count,
# and an ordered layer list. This one is a small CIFAR-style net.
doc = {
    "name": "demo-net",
    "input": {"channels": 3, "height": 32, "width": 32},
    "num_classes": 10,
    "layers": [
        {"op": "conv2d", "out_channels": 16, "kernel": 3, "stride": 1,
         "padding": 1, "bias": True},
        {"op": "norm", "kind": "batch"},
        {"op": "act", "kind": "relu"},
        {"op": "pool", "kind": "max", "size": 2, "stride": 2},
        {"op": "global_pool", "kind": "avg"},
        {"op": "flatten"},
        {"op": "dense", "out_features": 10, "bias": True},
    ],
}
arch = architecture_from_dict(doc)

# Shape inference walks the stack and reports the tensor shape after every
# layer. A stack that collapses below 1x1 raises with the offending index.
print("layer shapes:")
for layer, shape in zip(arch.layers, infer_shapes(arch)):
    print(f"  {layer.op:12s} -> {shape.channels}x{shape.height}x{shape.width}")

# Serialization is canonical: fixed key order, two-space indent, no trailing
# newline. Parsing the output reproduces the same bytes.
text = serialize_architecture(arch)
assert serialize_architecture(parse_architecture(text)) == text
print(f"\ncanonical form is {len(text)} bytes and round-trips exactly")

# Validation checks the same document against a choices file: the menu of
# kernel sizes, channel ranges, and so on that a designer may pick from.
choices = parse_choices(read_packaged("choices_default.json"))
report = validate(arch, choices)
print(f"valid against the default choices: {report.valid}")

# Violations carry the layer index and a stable code. Here the kernel size 2
# is off-menu and the channel count is far above the allowed range.
bad = dict(doc, layers=[dict(doc["layers"][0], kernel=2, out_channels=999)]
           + doc["layers"][1:])
report = validate(architecture_from_dict(bad), choices)
for v in report.violations:
    print(f"  layer {v.layer_index}: {v.code}: {v.message}")

# The document form is handy for editing; json.dumps(doc) parses right back.
assert parse_architecture(json.dumps(bad)).layers[0].out_channels == 999
