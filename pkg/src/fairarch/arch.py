"""Sequential CNN architecture representation.

Defines the layer vocabulary the design LLM emits, plus parsing from / canonical
serialization to the JSON architecture document, shape inference over the layer
stack, and validation against a search-space description (Choices).

All types are immutable values; all operations are pure.
"""

from __future__ import annotations

import dataclasses
import json
import re
from dataclasses import dataclass

from .errors import ParseError, SchemaError, ShapeError

NAME_PATTERN = re.compile(r"^[A-Za-z0-9_-]{1,64}$")

NORM_KINDS = ("batch", "layer", "group", "none")
ACT_KINDS = ("relu", "gelu", "sigmoid", "tanh")
POOL_KINDS = ("max", "avg")


@dataclass(frozen=True)
class TensorShape:
    """Channels-first activation shape. A flat vector is (n, 1, 1)."""

    channels: int
    height: int
    width: int

    def numel(self) -> int:
        return self.channels * self.height * self.width


@dataclass(frozen=True)
class Conv2d:
    out_channels: int
    kernel: int
    stride: int
    padding: int
    bias: bool

    op = "conv2d"


@dataclass(frozen=True)
class Norm:
    kind: str
    groups: int | None = None

    op = "norm"


@dataclass(frozen=True)
class Activation:
    kind: str

    op = "act"


@dataclass(frozen=True)
class Pool:
    kind: str
    size: int
    stride: int

    op = "pool"


@dataclass(frozen=True)
class GlobalPool:
    kind: str = "avg"

    op = "global_pool"


@dataclass(frozen=True)
class Dropout:
    p: float

    op = "dropout"


@dataclass(frozen=True)
class Flatten:
    op = "flatten"


@dataclass(frozen=True)
class Dense:
    out_features: int
    bias: bool

    op = "dense"


LayerSpec = Conv2d | Norm | Activation | Pool | GlobalPool | Dropout | Flatten | Dense


@dataclass(frozen=True)
class Architecture:
    """One candidate design: named ordered layer stack over a fixed input."""

    name: str
    input: TensorShape
    num_classes: int
    layers: tuple[LayerSpec, ...]


@dataclass(frozen=True)
class Choices:
    """Search-space bounds a candidate must stay within."""

    kernel_sizes: tuple[int, ...]
    channel_range: tuple[int, int]
    depth_range: tuple[int, int]
    allowed_norms: tuple[str, ...]
    allowed_activations: tuple[str, ...]
    allow_dropout: bool
    dense_width_range: tuple[int, int]


@dataclass(frozen=True)
class Violation:
    """One validation failure. layer_index is -1 for architecture-level checks."""

    layer_index: int
    code: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    per_layer_shapes: tuple[TensorShape, ...] | None
    violations: tuple[Violation, ...]


# ---------------------------------------------------------------------------
# parsing

def _require_int(obj: dict, key: str, where: str, minimum: int) -> int:
    if key not in obj:
        raise SchemaError(f"{where}: missing field '{key}'")
    v = obj[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise SchemaError(f"{where}: field '{key}' must be an integer, got {v!r}")
    if v < minimum:
        raise SchemaError(f"{where}: field '{key}' must be >= {minimum}, got {v}")
    return v


def _require_bool(obj: dict, key: str, where: str) -> bool:
    if key not in obj:
        raise SchemaError(f"{where}: missing field '{key}'")
    v = obj[key]
    if not isinstance(v, bool):
        raise SchemaError(f"{where}: field '{key}' must be true or false, got {v!r}")
    return v


def _require_choice(obj: dict, key: str, where: str, allowed: tuple[str, ...]) -> str:
    if key not in obj:
        raise SchemaError(f"{where}: missing field '{key}'")
    v = obj[key]
    if v not in allowed:
        raise SchemaError(f"{where}: field '{key}' must be one of {list(allowed)}, got {v!r}")
    return v


def _reject_unknown(obj: dict, known: set[str], where: str) -> None:
    extra = set(obj) - known
    if extra:
        raise SchemaError(f"{where}: unknown field(s) {sorted(extra)}")


def _parse_layer(obj, index: int) -> LayerSpec:
    where = f"layers[{index}]"
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: layer must be an object, got {type(obj).__name__}")
    op = obj.get("op")
    if op == "conv2d":
        _reject_unknown(obj, {"op", "out_channels", "kernel", "stride", "padding", "bias"}, where)
        return Conv2d(
            out_channels=_require_int(obj, "out_channels", where, 1),
            kernel=_require_int(obj, "kernel", where, 1),
            stride=_require_int(obj, "stride", where, 1),
            padding=_require_int(obj, "padding", where, 0),
            bias=_require_bool(obj, "bias", where),
        )
    if op == "norm":
        _reject_unknown(obj, {"op", "kind", "groups"}, where)
        kind = _require_choice(obj, "kind", where, NORM_KINDS)
        groups = None
        if "groups" in obj:
            groups = _require_int(obj, "groups", where, 1)
        return Norm(kind=kind, groups=groups)
    if op == "act":
        _reject_unknown(obj, {"op", "kind"}, where)
        return Activation(kind=_require_choice(obj, "kind", where, ACT_KINDS))
    if op == "pool":
        _reject_unknown(obj, {"op", "kind", "size", "stride"}, where)
        return Pool(
            kind=_require_choice(obj, "kind", where, POOL_KINDS),
            size=_require_int(obj, "size", where, 1),
            stride=_require_int(obj, "stride", where, 1),
        )
    if op == "global_pool":
        _reject_unknown(obj, {"op", "kind"}, where)
        return GlobalPool(kind=_require_choice(obj, "kind", where, ("avg",)))
    if op == "dropout":
        _reject_unknown(obj, {"op", "p"}, where)
        if "p" not in obj:
            raise SchemaError(f"{where}: missing field 'p'")
        p = obj["p"]
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            raise SchemaError(f"{where}: field 'p' must be a number, got {p!r}")
        if not 0.0 <= float(p) < 1.0:
            raise SchemaError(f"{where}: field 'p' must be in [0, 1), got {p}")
        return Dropout(p=float(p))
    if op == "flatten":
        _reject_unknown(obj, {"op"}, where)
        return Flatten()
    if op == "dense":
        _reject_unknown(obj, {"op", "out_features", "bias"}, where)
        return Dense(
            out_features=_require_int(obj, "out_features", where, 1),
            bias=_require_bool(obj, "bias", where),
        )
    raise SchemaError(f"{where}: unknown layer op {op!r}")


def architecture_from_dict(doc: dict) -> Architecture:
    """Build an Architecture from a decoded JSON object, checking the schema."""
    if not isinstance(doc, dict):
        raise SchemaError(f"document root must be an object, got {type(doc).__name__}")
    _reject_unknown(doc, {"name", "input", "num_classes", "layers"}, "document")
    name = doc.get("name")
    if not isinstance(name, str) or not NAME_PATTERN.match(name):
        raise SchemaError(
            f"field 'name' must match [A-Za-z0-9_-]{{1,64}}, got {name!r}"
        )
    inp = doc.get("input")
    if not isinstance(inp, dict):
        raise SchemaError("field 'input' must be an object")
    _reject_unknown(inp, {"channels", "height", "width"}, "input")
    input_shape = TensorShape(
        channels=_require_int(inp, "channels", "input", 1),
        height=_require_int(inp, "height", "input", 1),
        width=_require_int(inp, "width", "input", 1),
    )
    num_classes = _require_int(doc, "num_classes", "document", 1)
    layers = doc.get("layers")
    if not isinstance(layers, list) or not layers:
        raise SchemaError("field 'layers' must be a nonempty array")
    parsed = tuple(_parse_layer(layer, i) for i, layer in enumerate(layers))
    return Architecture(name=name, input=input_shape, num_classes=num_classes, layers=parsed)


def parse_architecture(text: str) -> Architecture:
    """Parse an architecture document. Syntactic and schema checks only; shape
    inference is a separate step."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno) from e
    return architecture_from_dict(doc)


# ---------------------------------------------------------------------------
# canonical serialization

def _layer_to_dict(layer: LayerSpec) -> dict:
    if isinstance(layer, Conv2d):
        return {
            "op": "conv2d",
            "out_channels": layer.out_channels,
            "kernel": layer.kernel,
            "stride": layer.stride,
            "padding": layer.padding,
            "bias": layer.bias,
        }
    if isinstance(layer, Norm):
        d = {"op": "norm", "kind": layer.kind}
        if layer.groups is not None:
            d["groups"] = layer.groups
        return d
    if isinstance(layer, Activation):
        return {"op": "act", "kind": layer.kind}
    if isinstance(layer, Pool):
        return {"op": "pool", "kind": layer.kind, "size": layer.size, "stride": layer.stride}
    if isinstance(layer, GlobalPool):
        return {"op": "global_pool", "kind": layer.kind}
    if isinstance(layer, Dropout):
        return {"op": "dropout", "p": layer.p}
    if isinstance(layer, Flatten):
        return {"op": "flatten"}
    if isinstance(layer, Dense):
        return {"op": "dense", "out_features": layer.out_features, "bias": layer.bias}
    raise SchemaError(f"unknown layer type {type(layer).__name__}")


def architecture_to_dict(arch: Architecture) -> dict:
    """Architecture as a JSON-ready dict in canonical key order."""
    return {
        "name": arch.name,
        "input": {
            "channels": arch.input.channels,
            "height": arch.input.height,
            "width": arch.input.width,
        },
        "num_classes": arch.num_classes,
        "layers": [_layer_to_dict(layer) for layer in arch.layers],
    }


def serialize_architecture(arch: Architecture) -> str:
    """Canonical document text: fixed key order, 2-space indent, no trailing
    newline. Refuses structurally invalid architectures."""
    doc = architecture_to_dict(arch)
    # round-trip through the schema checker so invariant violations surface
    # before anything is written
    architecture_from_dict(json.loads(json.dumps(doc)))
    return json.dumps(doc, indent=2)


def structural_key(arch: Architecture) -> str:
    """Canonical serialization with the name blanked; equal keys mean the same
    design regardless of what the LLM called it."""
    return serialize_architecture(dataclasses.replace(arch, name="x"))


# ---------------------------------------------------------------------------
# shape inference

def _conv_out(extent: int, kernel: int, stride: int, padding: int) -> int:
    return (extent + 2 * padding - kernel) // stride + 1


def infer_shapes(arch: Architecture) -> list[TensorShape]:
    """Output shape after each layer, in order.

    Raises ShapeError at the first layer whose output is impossible: a spatial
    dim below 1, a spatial op after flatten, dense before flatten, group-norm
    groups not dividing channels, or a final output that is not a flat vector
    of length num_classes.
    """
    shape = arch.input
    flat = False
    out: list[TensorShape] = []
    for i, layer in enumerate(arch.layers):
        if isinstance(layer, Conv2d):
            if flat:
                raise ShapeError(i, "conv2d cannot follow flatten")
            h = _conv_out(shape.height, layer.kernel, layer.stride, layer.padding)
            w = _conv_out(shape.width, layer.kernel, layer.stride, layer.padding)
            if h < 1 or w < 1:
                raise ShapeError(
                    i,
                    f"conv2d output spatial dims {h}x{w} fall below 1 "
                    f"(input {shape.height}x{shape.width}, kernel {layer.kernel}, "
                    f"stride {layer.stride}, padding {layer.padding})",
                )
            shape = TensorShape(layer.out_channels, h, w)
        elif isinstance(layer, Pool):
            if flat:
                raise ShapeError(i, "pool cannot follow flatten")
            h = _conv_out(shape.height, layer.size, layer.stride, 0)
            w = _conv_out(shape.width, layer.size, layer.stride, 0)
            if h < 1 or w < 1:
                raise ShapeError(
                    i,
                    f"pool output spatial dims {h}x{w} fall below 1 "
                    f"(input {shape.height}x{shape.width}, size {layer.size}, "
                    f"stride {layer.stride})",
                )
            shape = TensorShape(shape.channels, h, w)
        elif isinstance(layer, GlobalPool):
            if flat:
                raise ShapeError(i, "global_pool cannot follow flatten")
            shape = TensorShape(shape.channels, 1, 1)
        elif isinstance(layer, Norm):
            if layer.kind == "group":
                if layer.groups is None:
                    raise ShapeError(i, "group norm requires 'groups'")
                if shape.channels % layer.groups != 0:
                    raise ShapeError(
                        i,
                        f"group norm groups={layer.groups} does not divide "
                        f"channels={shape.channels}",
                    )
        elif isinstance(layer, (Activation, Dropout)):
            pass
        elif isinstance(layer, Flatten):
            shape = TensorShape(shape.numel(), 1, 1)
            flat = True
        elif isinstance(layer, Dense):
            if not flat:
                raise ShapeError(i, "dense requires a flat vector input (flatten first)")
            shape = TensorShape(layer.out_features, 1, 1)
        else:  # pragma: no cover - exhaustive over the vocabulary
            raise ShapeError(i, f"unknown layer type {type(layer).__name__}")
        out.append(shape)
    last = len(arch.layers) - 1
    if not flat:
        raise ShapeError(last, "final output must be a flat vector (missing flatten)")
    if shape.channels != arch.num_classes:
        raise ShapeError(
            last,
            f"final vector length {shape.channels} != num_classes {arch.num_classes}",
        )
    return out


# ---------------------------------------------------------------------------
# validation against Choices

def validate(arch: Architecture, choices: Choices) -> ValidationReport:
    """Check shapes plus every search-space constraint; failures are data.

    Reports every violation found, not just the first. Dense layers that
    produce exactly num_classes features are the classifier head and are
    exempt from dense_width_range.
    """
    violations: list[Violation] = []
    shapes: tuple[TensorShape, ...] | None = None
    try:
        shapes = tuple(infer_shapes(arch))
    except ShapeError as e:
        violations.append(Violation(e.layer_index, "SHAPE_ERROR", e.message))

    conv_count = 0
    for i, layer in enumerate(arch.layers):
        if isinstance(layer, Conv2d):
            conv_count += 1
            if layer.kernel not in choices.kernel_sizes:
                violations.append(Violation(
                    i, "KERNEL_NOT_ALLOWED",
                    f"kernel {layer.kernel} not in allowed sizes {list(choices.kernel_sizes)}",
                ))
            lo, hi = choices.channel_range
            if not lo <= layer.out_channels <= hi:
                violations.append(Violation(
                    i, "CHANNELS_OUT_OF_RANGE",
                    f"out_channels {layer.out_channels} outside [{lo}, {hi}]",
                ))
        elif isinstance(layer, Norm):
            if layer.kind not in choices.allowed_norms:
                violations.append(Violation(
                    i, "NORM_NOT_ALLOWED",
                    f"norm kind {layer.kind!r} not in {list(choices.allowed_norms)}",
                ))
        elif isinstance(layer, Activation):
            if layer.kind not in choices.allowed_activations:
                violations.append(Violation(
                    i, "ACTIVATION_NOT_ALLOWED",
                    f"activation {layer.kind!r} not in {list(choices.allowed_activations)}",
                ))
        elif isinstance(layer, Dropout):
            if not choices.allow_dropout:
                violations.append(Violation(i, "DROPOUT_NOT_ALLOWED", "dropout is not allowed"))
        elif isinstance(layer, Dense):
            if layer.out_features != arch.num_classes:
                lo, hi = choices.dense_width_range
                if not lo <= layer.out_features <= hi:
                    violations.append(Violation(
                        i, "DENSE_WIDTH_OUT_OF_RANGE",
                        f"out_features {layer.out_features} outside [{lo}, {hi}]",
                    ))
    lo, hi = choices.depth_range
    if not lo <= conv_count <= hi:
        violations.append(Violation(
            -1, "DEPTH_OUT_OF_RANGE",
            f"conv layer count {conv_count} outside [{lo}, {hi}]",
        ))

    valid = not violations
    return ValidationReport(
        valid=valid,
        per_layer_shapes=shapes if valid else None,
        violations=tuple(violations),
    )


# ---------------------------------------------------------------------------
# Choices document

def choices_from_dict(doc: dict) -> Choices:
    if not isinstance(doc, dict):
        raise SchemaError("choices document root must be an object")
    _reject_unknown(doc, {
        "kernel_sizes", "channel_range", "depth_range", "allowed_norms",
        "allowed_activations", "allow_dropout", "dense_width_range",
    }, "choices")

    def _range(key: str, minimum: int) -> tuple[int, int]:
        v = doc.get(key)
        if (not isinstance(v, list) or len(v) != 2
                or any(isinstance(x, bool) or not isinstance(x, int) for x in v)):
            raise SchemaError(f"choices: '{key}' must be a [min, max] integer pair")
        lo, hi = v
        if lo > hi:
            raise SchemaError(f"choices: '{key}' min {lo} exceeds max {hi}")
        if lo < minimum:
            raise SchemaError(f"choices: '{key}' min must be >= {minimum}")
        return lo, hi

    ks = doc.get("kernel_sizes")
    if not isinstance(ks, list) or not ks:
        raise SchemaError("choices: 'kernel_sizes' must be a nonempty array")
    for k in ks:
        if isinstance(k, bool) or not isinstance(k, int) or k < 1 or k % 2 == 0:
            raise SchemaError(f"choices: kernel sizes must be odd positive integers, got {k!r}")

    def _subset(key: str, allowed: tuple[str, ...]) -> tuple[str, ...]:
        v = doc.get(key)
        if not isinstance(v, list):
            raise SchemaError(f"choices: '{key}' must be an array")
        for x in v:
            if x not in allowed:
                raise SchemaError(f"choices: '{key}' entry {x!r} not in {list(allowed)}")
        return tuple(v)

    if "allow_dropout" not in doc or not isinstance(doc["allow_dropout"], bool):
        raise SchemaError("choices: 'allow_dropout' must be true or false")

    return Choices(
        kernel_sizes=tuple(sorted(set(ks))),
        channel_range=_range("channel_range", 1),
        depth_range=_range("depth_range", 0),
        allowed_norms=_subset("allowed_norms", NORM_KINDS),
        allowed_activations=_subset("allowed_activations", ACT_KINDS),
        allow_dropout=doc["allow_dropout"],
        dense_width_range=_range("dense_width_range", 1),
    )


def parse_choices(text: str) -> Choices:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno) from e
    return choices_from_dict(doc)


def choices_to_dict(choices: Choices) -> dict:
    return {
        "kernel_sizes": list(choices.kernel_sizes),
        "channel_range": list(choices.channel_range),
        "depth_range": list(choices.depth_range),
        "allowed_norms": list(choices.allowed_norms),
        "allowed_activations": list(choices.allowed_activations),
        "allow_dropout": choices.allow_dropout,
        "dense_width_range": list(choices.dense_width_range),
    }


def serialize_choices(choices: Choices) -> str:
    return json.dumps(choices_to_dict(choices), indent=2)
