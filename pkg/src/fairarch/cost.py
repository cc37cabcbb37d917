"""Hardware cost estimation from an architecture alone.

Counts trainable parameters and FLOPs per layer, models inference peak memory
as resident weights plus the largest input+output activation pair, and turns
FLOPs into latency/throughput via a device profile. Multiply-accumulates count
as 2 FLOPs. Nothing here touches real hardware; profiles supply synthetic
constants so the search loop gets a consistent ordering signal.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .arch import (
    Activation,
    Architecture,
    Conv2d,
    Dense,
    Dropout,
    Flatten,
    GlobalPool,
    Norm,
    Pool,
    TensorShape,
    infer_shapes,
)
from .errors import ParseError, SchemaError

BYTES_PER_SCALAR_ALLOWED = (2, 4, 8)


@dataclass(frozen=True)
class DeviceProfile:
    """Deployment target model: sustained FLOP rate plus fixed per-layer cost."""

    name: str
    flops_per_second: float
    per_layer_overhead_s: float
    bytes_per_scalar: int
    memory_limit_bytes: int | None = None
    note: str | None = None


@dataclass(frozen=True)
class CostReport:
    param_count: int
    flops: int
    peak_memory_bytes: int
    latency_s: float
    throughput_items_per_s: float


@dataclass(frozen=True)
class LatencyEstimate:
    latency_s: float
    throughput_items_per_s: float


def _layer_params(layer, in_shape: TensorShape) -> int:
    if isinstance(layer, Conv2d):
        p = layer.kernel * layer.kernel * in_shape.channels * layer.out_channels
        if layer.bias:
            p += layer.out_channels
        return p
    if isinstance(layer, Dense):
        p = in_shape.channels * layer.out_features
        if layer.bias:
            p += layer.out_features
        return p
    if isinstance(layer, Norm):
        # scale + shift per channel; "none" is a placeholder with no weights
        return 0 if layer.kind == "none" else 2 * in_shape.channels
    return 0


def _layer_flops(layer, in_shape: TensorShape, out_shape: TensorShape) -> int:
    if isinstance(layer, Conv2d):
        return (2 * layer.kernel * layer.kernel * in_shape.channels
                * layer.out_channels * out_shape.height * out_shape.width)
    if isinstance(layer, Dense):
        return 2 * in_shape.channels * layer.out_features
    if isinstance(layer, (Pool, GlobalPool)):
        return in_shape.numel()
    if isinstance(layer, Norm):
        # normalize + affine, counted uniformly regardless of kind
        return 4 * in_shape.numel()
    if isinstance(layer, Activation):
        return in_shape.numel()
    if isinstance(layer, (Dropout, Flatten)):
        return 0
    raise SchemaError(f"unknown layer type {type(layer).__name__}")


def count_parameters(arch: Architecture) -> int:
    """Trainable scalar count; shape inference runs first and may raise."""
    shapes = infer_shapes(arch)
    total = 0
    in_shape = arch.input
    for layer, out_shape in zip(arch.layers, shapes):
        total += _layer_params(layer, in_shape)
        in_shape = out_shape
    return total


def count_flops(arch: Architecture, batch: int) -> int:
    """Forward-pass FLOPs for one batch (MAC = 2 ops), linear in batch."""
    if batch < 1:
        raise ValueError(f"batch must be positive, got {batch}")
    shapes = infer_shapes(arch)
    total = 0
    in_shape = arch.input
    for layer, out_shape in zip(arch.layers, shapes):
        total += _layer_flops(layer, in_shape, out_shape)
        in_shape = out_shape
    return total * batch


def estimate_peak_memory(arch: Architecture, batch: int, profile: DeviceProfile) -> int:
    """Weights resident for the whole pass, plus the widest simultaneous
    input/output activation pair scaled by batch."""
    if batch < 1:
        raise ValueError(f"batch must be positive, got {batch}")
    shapes = infer_shapes(arch)
    weights = count_parameters(arch) * profile.bytes_per_scalar
    widest = 0
    in_shape = arch.input
    for out_shape in shapes:
        widest = max(widest, in_shape.numel() + out_shape.numel())
        in_shape = out_shape
    return weights + batch * profile.bytes_per_scalar * widest


def estimate_latency(arch: Architecture, batch: int, profile: DeviceProfile) -> LatencyEstimate:
    """Compute-bound term plus a fixed launch overhead per layer."""
    flops = count_flops(arch, batch)
    latency = flops / profile.flops_per_second + len(arch.layers) * profile.per_layer_overhead_s
    throughput = batch / latency if latency > 0 else 0.0
    return LatencyEstimate(latency_s=latency, throughput_items_per_s=throughput)


def cost_report(arch: Architecture, batch: int, profile: DeviceProfile) -> CostReport:
    """All four cost figures in one pass."""
    lat = estimate_latency(arch, batch, profile)
    return CostReport(
        param_count=count_parameters(arch),
        flops=count_flops(arch, batch),
        peak_memory_bytes=estimate_peak_memory(arch, batch, profile),
        latency_s=lat.latency_s,
        throughput_items_per_s=lat.throughput_items_per_s,
    )


# ---------------------------------------------------------------------------
# DeviceProfile document

def profile_from_dict(doc: dict) -> DeviceProfile:
    if not isinstance(doc, dict):
        raise SchemaError("device profile root must be an object")
    known = {"name", "flops_per_second", "per_layer_overhead_s", "bytes_per_scalar",
             "memory_limit_bytes", "note"}
    extra = set(doc) - known
    if extra:
        raise SchemaError(f"device profile: unknown field(s) {sorted(extra)}")
    name = doc.get("name")
    if not isinstance(name, str) or not name:
        raise SchemaError("device profile: 'name' must be a nonempty string")

    def _positive_real(key: str, allow_zero: bool = False) -> float:
        v = doc.get(key)
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise SchemaError(f"device profile: '{key}' must be a number")
        v = float(v)
        if v < 0 or (v == 0 and not allow_zero):
            raise SchemaError(f"device profile: '{key}' must be positive, got {v}")
        return v

    bps = doc.get("bytes_per_scalar")
    if isinstance(bps, bool) or not isinstance(bps, int) or bps not in BYTES_PER_SCALAR_ALLOWED:
        raise SchemaError(
            f"device profile: 'bytes_per_scalar' must be one of {list(BYTES_PER_SCALAR_ALLOWED)}"
        )
    limit = doc.get("memory_limit_bytes")
    if limit is not None:
        if isinstance(limit, bool) or not isinstance(limit, int) or limit < 1:
            raise SchemaError("device profile: 'memory_limit_bytes' must be a positive integer")
    note = doc.get("note")
    if note is not None and not isinstance(note, str):
        raise SchemaError("device profile: 'note' must be a string")

    return DeviceProfile(
        name=name,
        flops_per_second=_positive_real("flops_per_second"),
        per_layer_overhead_s=_positive_real("per_layer_overhead_s", allow_zero=True),
        bytes_per_scalar=bps,
        memory_limit_bytes=limit,
        note=note,
    )


def parse_profile(text: str) -> DeviceProfile:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno) from e
    return profile_from_dict(doc)


def profile_to_dict(profile: DeviceProfile) -> dict:
    doc = {
        "name": profile.name,
        "flops_per_second": profile.flops_per_second,
        "per_layer_overhead_s": profile.per_layer_overhead_s,
        "bytes_per_scalar": profile.bytes_per_scalar,
    }
    if profile.memory_limit_bytes is not None:
        doc["memory_limit_bytes"] = profile.memory_limit_bytes
    if profile.note is not None:
        doc["note"] = profile.note
    return doc


def cost_report_to_dict(report: CostReport) -> dict:
    return {
        "param_count": report.param_count,
        "flops": report.flops,
        "peak_memory_bytes": report.peak_memory_bytes,
        "latency_s": report.latency_s,
        "throughput_items_per_s": report.throughput_items_per_s,
    }


def cost_report_from_dict(doc: dict) -> CostReport:
    if not isinstance(doc, dict):
        raise SchemaError("cost report must be an object")
    try:
        return CostReport(
            param_count=int(doc["param_count"]),
            flops=int(doc["flops"]),
            peak_memory_bytes=int(doc["peak_memory_bytes"]),
            latency_s=float(doc["latency_s"]),
            throughput_items_per_s=float(doc["throughput_items_per_s"]),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise SchemaError(f"cost report: {e}") from e
