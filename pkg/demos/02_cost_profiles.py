"""
Static cost analysis across device profiles
===========================================

"""

from fairarch import (
    architecture_from_dict,
    cost_report,
    count_flops,
    count_parameters,
    parse_profile,
)
from fairarch.resources_util import read_packaged

arch = architecture_from_dict({
    "name": "demo-net",
    "input": {"channels": 3, "height": 32, "width": 32},
    "num_classes": 10,
    "layers": [
        {"op": "conv2d", "out_channels": 32, "kernel": 3, "stride": 1,
         "padding": 1, "bias": True},
        {"op": "act", "kind": "relu"},
        {"op": "pool", "kind": "max", "size": 2, "stride": 2},
        {"op": "conv2d", "out_channels": 64, "kernel": 3, "stride": 1,
         "padding": 1, "bias": True},
        {"op": "act", "kind": "relu"},
        {"op": "global_pool", "kind": "avg"},
        {"op": "flatten"},
        {"op": "dense", "out_features": 10, "bias": True},
    ],
})

# Parameter and FLOP counts are pure functions of the architecture; they do
# not need a device. FLOPs count one multiply-accumulate as two operations.
print(f"parameters: {count_parameters(arch):,}")
print(f"flops at batch 1: {count_flops(arch, 1):,}")
print(f"flops at batch 8: {count_flops(arch, 8):,}")

# The packaged profiles describe a datacenter GPU and a small edge board with
# synthetic constants. Latency and throughput come from a simple roofline:
# compute time plus a fixed per-layer overhead.
for name in ("device_nvidia_a10.json", "device_raspberry_pi_4.json"):
    profile = parse_profile(read_packaged(name))
    report = cost_report(arch, 8, profile)
    print(f"\n{profile.name}:")
    print(f"  peak memory: {report.peak_memory_bytes / 1048576:.2f} MB")
    print(f"  batch-8 latency: {report.latency_s * 1e3:.3f} ms")
    print(f"  throughput: {report.throughput_items_per_s:,.0f} images/s")
