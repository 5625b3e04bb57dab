"""Packed-vs-naive throughput benchmark for the binary convolutions.

Correctness comes first: the packed XNOR-popcount inference path must produce
bit-identical class probabilities to the arithmetic path on the benchmarked
windows before any timing is reported. Timings then cover the arithmetic
(naive +-1 GEMM) engine, the packed engine on the active word backend, and a
word-kernel microbenchmark for every importable backend (compiled extension
and pure-numpy fallback).
"""

import time
from dataclasses import dataclass, field

import numpy as np

from . import bits
from .errors import InvalidValue
from .layers import ConvLayer
from .model import resource_report


@dataclass
class EngineTiming:
    engine: str
    windows_per_s: float
    ns_per_binary_op: float


@dataclass
class BackendTiming:
    backend: str
    ns_per_binary_op: float


@dataclass
class BenchReport:
    n_windows: int
    iters: int
    binary_ops_per_window: int
    outputs_identical: bool
    engines: list = field(default_factory=list)
    backends: list = field(default_factory=list)

    def as_text(self):
        lines = [
            f"windows: {self.n_windows}  iters: {self.iters}  "
            f"binary ops/window: {self.binary_ops_per_window}",
            f"packed output identical to naive: {self.outputs_identical}",
            f"{'engine':<22} {'windows/s':>12} {'ns/binary-op':>14}",
        ]
        for e in self.engines:
            lines.append(f"{e.engine:<22} {e.windows_per_s:>12.2f} {e.ns_per_binary_op:>14.3f}")
        lines.append("word-kernel backends (xnor dot microbenchmark):")
        for b in self.backends:
            lines.append(f"  {b.backend:<20} {b.ns_per_binary_op:>14.4f} ns/op")
        return "\n".join(lines)


def _time_forward(model, xb, iters, engine):
    t0 = time.perf_counter()
    for _ in range(iters):
        out = model.forward_batch(xb, mode="infer", engine=engine)
    return time.perf_counter() - t0, out


def bench_model(model, n_windows=16, iters=3, seed=0):
    """Assert packed == naive on random windows, then time both engines."""
    if iters < 1 or n_windows < 1:
        raise InvalidValue("bench needs at least one window and one iteration")
    rng = np.random.default_rng(seed)
    xb = rng.normal(size=(n_windows,) + tuple(model.config.input_shape)).astype(np.float32)

    naive = model.forward_batch(xb, mode="infer", engine="arithmetic")
    packed = model.forward_batch(xb, mode="infer", engine="folded")
    identical = bool(np.array_equal(naive, packed))

    rep = resource_report(model)
    ops = rep.total_binary_op_count
    report = BenchReport(n_windows=n_windows, iters=iters,
                         binary_ops_per_window=ops, outputs_identical=identical)
    if not identical:
        return report

    for engine, label in (("arithmetic", "naive (+-1 GEMM)"),
                          ("folded", f"packed ({bits.active_backend_name()})")):
        elapsed, _ = _time_forward(model, xb, iters, engine)
        total_windows = n_windows * iters
        report.engines.append(EngineTiming(
            engine=label,
            windows_per_s=total_windows / elapsed if elapsed > 0 else float("inf"),
            ns_per_binary_op=elapsed / (ops * total_windows) * 1e9 if ops else 0.0,
        ))

    report.backends = bench_backends(model, iters=max(iters, 3), seed=seed)
    return report


def _largest_binary_conv(model):
    best = None
    for _, layer in model.layers:
        if isinstance(layer, ConvLayer) and layer.precision == "binary":
            if best is None or layer.window_size * layer.out_maps > best.window_size * best.out_maps:
                best = layer
    return best


def bench_backends(model, iters=3, rows=4096, seed=0):
    """Microbenchmark of every word backend on the model's widest binary conv."""
    layer = _largest_binary_conv(model)
    if layer is None:
        return []
    rng = np.random.default_rng(seed)
    n = layer.window_size
    mat = rng.choice([-1.0, 1.0], size=(rows, n)).astype(np.float32)
    packed_rows, _ = bits.pack_rows(mat)
    wwords, _ = layer.packed_weights()
    ops = rows * layer.out_maps * n
    out = []
    for name, backend in sorted(bits.backends().items()):
        backend.bit_gemm(packed_rows, wwords, n)  # warm-up
        t0 = time.perf_counter()
        for _ in range(iters):
            backend.bit_gemm(packed_rows, wwords, n)
        elapsed = time.perf_counter() - t0
        out.append(BackendTiming(backend=name,
                                 ns_per_binary_op=elapsed / (ops * iters) * 1e9))
    return out
