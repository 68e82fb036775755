"""Wall-clock benchmark harness: per-item timing with warmup, median
headline, and instrumented denoiser-call verification. The timed region
is single-threaded by construction (pure numpy on one thread)."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass

import numpy as np

from .diffusion import CallCountingDenoiser


class BenchError(RuntimeError):
    pass


@dataclass
class BenchResult:
    name: str
    median_sec: float
    mean_sec: float
    min_sec: float
    warmup: int
    runs: int
    items: int
    denoiser_calls_per_item: float
    flops: int = 0
    valid: bool = True


def benchmark(name, pipeline_fn, denoiser_proxy: CallCountingDenoiser, inputs,
              warmup: int = 2, runs: int = 5, flops: int = 0) -> BenchResult:
    """Times `pipeline_fn(x)` per input over `runs` passes after `warmup`.

    `denoiser_proxy` must be the exact wrapper the pipeline calls through,
    so per-item call counts are measured, not assumed.
    """
    if warmup < 2 or runs < 5:
        raise ValueError("need warmup >= 2 and runs >= 5")
    if len(inputs) == 0:
        raise ValueError("no inputs to benchmark")
    try:
        for _ in range(warmup):
            pipeline_fn(inputs[0])
        denoiser_proxy.calls = 0
        per_item = []
        for _ in range(runs):
            for x in inputs:
                t0 = time.perf_counter()
                pipeline_fn(x)
                per_item.append(time.perf_counter() - t0)
    except Exception as exc:
        raise BenchError(f"pipeline {name!r} failed mid-bench; results invalid: {exc}") from exc
    calls = denoiser_proxy.calls / (runs * len(inputs))
    times = np.asarray(per_item)
    return BenchResult(
        name=name,
        median_sec=float(np.median(times)),
        mean_sec=float(times.mean()),
        min_sec=float(times.min()),
        warmup=warmup,
        runs=runs,
        items=len(inputs),
        denoiser_calls_per_item=calls,
        flops=flops,
    )


def speedup(baseline: BenchResult, candidate: BenchResult) -> float:
    return baseline.median_sec / candidate.median_sec


def write_bench_csv(results, path):
    fields = ["name", "median_sec", "mean_sec", "min_sec", "warmup", "runs",
              "items", "denoiser_calls_per_item", "flops"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(fields)
        for r in results:
            writer.writerow([getattr(r, f) for f in fields])
