"""Per-slot accuracy, confusion analysis, and single-thread latency benchmarks."""

from __future__ import annotations

import gc
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .gloss import render_gloss
from .model import ModelConfig, ModelParameters, forward, logits_to_frame, predict_batch
from .schema import SLOT_NAMES, SLOT_VALUES


class EmptyEvalSetError(ValueError):
    pass


@dataclass
class EvalReport:
    accuracy: dict[str, float]
    average: float
    confusion: dict[str, np.ndarray]  # per slot: [gold, predicted] counts
    n_samples: int

    def class_counts(self) -> dict[str, int]:
        return {slot: len(SLOT_VALUES[slot]) for slot in SLOT_NAMES}


def evaluate(params: ModelParameters, config: ModelConfig, tokenizer, val) -> EvalReport:
    """Accuracy and gold-by-predicted confusion over a validation sample list."""
    samples = list(val)
    if not samples:
        raise EmptyEvalSetError("validation set is empty")
    predictions = predict_batch(params, config, tokenizer, [s.text for s in samples])
    confusion = {
        slot: np.zeros((len(SLOT_VALUES[slot]), len(SLOT_VALUES[slot])), dtype=np.int64)
        for slot in SLOT_NAMES
    }
    for sample, predicted in zip(samples, predictions):
        gold_idx = sample.labels.to_indices()
        pred_idx = predicted.to_indices()
        for s, slot in enumerate(SLOT_NAMES):
            confusion[slot][gold_idx[s], pred_idx[s]] += 1
    accuracy = {
        slot: float(np.trace(confusion[slot]) / len(samples)) for slot in SLOT_NAMES
    }
    average = float(sum(accuracy.values()) / len(accuracy))
    return EvalReport(accuracy=accuracy, average=average, confusion=confusion, n_samples=len(samples))


def confusion_pairs(report: EvalReport, slot: str, k: int) -> list[tuple[str, str, int]]:
    """Top-k off-diagonal (gold, predicted, count) pairs, count-descending."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    matrix = report.confusion[slot]
    values = SLOT_VALUES[slot]
    pairs = [
        (values[g], values[p], int(matrix[g, p]))
        for g in range(len(values))
        for p in range(len(values))
        if g != p and matrix[g, p] > 0
    ]
    pairs.sort(key=lambda item: (-item[2], item[0], item[1]))
    return pairs[:k]


# -- latency ------------------------------------------------------------------


@dataclass
class BenchReport:
    runs: int
    mean_ms: float
    p50_ms: float
    p95_ms: float
    std_ms: float
    throughput: float
    forward_only: bool = False
    durations_ms: list[float] = field(repr=False, default_factory=list)


def nearest_rank(sorted_values: list[float], percentile: float) -> float:
    """Nearest-rank percentile: value at index ceil(p/100 * n) - 1."""
    n = len(sorted_values)
    rank = max(1, int(np.ceil(percentile / 100.0 * n)))
    return sorted_values[rank - 1]


def summarize_latencies(durations_ms, forward_only: bool = False) -> BenchReport:
    """Closed-form statistics over per-run durations (population std)."""
    durations = [float(d) for d in durations_ms]
    if len(durations) < 2:
        raise ValueError("need at least 2 timed runs")
    ordered = sorted(durations)
    mean = float(np.mean(durations))
    std = float(np.std(durations))  # population (divisor n)
    total_s = sum(durations) / 1000.0
    return BenchReport(
        runs=len(durations),
        mean_ms=mean,
        p50_ms=nearest_rank(ordered, 50.0),
        p95_ms=nearest_rank(ordered, 95.0),
        std_ms=std,
        throughput=len(durations) / total_s,
        forward_only=forward_only,
        durations_ms=durations,
    )


@contextmanager
def single_thread():
    """Pin BLAS pools to one thread for the duration of a benchmark."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover - threadpoolctl ships with sklearn
        yield
        return
    with threadpool_limits(limits=1):
        yield


def benchmark(
    params: ModelParameters,
    config: ModelConfig,
    tokenizer,
    text: str,
    runs: int = 100,
    warmup: int = 10,
    forward_only: bool = False,
) -> BenchReport:
    """Wall time of single inferences on one thread (monotonic clock).

    A timed run covers encode + forward + argmax + gloss conversion;
    forward_only restricts it to the model forward pass. Warmup iterations
    are excluded from the statistics.
    """
    if runs < 2:
        raise ValueError(f"need runs >= 2, got {runs}")
    enc = tokenizer.encode(text)
    width = int(enc.attention_mask.sum())
    fixed_ids = enc.ids[None, :width]
    fixed_mask = enc.attention_mask[None, :width]

    def run_forward_only() -> None:
        logits = forward(params, config, fixed_ids, fixed_mask)
        logits_to_frame([t.data[0] for t in logits])

    def run_end_to_end() -> None:
        e = tokenizer.encode(text)
        w = int(e.attention_mask.sum())
        logits = forward(params, config, e.ids[None, :w], e.attention_mask[None, :w])
        frame = logits_to_frame([t.data[0] for t in logits])
        render_gloss(frame)

    run_once = run_forward_only if forward_only else run_end_to_end
    durations: list[float] = []
    gc_was_enabled = gc.isenabled()
    gc.disable()
    try:
        with single_thread():
            for _ in range(warmup):
                run_once()
            for _ in range(runs):
                t0 = time.perf_counter()
                run_once()
                durations.append((time.perf_counter() - t0) * 1000.0)
    finally:
        if gc_was_enabled:
            gc.enable()
    return summarize_latencies(durations, forward_only=forward_only)


# -- report rendering ---------------------------------------------------------


def format_eval_text(report: EvalReport) -> str:
    lines = [
        "Slot        Classes   Accuracy (%)",
        "----------  -------  -------------",
    ]
    for slot in SLOT_NAMES:
        lines.append(
            f"{slot:<10}  {len(SLOT_VALUES[slot]):>7}  {report.accuracy[slot] * 100:>13.2f}"
        )
    lines.append("-" * len(lines[1]))
    total = sum(len(SLOT_VALUES[s]) for s in SLOT_NAMES)
    lines.append(f"{'average':<10}  {total:>7}  {report.average * 100:>13.2f}")
    return "\n".join(lines)


def format_bench_text(report: BenchReport) -> str:
    scope = "forward only" if report.forward_only else "encode+forward+argmax+gloss"
    lines = [
        f"Latency over {report.runs} runs ({scope}, single thread)",
        f"  Mean Latency        {report.mean_ms:8.3f} ms",
        f"  Median Latency (P50){report.p50_ms:8.3f} ms",
        f"  P95 Latency         {report.p95_ms:8.3f} ms",
        f"  Standard Deviation  {report.std_ms:8.3f} ms",
        f"  Throughput          {report.throughput:8.1f} inferences/sec",
    ]
    return "\n".join(lines)
