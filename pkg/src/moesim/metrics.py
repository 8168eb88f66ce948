"""Aggregation of iteration and request records into headline serving statistics."""

import math
import warnings
from dataclasses import dataclass, fields

from .engine import IterationRecord, RunResult
from .types import Request, SloSpec, _require


def ttft(request: Request) -> float:
    """Arrival to first output token, queueing and prefill included."""
    _require(request.first_token_s is not None, f"request {request.id} has no first token yet")
    return request.first_token_s - request.arrival_s


def tbt_samples(request: Request) -> list[float]:
    """Gaps between consecutive output tokens; the first gap starts at the first token."""
    times = request.emit_times
    return [b - a for a, b in zip(times, times[1:])]


def percentile(samples: list[float], p: float) -> float:
    """Nearest-rank percentile: sorted[ceil(p/100 * n) - 1]."""
    _require(len(samples) > 0, "percentile of empty sample set")
    _require(0 < p <= 100, f"p must be in (0, 100], got {p}")
    ordered = sorted(samples)
    rank = math.ceil(p / 100.0 * len(ordered))
    return ordered[rank - 1]


def slo_attainment(requests: list[Request], slo: SloSpec) -> tuple[float, float, float]:
    """(overall, ttft-only, tbt-only) attainment fractions.

    A request attains the SLO iff its TTFT meets the TTFT target and every
    one of its TBT gaps meets the TBT target.
    """
    if not requests:
        warnings.warn("slo_attainment over an empty request set is vacuously 1.0", stacklevel=2)
        return 1.0, 1.0, 1.0
    n = len(requests)
    ttft_ok = tbt_ok = both_ok = 0
    for r in requests:
        t_ok = ttft(r) <= slo.ttft_slo_s
        gaps = tbt_samples(r)
        g_ok = all(g <= slo.tbt_slo_s for g in gaps)
        ttft_ok += t_ok
        tbt_ok += g_ok
        both_ok += t_ok and g_ok
    return both_ok / n, ttft_ok / n, tbt_ok / n


def energy_per_token(total_energy_j: float, requests: list[Request]) -> float:
    """Total energy over all prompt plus generated tokens."""
    tokens = sum(r.input_len + r.tokens_emitted for r in requests)
    _require(tokens > 0, "energy_per_token needs at least one token")
    return total_energy_j / tokens


def expert_load_total(records: list[IterationRecord]) -> float:
    """Total expert-weight bytes brought from off-chip memory."""
    return sum(rec.expert_load_bytes for rec in records)


def mean_decode_batch(records: list[IterationRecord]) -> float:
    """Iteration-count-weighted mean decode batch size."""
    if not records:
        return 0.0
    return sum(rec.decode_batch_size for rec in records) / len(records)


def token_timeline(
    requests: list[Request], bucket_s: float
) -> tuple[list[float], list[int]]:
    """Cumulative emitted tokens per time bucket: (bucket end times, counts)."""
    _require(bucket_s > 0, f"bucket_s must be > 0, got {bucket_s}")
    emits = sorted(t for r in requests for t in r.emit_times)
    if not emits:
        return [], []
    n_buckets = math.floor(emits[-1] / bucket_s) + 1
    ends = [bucket_s * (i + 1) for i in range(n_buckets)]
    counts = [0] * n_buckets
    for t in emits:
        counts[min(int(t / bucket_s), n_buckets - 1)] += 1
    cum = 0
    out = []
    for c in counts:
        cum += c
        out.append(cum)
    return ends, out


@dataclass(frozen=True)
class RunSummary:
    """Flat, stable output contract; serializes to one JSON object or CSV row."""

    ttft_mean_s: float
    ttft_p99_s: float
    tbt_mean_s: float
    tbt_p99_s: float
    slo_attainment_fraction: float
    ttft_attainment_fraction: float
    tbt_attainment_fraction: float
    total_expert_load_bytes: float
    energy_per_token_j: float
    mean_decode_batch: float
    e2e_latency_mean_s: float
    energy_total_j: float
    energy_static_j: float
    energy_compute_j: float
    energy_memory_j: float
    num_requests: int
    num_iterations: int
    makespan_s: float
    total_tokens: int

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> str:
        return ",".join(repr(getattr(self, name)) for name in self.field_names())


def summarize(result: RunResult, slo: SloSpec) -> RunSummary:
    """Collapse one run into its headline statistics."""
    reqs = result.requests
    ttfts = [ttft(r) for r in reqs]
    tbts = [g for r in reqs for g in tbt_samples(r)]
    overall, ttft_frac, tbt_frac = slo_attainment(reqs, slo)
    total_energy = result.energy_total_j
    return RunSummary(
        ttft_mean_s=sum(ttfts) / len(ttfts) if ttfts else 0.0,
        ttft_p99_s=percentile(ttfts, 99) if ttfts else 0.0,
        tbt_mean_s=sum(tbts) / len(tbts) if tbts else 0.0,
        tbt_p99_s=percentile(tbts, 99) if tbts else 0.0,
        slo_attainment_fraction=overall,
        ttft_attainment_fraction=ttft_frac,
        tbt_attainment_fraction=tbt_frac,
        total_expert_load_bytes=expert_load_total(result.records),
        energy_per_token_j=energy_per_token(total_energy, reqs) if reqs else 0.0,
        mean_decode_batch=mean_decode_batch(result.records),
        e2e_latency_mean_s=(
            sum(r.completion_s - r.arrival_s for r in reqs) / len(reqs) if reqs else 0.0
        ),
        energy_total_j=total_energy,
        energy_static_j=result.energy_static_j,
        energy_compute_j=result.energy_compute_j,
        energy_memory_j=result.energy_memory_j,
        num_requests=len(reqs),
        num_iterations=len(result.records),
        makespan_s=result.makespan_s,
        total_tokens=sum(r.input_len + r.tokens_emitted for r in reqs),
    )
