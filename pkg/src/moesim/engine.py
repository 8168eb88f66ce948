"""Discrete-event loop: applies scheduler plans, charges roofline costs,
tracks KV memory, and records per-token timestamps.

Time advances only at iteration boundaries; arrivals landing inside an
iteration are admitted at its end. The iteration that completes a request's
prefill also emits its first token (the final prefill pass produces the
first output logits); each later decode iteration emits exactly one token.
"""

from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .costmodel import (
    EnergyBreakdown,
    KernelCost,
    attention_cost,
    dense_cost,
    iteration_energy,
    iteration_runtime,
    moe_cost,
)
from .coverage import CoverageModel
from .scheduler import BatchPlan, Cohort, apply_plan, plan_for
from .types import (
    HardwareSpec,
    ModelSpec,
    Phase,
    Request,
    SchedulerConfig,
    ValidationError,
)
from .workload import WorkloadConfig, generate_requests


class SimulationHorizonError(RuntimeError):
    """The simulated clock passed max_sim_s before all requests completed."""


@dataclass
class IterationRecord:
    """Per-iteration ledger feeding every metric."""

    index: int
    start_s: float
    runtime_s: float
    energy_j: float
    energy_static_j: float
    energy_compute_j: float
    energy_memory_j: float
    expert_load_bytes: float
    total_hbm_bytes: float
    decode_batch_size: int
    prefill_tokens: int
    designated_group: int | None


@dataclass
class SimState:
    """Mutable simulation state; owned by one run, never shared."""

    model: ModelSpec
    hw: HardwareSpec
    clock_s: float = 0.0
    pending: deque = field(default_factory=deque)  # not yet arrived, by arrival time
    waiting: list = field(default_factory=list)    # arrived, prefill not started (FCFS)
    prefilling: list = field(default_factory=list)
    decoding: list = field(default_factory=list)
    finished: list = field(default_factory=list)
    cohort: Cohort | None = None
    kv_used_cells: int = 0       # (token, layer) KV cells written
    kv_reserved_bytes: int = 0
    total_decode_tokens: int = 0
    total_decode_ctx_tokens: int = 0
    rng: np.random.Generator = field(default_factory=np.random.default_rng)
    _by_id: dict = field(default_factory=dict)

    def request(self, rid: int) -> Request:
        return self._by_id[rid]

    def kv_used_bytes(self) -> float:
        return self.kv_used_cells * self.model.kv_bytes_per_token / self.model.num_layers

    def kv_headroom_bytes(self) -> float:
        return self.hw.kv_capacity_bytes - self.kv_reserved_bytes

    def activate_prefill(self, r: Request) -> None:
        self.waiting.remove(r)
        r.phase = Phase.PREFILLING
        self.prefilling.append(r)
        self.kv_reserved_bytes += r.input_len * self.model.kv_bytes_per_token


@dataclass
class RunResult:
    """Everything a run produces; energy components sum bit-exactly to the total."""

    records: list[IterationRecord]
    requests: list[Request]
    makespan_s: float
    energy_static_j: float
    energy_compute_j: float
    energy_memory_j: float
    total_decode_tokens: int
    total_decode_ctx_tokens: int

    @property
    def energy_total_j(self) -> float:
        return self.energy_static_j + self.energy_compute_j + self.energy_memory_j


def _fresh_copies(requests: list[Request]) -> list[Request]:
    return [
        Request(id=r.id, arrival_s=r.arrival_s, input_len=r.input_len, output_len=r.output_len)
        for r in requests
    ]


def _iteration_kernels(
    state: SimState, plan: BatchPlan, coverage_model: CoverageModel
) -> tuple[list[KernelCost], int]:
    """Assemble this iteration's kernel costs; returns (kernels, decode_ctx_tokens).

    Coverage is evaluated once per layer scope over every token routed
    through that scope: decode tokens traverse all layers, prefill tokens
    only their assigned layer range.
    """
    model = state.model
    decode_batch = len(plan.decode_ids)
    decode_ctx = 0
    for rid in plan.decode_ids:
        r = state.request(rid)
        decode_ctx += r.input_len + r.tokens_emitted

    # prefill tokens per distinct layer range, in ascending layer order
    scopes: dict[tuple[int, int], int] = {}
    for a in plan.prefill_assignments:
        key = (a.layer_start, a.layer_end)
        scopes[key] = scopes.get(key, 0) + a.num_tokens

    kernels: list[KernelCost] = []
    covered = 0
    for (ls, le), pf_tokens in sorted(scopes.items()):
        covered += le - ls
        routed = decode_batch + pf_tokens
        cov = coverage_model.coverage(routed, state.rng)
        kernels.append(moe_cost(model, routed, cov, le - ls))
        kernels.append(dense_cost(model, routed, le - ls))
    rest = model.num_layers - covered
    if rest > 0 and decode_batch > 0:
        cov = coverage_model.coverage(decode_batch, state.rng)
        kernels.append(moe_cost(model, decode_batch, cov, rest))
        kernels.append(dense_cost(model, decode_batch, rest))

    for a in plan.prefill_assignments:
        kernels.append(
            attention_cost(
                model,
                new_tokens=a.num_tokens,
                context_len=a.token_start,
                decode_batch_kv_tokens=0,
                layers_in_scope=a.num_layers,
            )
        )
    if decode_batch > 0:
        kernels.append(
            attention_cost(
                model,
                new_tokens=0,
                context_len=0,
                decode_batch_kv_tokens=decode_ctx,
                decode_new_tokens=decode_batch,
            )
        )
    return kernels, decode_ctx


def step(
    state: SimState,
    plan: BatchPlan,
    scheduler_cfg: SchedulerConfig,
    coverage_model: CoverageModel,
    index: int,
) -> IterationRecord:
    """Apply one planned iteration: charge costs, advance time, emit tokens."""
    expected = tuple(sorted(r.id for r in state.decoding))
    if plan.decode_ids != expected:
        raise AssertionError(
            f"plan/state mismatch: decode_ids {plan.decode_ids} != decoding {expected}"
        )

    kernels, decode_ctx = _iteration_kernels(state, plan, coverage_model)
    runtime = iteration_runtime(kernels, state.hw) + state.hw.iteration_overhead_s
    if runtime <= 0.0:
        raise AssertionError("planned iteration has no work")
    energy: EnergyBreakdown = iteration_energy(kernels, runtime, state.hw)

    start = state.clock_s
    state.clock_s = start + runtime
    now = state.clock_s

    # prefill bookkeeping (cursor advance, completions)
    completed_prefill = apply_plan(state, plan, scheduler_cfg)

    # KV written by prefill work this iteration, in (token, layer) cells
    for a in plan.prefill_assignments:
        state.kv_used_cells += a.num_tokens * a.num_layers

    # decode emissions: one token per decoding request, stamped at iteration end
    for rid in plan.decode_ids:
        r = state.request(rid)
        r.token_emit_times_s.append(now)
        state.kv_used_cells += state.model.num_layers
        state.kv_reserved_bytes += state.model.kv_bytes_per_token
        if r.tokens_emitted == r.output_len:
            _finish(state, r, now, from_phase=state.decoding)
    state.total_decode_tokens += len(plan.decode_ids)
    state.total_decode_ctx_tokens += decode_ctx

    # prefill completions emit their first token at this iteration's end
    for rid in completed_prefill:
        r = state.request(rid)
        r.first_token_s = now
        state.kv_used_cells += state.model.num_layers
        state.kv_reserved_bytes += state.model.kv_bytes_per_token
        state.prefilling.remove(r)
        if r.tokens_emitted == r.output_len:
            r.phase = Phase.FINISHED
            _release_kv(state, r)
            r.completion_s = now
            state.finished.append(r)
        else:
            r.phase = Phase.DECODING
            state.decoding.append(r)

    if state.kv_used_bytes() > state.hw.kv_capacity_bytes:
        raise ValidationError(
            f"KV capacity exceeded at t={now:.3f}s: "
            f"{state.kv_used_bytes():.0f} > {state.hw.kv_capacity_bytes:.0f} bytes"
        )

    return IterationRecord(
        index=index,
        start_s=start,
        runtime_s=runtime,
        energy_j=energy.total_j,
        energy_static_j=energy.static_j,
        energy_compute_j=energy.compute_j,
        energy_memory_j=energy.memory_j,
        expert_load_bytes=sum(k.expert_weight_bytes for k in kernels),
        total_hbm_bytes=sum(k.hbm_bytes for k in kernels),
        decode_batch_size=len(plan.decode_ids),
        prefill_tokens=plan.prefill_tokens,
        designated_group=plan.designated_group,
    )


def _release_kv(state: SimState, r: Request) -> None:
    state.kv_used_cells -= (r.input_len + r.tokens_emitted) * state.model.num_layers
    state.kv_reserved_bytes -= (r.input_len + r.tokens_emitted) * state.model.kv_bytes_per_token


def _finish(state: SimState, r: Request, now: float, from_phase: list) -> None:
    r.phase = Phase.FINISHED
    r.completion_s = now
    from_phase.remove(r)
    _release_kv(state, r)
    state.finished.append(r)


def run(
    model: ModelSpec,
    hw: HardwareSpec,
    scheduler_cfg: SchedulerConfig,
    workload: WorkloadConfig | list[Request],
    coverage_model: CoverageModel,
    slo=None,
    seed: int | None = None,
    max_sim_s: float = 86_400.0,
) -> RunResult:
    """Simulate every request to completion; deterministic for fixed seeds.

    `workload` is either a WorkloadConfig (requests are generated) or an
    explicit request list (a fixed trace). The slo parameter is accepted for
    interface completeness; attainment is computed by the metrics module.
    """
    if isinstance(workload, WorkloadConfig):
        requests = generate_requests(workload)
        if seed is None:
            seed = workload.seed
    else:
        requests = _fresh_copies(workload)
        if seed is None:
            seed = 0

    for r in requests:
        need = r.input_len * model.kv_bytes_per_token
        if need > hw.kv_capacity_bytes:
            raise ValidationError(
                f"request {r.id}: prompt KV ({need} bytes) exceeds kv_capacity_bytes "
                f"({hw.kv_capacity_bytes:.0f}); it could never be admitted"
            )

    state = SimState(
        model=model,
        hw=hw,
        pending=deque(sorted(requests, key=lambda r: (r.arrival_s, r.id))),
        rng=np.random.default_rng(seed + 0x5EED),
    )
    state._by_id = {r.id: r for r in requests}

    records: list[IterationRecord] = []
    compute_j = 0.0
    memory_j = 0.0

    while state.pending or state.waiting or state.prefilling or state.decoding:
        while state.pending and state.pending[0].arrival_s <= state.clock_s:
            state.waiting.append(state.pending.popleft())
        if not (state.waiting or state.prefilling or state.decoding):
            state.clock_s = state.pending[0].arrival_s
            continue

        plan = plan_for(state, scheduler_cfg)
        if not plan.decode_ids and not plan.prefill_assignments:
            # nothing runnable right now (KV-blocked head with nothing decoding
            # cannot happen given the pre-scan above)
            raise AssertionError("scheduler produced an empty plan with work outstanding")

        record = step(state, plan, scheduler_cfg, coverage_model, index=len(records))
        records.append(record)
        compute_j += record.energy_compute_j
        memory_j += record.energy_memory_j

        if state.clock_s > max_sim_s:
            raise SimulationHorizonError(
                f"simulation exceeded max_sim_s={max_sim_s} with "
                f"{len(state.finished)}/{len(requests)} requests finished"
            )

    makespan = state.clock_s
    return RunResult(
        records=records,
        requests=sorted(state.finished, key=lambda r: r.id),
        makespan_s=makespan,
        energy_static_j=hw.static_power_w * makespan,
        energy_compute_j=compute_j,
        energy_memory_j=memory_j,
        total_decode_tokens=state.total_decode_tokens,
        total_decode_ctx_tokens=state.total_decode_ctx_tokens,
    )
