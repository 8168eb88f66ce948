"""Roofline cost and energy accounting for one iteration's kernels.

Runtime is the sum over kernels of max(compute time, memory time): kernels
run back to back with no overlap, matching per-kernel runtime profiles.
"""

from dataclasses import dataclass
from enum import Enum

from .types import HardwareSpec, ModelSpec, _require


class KernelKind(str, Enum):
    ATTENTION_PREFILL = "attention_prefill"
    ATTENTION_DECODE = "attention_decode"
    DENSE_PROJ = "dense_proj"
    MOE_FFN = "moe_ffn"
    OTHER = "other"


@dataclass(frozen=True)
class KernelCost:
    """Arithmetic and off-chip traffic of one kernel launch."""

    kind: KernelKind
    flops: float
    hbm_bytes: float
    expert_weight_bytes: float = 0.0  # portion of hbm_bytes that is MoE expert weights

    def __post_init__(self):
        _require(self.flops >= 0, f"flops must be >= 0, got {self.flops}")
        _require(self.hbm_bytes >= 0, f"hbm_bytes must be >= 0, got {self.hbm_bytes}")
        _require(
            0 <= self.expert_weight_bytes <= self.hbm_bytes or self.hbm_bytes == 0,
            "expert_weight_bytes must not exceed hbm_bytes",
        )


@dataclass(frozen=True)
class EnergyBreakdown:
    """Per-iteration energy, components summing bit-exactly to total."""

    static_j: float
    compute_j: float
    memory_j: float

    @property
    def total_j(self) -> float:
        return self.static_j + self.compute_j + self.memory_j


def ridge_point(hw: HardwareSpec) -> float:
    """Ops per byte at which execution shifts from memory- to compute-bound."""
    return hw.peak_flops / hw.peak_hbm_bw


def moe_cost(
    model: ModelSpec,
    routed_tokens: int,
    coverage_fraction: float,
    layers_in_scope: int,
) -> KernelCost:
    """Expert FFN cost for `routed_tokens` through `layers_in_scope` MoE layers.

    Weight traffic scales with activated-expert coverage, not with tokens:
    that asymmetry is what makes small routed batches memory-bound.
    """
    _require(routed_tokens >= 0, f"routed_tokens must be >= 0, got {routed_tokens}")
    _require(
        0.0 <= coverage_fraction <= 1.0,
        f"coverage_fraction must be in [0,1], got {coverage_fraction}",
    )
    _require(
        1 <= layers_in_scope <= model.num_layers,
        f"layers_in_scope must be in [1, num_layers], got {layers_in_scope}",
    )
    expert_bytes = coverage_fraction * model.num_experts * model.bytes_per_expert * layers_in_scope
    activation_bytes = 2.0 * routed_tokens * model.hidden_dim * model.dtype_bytes * layers_in_scope
    flops = float(routed_tokens * model.top_k * model.flops_per_token_per_expert * layers_in_scope)
    return KernelCost(
        kind=KernelKind.MOE_FFN,
        flops=flops,
        hbm_bytes=expert_bytes + activation_bytes,
        expert_weight_bytes=expert_bytes,
    )


def attention_cost(
    model: ModelSpec,
    new_tokens: int,
    context_len: int,
    decode_batch_kv_tokens: int,
    decode_new_tokens: int = 0,
    layers_in_scope: int | None = None,
) -> KernelCost:
    """Attention cost: a prefill part (new tokens over a causal context) plus a
    decode part (one token per request over its full resident KV).

    Per-(token, context) flop and per-token KV-byte coefficients are all-layer
    aggregates; layers_in_scope scales them down for partial-layer passes.
    Projection weight traffic lives in dense_cost, not here.
    """
    _require(new_tokens >= 0, f"new_tokens must be >= 0, got {new_tokens}")
    _require(context_len >= 0, f"context_len must be >= 0, got {context_len}")
    _require(decode_batch_kv_tokens >= 0, "decode_batch_kv_tokens must be >= 0")
    _require(decode_new_tokens >= 0, "decode_new_tokens must be >= 0")
    layers = model.num_layers if layers_in_scope is None else layers_in_scope
    _require(1 <= layers <= model.num_layers, f"layers_in_scope out of range: {layers}")
    frac = layers / model.num_layers

    flops = 0.0
    bytes_ = 0.0
    kind = KernelKind.ATTENTION_DECODE
    if new_tokens > 0:
        kind = KernelKind.ATTENTION_PREFILL
        # causal pairs: each new token attends to context plus earlier new tokens
        pairs = new_tokens * (context_len + (new_tokens - 1) / 2.0 + 1.0)
        flops += model.attn_flops_per_token_per_ctx * pairs * frac
        bytes_ += (context_len + new_tokens) * model.kv_bytes_per_token * frac  # KV read
        bytes_ += new_tokens * model.kv_bytes_per_token * frac  # KV write
    if decode_batch_kv_tokens > 0 or decode_new_tokens > 0:
        flops += model.attn_flops_per_token_per_ctx * decode_batch_kv_tokens * frac
        bytes_ += decode_batch_kv_tokens * model.kv_bytes_per_token * frac
        bytes_ += decode_new_tokens * model.kv_bytes_per_token * frac  # KV write
    return KernelCost(kind=kind, flops=flops, hbm_bytes=bytes_)


def dense_cost(model: ModelSpec, tokens: int, layers_in_scope: int) -> KernelCost:
    """Non-expert per-layer work: projection/router weights load once per layer
    in scope regardless of tokens; flops and activation traffic scale with tokens.
    """
    _require(tokens >= 0, f"tokens must be >= 0, got {tokens}")
    _require(
        1 <= layers_in_scope <= model.num_layers,
        f"layers_in_scope must be in [1, num_layers], got {layers_in_scope}",
    )
    dense_params_per_layer = model.dense_bytes_per_layer / model.dtype_bytes
    flops = 2.0 * dense_params_per_layer * tokens * layers_in_scope
    weight_bytes = float(model.dense_bytes_per_layer * layers_in_scope)
    activation_bytes = 2.0 * tokens * model.hidden_dim * model.dtype_bytes * layers_in_scope
    return KernelCost(
        kind=KernelKind.DENSE_PROJ,
        flops=flops,
        hbm_bytes=weight_bytes + activation_bytes,
    )


def kernel_runtime(kernel: KernelCost, hw: HardwareSpec) -> float:
    """Roofline time of one kernel: max of compute and memory time."""
    compute = kernel.flops / (hw.peak_flops * hw.mfu)
    memory = kernel.hbm_bytes / (hw.peak_hbm_bw * hw.mbu)
    return max(compute, memory)


def iteration_runtime(kernels: list[KernelCost], hw: HardwareSpec) -> float:
    """Sum of per-kernel roofline times (no inter-kernel overlap)."""
    return sum(kernel_runtime(k, hw) for k in kernels)


def iteration_energy(
    kernels: list[KernelCost], runtime_s: float, hw: HardwareSpec
) -> EnergyBreakdown:
    """Static baseline over the iteration plus per-flop and per-byte dynamic terms."""
    _require(runtime_s >= 0, f"runtime_s must be >= 0, got {runtime_s}")
    compute = sum(k.flops for k in kernels) * hw.energy_per_flop_j
    memory = sum(k.hbm_bytes for k in kernels) * hw.energy_per_hbm_byte_j
    return EnergyBreakdown(
        static_j=hw.static_power_w * runtime_s,
        compute_j=compute,
        memory_j=memory,
    )
