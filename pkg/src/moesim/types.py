"""Domain types shared by the cost model, schedulers, and engine.

Everything here is plain data with validation; no simulation logic.
"""

from dataclasses import dataclass, field
from enum import Enum


class ValidationError(ValueError):
    """A spec field violates one of its invariants; message names the field."""


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ValidationError(message)


@dataclass(frozen=True)
class ModelSpec:
    """Architecture parameters of one MoE decoder model.

    Byte and flop coefficients are config inputs at a fixed dtype width;
    they are not derived from hidden_dim (sample configs document the
    derivation used for each model as commentary).
    """

    name: str
    num_layers: int
    num_experts: int            # experts per MoE layer
    top_k: int                  # experts activated per token
    bytes_per_expert: int       # one expert's weights in one layer
    dense_bytes_per_layer: int  # attention projections + router + norms
    flops_per_token_per_expert: int
    attn_flops_per_token_per_ctx: int  # per (token, context-position) pair, all layers
    kv_bytes_per_token: int     # KV-cache bytes per token, all layers
    hidden_dim: int
    dtype_bytes: int = 2        # activation element width (bf16 default)

    def __post_init__(self):
        _require(self.num_layers >= 1, f"num_layers must be >= 1, got {self.num_layers}")
        _require(self.num_experts >= 1, f"num_experts must be >= 1, got {self.num_experts}")
        _require(
            1 <= self.top_k <= self.num_experts,
            f"top_k out of range: need 1 <= top_k <= num_experts, got top_k={self.top_k}, "
            f"num_experts={self.num_experts}",
        )
        for fname in (
            "bytes_per_expert",
            "dense_bytes_per_layer",
            "flops_per_token_per_expert",
            "attn_flops_per_token_per_ctx",
            "kv_bytes_per_token",
            "hidden_dim",
            "dtype_bytes",
        ):
            _require(getattr(self, fname) > 0, f"{fname} must be > 0, got {getattr(self, fname)}")


def validate_model(spec: ModelSpec) -> ModelSpec:
    """Return the spec unchanged iff every invariant holds.

    Construction already validates; this re-checks so specs built through
    other paths (e.g. dataclasses.replace) go through the same gate.
    """
    ModelSpec.__post_init__(spec)
    return spec


def total_expert_bytes(spec: ModelSpec) -> int:
    """Bytes of all expert weights across the whole model."""
    return spec.num_layers * spec.num_experts * spec.bytes_per_expert


@dataclass(frozen=True)
class HardwareSpec:
    """Single-accelerator performance and energy coefficients.

    iteration_overhead_s is host-side time per iteration (scheduling, launch,
    sampling) charged outside the kernel roofline; it sets the cadence floor
    that keeps desk-scale decode batches realistic.
    """

    name: str
    peak_flops: float          # ops/s at the configured dtype
    peak_hbm_bw: float         # bytes/s off-chip
    mfu: float = 0.6           # achievable fraction of peak compute
    mbu: float = 0.8           # achievable fraction of peak bandwidth
    static_power_w: float = 100.0
    energy_per_flop_j: float = 5e-13
    energy_per_hbm_byte_j: float = 5e-11
    kv_capacity_bytes: float = 40e9
    iteration_overhead_s: float = 0.0

    def __post_init__(self):
        for fname in (
            "peak_flops",
            "peak_hbm_bw",
            "mfu",
            "mbu",
            "static_power_w",
            "energy_per_flop_j",
            "energy_per_hbm_byte_j",
            "kv_capacity_bytes",
        ):
            _require(getattr(self, fname) > 0, f"{fname} must be > 0, got {getattr(self, fname)}")
        _require(self.mfu <= 1.0, f"mfu must be <= 1, got {self.mfu}")
        _require(self.mbu <= 1.0, f"mbu must be <= 1, got {self.mbu}")
        _require(
            self.iteration_overhead_s >= 0,
            f"iteration_overhead_s must be >= 0, got {self.iteration_overhead_s}",
        )


@dataclass(frozen=True)
class SloSpec:
    """Per-request latency targets."""

    ttft_slo_s: float
    tbt_slo_s: float

    def __post_init__(self):
        _require(self.ttft_slo_s > 0, f"ttft_slo_s must be > 0, got {self.ttft_slo_s}")
        _require(self.tbt_slo_s > 0, f"tbt_slo_s must be > 0, got {self.tbt_slo_s}")


class Policy(str, Enum):
    CHUNKED = "chunked"
    LAYERED = "layered"
    HYBRID = "hybrid"


@dataclass(frozen=True)
class SchedulerConfig:
    """Which prefill policy runs and its token-granularity knobs."""

    policy: Policy
    chunk_size: int = 512          # tokens per prefill chunk (chunked/hybrid)
    group_token_target: int = 512  # prefill tokens per layer group (layered/hybrid)

    def __post_init__(self):
        _require(self.chunk_size >= 1, f"chunk_size must be >= 1, got {self.chunk_size}")
        _require(
            self.group_token_target >= 1,
            f"group_token_target must be >= 1, got {self.group_token_target}",
        )


class Phase(Enum):
    QUEUED = "queued"
    PREFILLING = "prefilling"
    DECODING = "decoding"
    FINISHED = "finished"


@dataclass
class Request:
    """One serving request and its emission history.

    prefill_progress is policy-specific: tokens prefilled so far under the
    chunked policy, next layer-group index under the layered policy, chunks
    fully retired under the hybrid policy.
    """

    id: int
    arrival_s: float
    input_len: int
    output_len: int
    phase: Phase = Phase.QUEUED
    prefill_progress: int = 0
    first_token_s: float | None = None
    token_emit_times_s: list[float] = field(default_factory=list)
    completion_s: float | None = None

    def __post_init__(self):
        _require(self.input_len >= 1, f"input_len must be >= 1, got {self.input_len}")
        _require(self.output_len >= 1, f"output_len must be >= 1, got {self.output_len}")
        _require(self.arrival_s >= 0, f"arrival_s must be >= 0, got {self.arrival_s}")

    @property
    def tokens_emitted(self) -> int:
        return (1 if self.first_token_s is not None else 0) + len(self.token_emit_times_s)

    @property
    def emit_times(self) -> list[float]:
        """All emission timestamps, first token included."""
        if self.first_token_s is None:
            return []
        return [self.first_token_s, *self.token_emit_times_s]
