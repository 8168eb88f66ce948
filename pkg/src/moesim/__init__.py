"""moesim: discrete-event simulator for co-located MoE LLM serving.

Compares chunked prefill, layered prefill, and their hybrid on expert-load
traffic, TTFT/TBT latency, SLO attainment, and energy per token.
"""

from .coverage import (
    DEFAULT_COVERAGE_TABLE,
    EmpiricalTable,
    Sampled,
    UniformAnalytic,
    coverage_from_table,
    expected_coverage_uniform,
    sample_activation,
    tokens_per_expert,
)
from .engine import IterationRecord, RunResult, SimulationHorizonError, run
from .metrics import RunSummary, summarize
from .scheduler import (
    BatchPlan,
    GroupPlan,
    compute_num_groups,
    partition_layers,
    plan_chunked,
    plan_hybrid,
    plan_layered,
)
from .types import (
    HardwareSpec,
    ModelSpec,
    Policy,
    Request,
    SchedulerConfig,
    SloSpec,
    total_expert_bytes,
    validate_model,
)
from .workload import WorkloadConfig, generate_arrivals, generate_requests, sample_lengths

__version__ = "0.1.0"

__all__ = [
    "BatchPlan",
    "DEFAULT_COVERAGE_TABLE",
    "EmpiricalTable",
    "GroupPlan",
    "HardwareSpec",
    "IterationRecord",
    "ModelSpec",
    "Policy",
    "Request",
    "RunResult",
    "RunSummary",
    "Sampled",
    "SchedulerConfig",
    "SimulationHorizonError",
    "SloSpec",
    "UniformAnalytic",
    "WorkloadConfig",
    "compute_num_groups",
    "coverage_from_table",
    "expected_coverage_uniform",
    "generate_arrivals",
    "generate_requests",
    "partition_layers",
    "plan_chunked",
    "plan_hybrid",
    "plan_layered",
    "run",
    "sample_activation",
    "sample_lengths",
    "summarize",
    "tokens_per_expert",
    "total_expert_bytes",
    "validate_model",
]
