"""Run-config parsing: TOML (preferred) or JSON, with section-qualified errors."""

import json
import sys
from dataclasses import dataclass
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .coverage import (
    CoverageModel,
    EmpiricalTable,
    Sampled,
    UniformAnalytic,
    load_table_csv,
)
from .types import (
    HardwareSpec,
    ModelSpec,
    Policy,
    Request,
    SchedulerConfig,
    SloSpec,
    ValidationError,
)
from .workload import (
    EmpiricalLengths,
    FixedLengths,
    LengthDistribution,
    LogNormalLengths,
    WorkloadConfig,
    load_trace,
)


@dataclass(frozen=True)
class RunConfig:
    """Everything one simulation needs; seed is explicit, never implicit."""

    model: ModelSpec
    hardware: HardwareSpec
    workload: WorkloadConfig | list[Request]
    scheduler: SchedulerConfig
    coverage: CoverageModel
    slo: SloSpec
    seed: int
    summary_path: str | None = None
    events_path: str | None = None


class ConfigError(ValueError):
    """Config file problem; message carries the path and section."""


def _read_document(path: Path) -> dict:
    if not path.exists():
        raise ConfigError(f"{path}: no such config file")
    try:
        if path.suffix == ".json":
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        with open(path, "rb") as f:
            return tomllib.load(f)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: parse error: {exc}") from exc


def _section(doc: dict, name: str, path: Path, allow_ref: bool = False) -> dict | str:
    if name not in doc:
        raise ConfigError(f"{path}: missing required section [{name}]")
    sec = doc[name]
    if isinstance(sec, str) and allow_ref:
        return sec
    if not isinstance(sec, dict):
        raise ConfigError(f"{path}: section [{name}] must be a table")
    return sec


def _get(sec: dict, key: str, section_name: str, path: Path, default=...):
    if key not in sec:
        if default is not ...:
            return default
        raise ConfigError(f"{path}: [{section_name}] is missing key '{key}'")
    return sec[key]


def _resolve_ref(entry, section_name: str, path: Path) -> dict:
    """A section may be inline or a string path to a file holding that section."""
    if isinstance(entry, str):
        ref = Path(entry)
        if not ref.is_absolute():
            ref = path.parent / ref
        doc = _read_document(ref)
        return _section(doc, section_name, ref) if section_name in doc else doc
    if isinstance(entry, dict):
        return entry
    raise ConfigError(f"{path}: [{section_name}] must be a table or a file path string")


def _build_model(sec: dict, path: Path) -> ModelSpec:
    try:
        return ModelSpec(
            name=str(_get(sec, "name", "model", path, default="model")),
            num_layers=int(_get(sec, "num_layers", "model", path)),
            num_experts=int(_get(sec, "num_experts", "model", path)),
            top_k=int(_get(sec, "top_k", "model", path)),
            bytes_per_expert=int(_get(sec, "bytes_per_expert", "model", path)),
            dense_bytes_per_layer=int(_get(sec, "dense_bytes_per_layer", "model", path)),
            flops_per_token_per_expert=int(_get(sec, "flops_per_token_per_expert", "model", path)),
            attn_flops_per_token_per_ctx=int(
                _get(sec, "attn_flops_per_token_per_ctx", "model", path)
            ),
            kv_bytes_per_token=int(_get(sec, "kv_bytes_per_token", "model", path)),
            hidden_dim=int(_get(sec, "hidden_dim", "model", path)),
            dtype_bytes=int(_get(sec, "dtype_bytes", "model", path, default=2)),
        )
    except ValidationError as exc:
        raise ConfigError(f"{path}: [model] {exc}") from exc


def _build_hardware(sec: dict, path: Path) -> HardwareSpec:
    try:
        return HardwareSpec(
            name=str(_get(sec, "name", "hardware", path, default="hardware")),
            peak_flops=float(_get(sec, "peak_flops", "hardware", path)),
            peak_hbm_bw=float(_get(sec, "peak_hbm_bw", "hardware", path)),
            mfu=float(_get(sec, "mfu", "hardware", path, default=0.6)),
            mbu=float(_get(sec, "mbu", "hardware", path, default=0.8)),
            static_power_w=float(_get(sec, "static_power_w", "hardware", path, default=100.0)),
            energy_per_flop_j=float(_get(sec, "energy_per_flop_j", "hardware", path, default=5e-13)),
            energy_per_hbm_byte_j=float(
                _get(sec, "energy_per_hbm_byte_j", "hardware", path, default=5e-11)
            ),
            kv_capacity_bytes=float(_get(sec, "kv_capacity_bytes", "hardware", path, default=40e9)),
            iteration_overhead_s=float(
                _get(sec, "iteration_overhead_s", "hardware", path, default=0.0)
            ),
        )
    except ValidationError as exc:
        raise ConfigError(f"{path}: [hardware] {exc}") from exc


def _build_lengths(sec: dict, path: Path) -> LengthDistribution:
    kind = str(_get(sec, "kind", "workload.lengths", path)).lower()
    if kind == "fixed":
        return FixedLengths(
            input_len=int(_get(sec, "input", "workload.lengths", path)),
            output_len=int(_get(sec, "output", "workload.lengths", path)),
        )
    if kind == "lognormal":
        return LogNormalLengths(
            input_mean=float(_get(sec, "input_mean", "workload.lengths", path)),
            input_std=float(_get(sec, "input_std", "workload.lengths", path)),
            output_mean=float(_get(sec, "output_mean", "workload.lengths", path)),
            output_std=float(_get(sec, "output_std", "workload.lengths", path)),
        )
    if kind == "empirical":
        pairs = _get(sec, "pairs", "workload.lengths", path)
        return EmpiricalLengths(pairs=tuple((int(a), int(b)) for a, b in pairs))
    raise ConfigError(f"{path}: [workload.lengths] unknown kind '{kind}'")


def _build_workload(sec: dict, path: Path, seed: int) -> WorkloadConfig | list[Request]:
    if "trace" in sec:
        trace_path = Path(sec["trace"])
        if not trace_path.is_absolute():
            trace_path = path.parent / trace_path
        try:
            return load_trace(trace_path)
        except (OSError, ValidationError) as exc:
            raise ConfigError(f"{path}: [workload] trace: {exc}") from exc
    lengths = _get(sec, "lengths", "workload", path)
    if not isinstance(lengths, dict):
        raise ConfigError(f"{path}: [workload.lengths] must be a table")
    num_requests = sec.get("num_requests")
    duration_s = sec.get("duration_s")
    try:
        return WorkloadConfig(
            request_rate_rps=float(_get(sec, "request_rate_rps", "workload", path)),
            length_dist=_build_lengths(lengths, path),
            seed=seed,
            num_requests=int(num_requests) if num_requests is not None else None,
            duration_s=float(duration_s) if duration_s is not None else None,
        )
    except ValidationError as exc:
        raise ConfigError(f"{path}: [workload] {exc}") from exc


def _build_scheduler(sec: dict, path: Path) -> SchedulerConfig:
    policy_name = str(_get(sec, "policy", "scheduler", path)).lower()
    try:
        policy = Policy(policy_name)
    except ValueError as exc:
        raise ConfigError(
            f"{path}: [scheduler] unknown policy '{policy_name}' "
            f"(expected chunked, layered, or hybrid)"
        ) from exc
    try:
        return SchedulerConfig(
            policy=policy,
            chunk_size=int(_get(sec, "chunk_size", "scheduler", path, default=512)),
            group_token_target=int(_get(sec, "group_token_target", "scheduler", path, default=512)),
        )
    except ValidationError as exc:
        raise ConfigError(f"{path}: [scheduler] {exc}") from exc


def _build_coverage(sec: dict, path: Path, model: ModelSpec) -> CoverageModel:
    kind = str(_get(sec, "kind", "coverage", path, default="table")).lower()
    try:
        if kind == "table":
            if "table" in sec:
                table_path = Path(sec["table"])
                if not table_path.is_absolute():
                    table_path = path.parent / table_path
                return EmpiricalTable(table=load_table_csv(table_path))
            return EmpiricalTable()
        if kind == "uniform":
            return UniformAnalytic(top_k=model.top_k, num_experts=model.num_experts)
        if kind == "sampled":
            return Sampled(
                top_k=model.top_k,
                num_experts=model.num_experts,
                skew_exponent=float(_get(sec, "skew", "coverage", path, default=0.0)),
                trials=int(_get(sec, "trials", "coverage", path, default=1)),
            )
    except (ValidationError, OSError) as exc:
        raise ConfigError(f"{path}: [coverage] {exc}") from exc
    raise ConfigError(f"{path}: [coverage] unknown kind '{kind}'")


def load_run_config(config_path) -> RunConfig:
    """Parse and validate one run config; raises ConfigError with the path on failure."""
    path = Path(config_path)
    doc = _read_document(path)

    if "seed" not in doc:
        raise ConfigError(f"{path}: missing top-level 'seed' (randomness must be explicit)")
    seed = int(doc["seed"])

    model = _build_model(
        _resolve_ref(_section(doc, "model", path, allow_ref=True), "model", path), path
    )
    hardware = _build_hardware(
        _resolve_ref(_section(doc, "hardware", path, allow_ref=True), "hardware", path), path
    )
    workload = _build_workload(_section(doc, "workload", path), path, seed)
    scheduler = _build_scheduler(_section(doc, "scheduler", path), path)
    coverage = _build_coverage(doc.get("coverage", {}), path, model)

    slo_sec = _section(doc, "slo", path)
    try:
        slo = SloSpec(
            ttft_slo_s=float(_get(slo_sec, "ttft_s", "slo", path)),
            tbt_slo_s=float(_get(slo_sec, "tbt_s", "slo", path)),
        )
    except ValidationError as exc:
        raise ConfigError(f"{path}: [slo] {exc}") from exc

    out = doc.get("output", {})
    return RunConfig(
        model=model,
        hardware=hardware,
        workload=workload,
        scheduler=scheduler,
        coverage=coverage,
        slo=slo,
        seed=seed,
        summary_path=out.get("summary"),
        events_path=out.get("events"),
    )
