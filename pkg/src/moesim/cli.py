"""Operator entry point: run single experiments, sweep parameters, and run
the coverage / chunk-size microbenchmarks. All commands are deterministic
for a given config and seed.
"""

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_run_config
from .coverage import (
    EmpiricalTable,
    UniformAnalytic,
    expected_coverage_uniform,
    sample_activation,
)
from .engine import RunResult, SimulationHorizonError, run
from .metrics import RunSummary, summarize
from .costmodel import attention_cost, dense_cost, kernel_runtime, moe_cost
from .types import Policy, ValidationError
from .workload import WorkloadConfig

log = logging.getLogger("moesim")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_HORIZON = 3

EVENT_HEADER = (
    "index,start_s,runtime_s,energy_j,energy_static_j,energy_compute_j,"
    "energy_memory_j,expert_load_bytes,total_hbm_bytes,decode_batch_size,"
    "prefill_tokens,designated_group"
)


def _setup_logging() -> None:
    level = os.environ.get("MOESIM_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(message)s")


def _write(path: str | None, text: str) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    p = Path(path)
    if p.parent != Path(""):
        p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text(text, encoding="utf-8")


def summary_json(summary: RunSummary) -> str:
    return json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n"


def events_csv(result: RunResult) -> str:
    lines = [EVENT_HEADER]
    for rec in result.records:
        designated = "" if rec.designated_group is None else str(rec.designated_group)
        lines.append(
            f"{rec.index},{rec.start_s!r},{rec.runtime_s!r},{rec.energy_j!r},"
            f"{rec.energy_static_j!r},{rec.energy_compute_j!r},{rec.energy_memory_j!r},"
            f"{rec.expert_load_bytes!r},{rec.total_hbm_bytes!r},{rec.decode_batch_size},"
            f"{rec.prefill_tokens},{designated}"
        )
    return "\n".join(lines) + "\n"


def _one_liner(summary: RunSummary) -> str:
    return (
        f"{summary.num_requests} requests in {summary.makespan_s:.1f} s | "
        f"ttft mean/p99 {summary.ttft_mean_s:.3f}/{summary.ttft_p99_s:.3f} s | "
        f"tbt mean/p99 {summary.tbt_mean_s * 1e3:.1f}/{summary.tbt_p99_s * 1e3:.1f} ms | "
        f"slo {summary.slo_attainment_fraction:.1%} | "
        f"{summary.energy_per_token_j * 1e3:.2f} mJ/tok | "
        f"expert load {summary.total_expert_load_bytes / 1e12:.3f} TB"
    )


def execute_run(cfg: RunConfig, max_sim_s: float) -> tuple[RunResult, RunSummary]:
    result = run(
        cfg.model,
        cfg.hardware,
        cfg.scheduler,
        cfg.workload,
        cfg.coverage,
        slo=cfg.slo,
        seed=cfg.seed,
        max_sim_s=max_sim_s,
    )
    return result, summarize(result, cfg.slo)


def cmd_run(args) -> int:
    try:
        cfg = load_run_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg = _reseed(cfg, args.seed)
    try:
        result, summary = execute_run(cfg, args.max_sim_s)
    except SimulationHorizonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HORIZON
    except ValidationError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    summary_path = args.out if args.out is not None else cfg.summary_path
    _write(summary_path, summary_json(summary))
    if args.emit_events or cfg.events_path:
        events_path = args.emit_events or cfg.events_path
        _write(events_path, events_csv(result))
    print(_one_liner(summary))
    return EXIT_OK


def _reseed(cfg: RunConfig, seed: int) -> RunConfig:
    workload = cfg.workload
    if isinstance(workload, WorkloadConfig):
        workload = replace(workload, seed=seed)
    return replace(cfg, seed=seed, workload=workload)


SWEEP_KEYS = ("request_rate", "chunk_size", "group_token_target", "policy")


def _apply_sweep_value(cfg: RunConfig, key: str, raw: str) -> RunConfig:
    if key == "request_rate":
        if not isinstance(cfg.workload, WorkloadConfig):
            raise ConfigError("cannot vary request_rate over a fixed trace workload")
        return replace(cfg, workload=replace(cfg.workload, request_rate_rps=float(raw)))
    if key == "chunk_size":
        return replace(cfg, scheduler=replace(cfg.scheduler, chunk_size=int(raw)))
    if key == "group_token_target":
        return replace(cfg, scheduler=replace(cfg.scheduler, group_token_target=int(raw)))
    if key == "policy":
        return replace(cfg, scheduler=replace(cfg.scheduler, policy=Policy(raw.lower())))
    raise ConfigError(f"unknown sweep key '{key}' (expected one of {', '.join(SWEEP_KEYS)})")


def sweep_csv_header(key: str) -> str:
    return f"{key}," + ",".join(RunSummary.field_names())


def cmd_sweep(args) -> int:
    try:
        cfg = load_run_config(args.config)
        values = [v for v in args.values.split(",") if v != ""]
        if not values:
            raise ConfigError("sweep needs a non-empty --values list")
        if args.vary not in SWEEP_KEYS:
            raise ConfigError(
                f"unknown sweep key '{args.vary}' (expected one of {', '.join(SWEEP_KEYS)})"
            )
        settings = [_apply_sweep_value(cfg, args.vary, v) for v in values]
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    lines = [sweep_csv_header(args.vary)]
    try:
        for i, (value, setting) in enumerate(zip(values, settings)):
            setting = _reseed(setting, cfg.seed + i)
            _, summary = execute_run(setting, args.max_sim_s)
            lines.append(f"{value}," + summary.csv_row())
            log.info("sweep %s=%s done", args.vary, value)
    except SimulationHorizonError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_HORIZON
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_coverage(args) -> int:
    try:
        top_k, num_experts = args.top_k, args.num_experts
        if args.model is not None:
            from .config import _build_model, _read_document

            path = Path(args.model)
            doc = _read_document(path)
            model = _build_model(doc["model"] if "model" in doc else doc, path)
            top_k, num_experts = model.top_k, model.num_experts
        batch_sizes = [int(b) for b in args.batch_sizes.split(",") if b != ""]
        if not batch_sizes:
            raise ConfigError("coverage needs a non-empty --batch-sizes list")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    lines = ["batch_size,analytic_coverage,sampled_coverage"]
    rng = np.random.default_rng(args.seed)
    for b in batch_sizes:
        analytic = expected_coverage_uniform(b, top_k, num_experts)
        sampled = sample_activation(
            b, top_k, num_experts, args.skew, rng, trials=args.trials
        ).coverage_fraction
        lines.append(f"{b},{analytic!r},{sampled!r}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def chunk_bench_rows(model, hw, coverage_model, input_len: int, chunk_sizes: list[int]):
    """Prefill-only cost of one prompt per chunk size: expert bytes and
    per-kernel-class roofline runtimes summed over the chunks."""
    rows = []
    for chunk in chunk_sizes:
        moe_bytes = 0.0
        t_attn = t_moe = t_dense = 0.0
        start = 0
        n_chunks = 0
        while start < input_len:
            tokens = min(chunk, input_len - start)
            cov = coverage_model.coverage(tokens, None)
            k_moe = moe_cost(model, tokens, cov, model.num_layers)
            k_dense = dense_cost(model, tokens, model.num_layers)
            k_attn = attention_cost(model, tokens, start, 0)
            moe_bytes += k_moe.expert_weight_bytes
            t_moe += kernel_runtime(k_moe, hw)
            t_dense += kernel_runtime(k_dense, hw)
            t_attn += kernel_runtime(k_attn, hw)
            start += tokens
            n_chunks += 1
        rows.append(
            {
                "chunk_size": chunk,
                "num_chunks": n_chunks,
                "moe_expert_bytes": moe_bytes,
                "attention_runtime_s": t_attn,
                "moe_runtime_s": t_moe,
                "dense_runtime_s": t_dense,
                "total_runtime_s": t_attn + t_moe + t_dense,
            }
        )
    return rows


def cmd_chunk_bench(args) -> int:
    from .config import _build_hardware, _build_model, _read_document

    try:
        model_doc = _read_document(Path(args.model))
        model = _build_model(
            model_doc["model"] if "model" in model_doc else model_doc, Path(args.model)
        )
        hw_doc = _read_document(Path(args.hw))
        hw = _build_hardware(hw_doc["hardware"] if "hardware" in hw_doc else hw_doc, Path(args.hw))
        chunk_sizes = [int(c) for c in args.chunk_sizes.split(",") if c != ""]
        if not chunk_sizes:
            raise ConfigError("chunk-bench needs a non-empty --chunk-sizes list")
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    if args.coverage == "uniform":
        coverage_model = UniformAnalytic(top_k=model.top_k, num_experts=model.num_experts)
    else:
        coverage_model = EmpiricalTable()

    rows = chunk_bench_rows(model, hw, coverage_model, args.input_len, chunk_sizes)
    header = (
        "chunk_size,num_chunks,moe_expert_bytes,attention_runtime_s,"
        "moe_runtime_s,dense_runtime_s,total_runtime_s"
    )
    lines = [header]
    for row in rows:
        lines.append(
            f"{row['chunk_size']},{row['num_chunks']},{row['moe_expert_bytes']!r},"
            f"{row['attention_runtime_s']!r},{row['moe_runtime_s']!r},"
            f"{row['dense_runtime_s']!r},{row['total_runtime_s']!r}"
        )
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = load_run_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    n = (
        f"{cfg.workload.num_requests} requests"
        if isinstance(cfg.workload, WorkloadConfig) and cfg.workload.num_requests
        else "trace/duration workload"
    )
    print(
        f"ok: model={cfg.model.name} hw={cfg.hardware.name} "
        f"policy={cfg.scheduler.policy.value} {n} seed={cfg.seed}"
    )
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="moesim",
        description="Discrete-event simulator for co-located MoE LLM serving "
        "(chunked, layered, and hybrid prefill scheduling).",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one simulation from a config file")
    p_run.add_argument("config", help="TOML or JSON run config")
    p_run.add_argument("--out", default=None, help="summary JSON path (default: stdout)")
    p_run.add_argument("--emit-events", default=None, metavar="PATH", help="write per-iteration CSV")
    p_run.add_argument("--seed", type=int, default=None, help="override the config seed")
    p_run.add_argument("--max-sim-s", type=float, default=86_400.0, help="simulated-time guard")
    p_run.set_defaults(fn=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run one setting per value of a config key")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--vary", required=True, help=f"one of {', '.join(SWEEP_KEYS)}")
    p_sweep.add_argument("--values", required=True, help="comma-separated values, rows keep this order")
    p_sweep.add_argument("--out", default=None, help="sweep CSV path (default: stdout)")
    p_sweep.add_argument("--max-sim-s", type=float, default=86_400.0)
    p_sweep.set_defaults(fn=cmd_sweep)

    p_cov = sub.add_parser("coverage", help="expert-coverage table: analytic vs sampled")
    p_cov.add_argument("--model", default=None, help="model TOML (supplies top-k and expert count)")
    p_cov.add_argument("--top-k", type=int, default=8)
    p_cov.add_argument("--num-experts", type=int, default=128)
    p_cov.add_argument("--batch-sizes", required=True, help="comma-separated routed token counts")
    p_cov.add_argument("--skew", type=float, default=0.0, help="routing popularity skew exponent")
    p_cov.add_argument("--trials", type=int, default=10_000)
    p_cov.add_argument("--seed", type=int, default=0)
    p_cov.add_argument("--out", default=None)
    p_cov.set_defaults(fn=cmd_coverage)

    p_cb = sub.add_parser("chunk-bench", help="prefill cost vs chunk size for one prompt")
    p_cb.add_argument("--model", required=True, help="model TOML")
    p_cb.add_argument("--hw", required=True, help="hardware TOML")
    p_cb.add_argument("--input-len", type=int, default=8192)
    p_cb.add_argument("--chunk-sizes", required=True, help="comma-separated chunk sizes")
    p_cb.add_argument("--coverage", choices=("table", "uniform"), default="table")
    p_cb.add_argument("--out", default=None)
    p_cb.set_defaults(fn=cmd_chunk_bench)

    p_val = sub.add_parser("validate", help="parse and validate a run config")
    p_val.add_argument("config")
    p_val.set_defaults(fn=cmd_validate)

    return parser


def main(argv=None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
