import dataclasses

import numpy as np
import pytest

from moesim.types import (
    HardwareSpec,
    ModelSpec,
    Request,
    SchedulerConfig,
    Policy,
    SloSpec,
    ValidationError,
    total_expert_bytes,
    validate_model,
)


def qwen_like(**overrides) -> ModelSpec:
    base = dict(
        name="qwen30b-a3b",
        num_layers=48,
        num_experts=128,
        top_k=8,
        bytes_per_expert=9_300_000,
        dense_bytes_per_layer=38_273_024,
        flops_per_token_per_expert=9_437_184,
        attn_flops_per_token_per_ctx=786_432,
        kv_bytes_per_token=49_152,
        hidden_dim=2048,
    )
    base.update(overrides)
    return ModelSpec(**base)


class TestValidateModel:
    def test_qwen_like_spec_is_valid(self):
        spec = qwen_like()
        assert validate_model(spec) is spec

    def test_top_k_zero_rejected(self):
        with pytest.raises(ValidationError, match="top_k"):
            qwen_like(top_k=0)

    def test_top_k_above_expert_count_rejected(self):
        with pytest.raises(ValidationError, match="top_k"):
            qwen_like(top_k=129, num_experts=128)

    @pytest.mark.parametrize(
        "field",
        [
            "bytes_per_expert",
            "dense_bytes_per_layer",
            "flops_per_token_per_expert",
            "attn_flops_per_token_per_ctx",
            "kv_bytes_per_token",
            "hidden_dim",
        ],
    )
    def test_nonpositive_byte_flop_fields_rejected(self, field):
        with pytest.raises(ValidationError, match=field):
            qwen_like(**{field: 0})

    def test_zero_layers_rejected(self):
        with pytest.raises(ValidationError, match="num_layers"):
            qwen_like(num_layers=0)

    def test_randomized_specs_accept_iff_invariants_hold(self):
        # property: validation rejects exactly the invariant violations
        rng = np.random.default_rng(7)
        for _ in range(300):
            num_experts = int(rng.integers(1, 300))
            top_k = int(rng.integers(-2, num_experts + 3))
            num_layers = int(rng.integers(-1, 100))
            bpe = int(rng.integers(-1, 10)) or -1
            ok = (
                1 <= top_k <= num_experts
                and num_layers >= 1
                and bpe > 0
            )
            try:
                qwen_like(
                    num_experts=num_experts,
                    top_k=top_k,
                    num_layers=num_layers,
                    bytes_per_expert=bpe,
                )
                assert ok, (num_experts, top_k, num_layers, bpe)
            except ValidationError:
                assert not ok, (num_experts, top_k, num_layers, bpe)


class TestTotalExpertBytes:
    def test_qwen_like_total_near_full_model_pass(self):
        total = total_expert_bytes(qwen_like())
        assert total == 48 * 128 * 9_300_000
        # consistency window: ~18 chunk passes over a long prompt imply
        # a 53-58 GB full-model expert footprint
        assert 53e9 <= total <= 58e9

    def test_unit_case(self):
        spec = qwen_like(
            num_layers=1, num_experts=1, top_k=1, bytes_per_expert=1
        )
        assert total_expert_bytes(spec) == 1

    def test_small_product(self):
        spec = qwen_like(num_layers=2, num_experts=2, top_k=1, bytes_per_expert=10)
        assert total_expert_bytes(spec) == 40

    def test_linear_in_each_factor(self):
        base = qwen_like()
        t = total_expert_bytes(base)
        assert total_expert_bytes(dataclasses.replace(base, num_layers=96)) == 2 * t
        assert total_expert_bytes(dataclasses.replace(base, num_experts=256)) == 2 * t
        assert total_expert_bytes(dataclasses.replace(base, bytes_per_expert=18_600_000)) == 2 * t


class TestOtherSpecs:
    def test_hardware_rejects_mfu_above_one(self):
        with pytest.raises(ValidationError, match="mfu"):
            HardwareSpec(name="x", peak_flops=1e12, peak_hbm_bw=1e12, mfu=1.5)

    def test_slo_rejects_nonpositive(self):
        with pytest.raises(ValidationError):
            SloSpec(ttft_slo_s=0.0, tbt_slo_s=0.1)

    def test_scheduler_config_rejects_zero_chunk(self):
        with pytest.raises(ValidationError, match="chunk_size"):
            SchedulerConfig(policy=Policy.CHUNKED, chunk_size=0)

    def test_request_emit_bookkeeping(self):
        r = Request(id=1, arrival_s=0.0, input_len=10, output_len=3)
        assert r.tokens_emitted == 0 and r.emit_times == []
        r.first_token_s = 1.0
        r.token_emit_times_s.extend([1.5, 2.0])
        assert r.tokens_emitted == 3
        assert r.emit_times == [1.0, 1.5, 2.0]
