import numpy as np
import pytest

from moesim.coverage import (
    DEFAULT_COVERAGE_TABLE,
    ActivationResult,
    EmpiricalTable,
    Sampled,
    UniformAnalytic,
    calibrate_skew,
    coverage_from_table,
    expected_coverage_uniform,
    load_table_csv,
    sample_activation,
    tokens_per_expert,
)
from moesim.types import ValidationError

# closed form for B=8, k=8, E=128 via exact integer arithmetic: 1 - (15/16)^8
COV_B8 = 1.0 - 2562890625 / 4294967296


class TestUniformClosedForm:
    def test_single_token_is_exactly_k_over_e(self):
        assert expected_coverage_uniform(1, 8, 128) == 0.0625

    def test_batch_eight(self):
        assert expected_coverage_uniform(8, 8, 128) == pytest.approx(COV_B8, abs=1e-15)
        assert round(expected_coverage_uniform(8, 8, 128), 4) == 0.4033

    def test_zero_batch_is_zero(self):
        assert expected_coverage_uniform(0, 8, 128) == 0.0

    def test_large_batch_approaches_one(self):
        assert expected_coverage_uniform(4096, 8, 128) >= 0.99

    def test_rejects_bad_top_k(self):
        with pytest.raises(ValidationError):
            expected_coverage_uniform(4, 0, 128)

    def test_monotonicity_and_union_bound(self):
        rng = np.random.default_rng(12)
        for _ in range(300):
            num_experts = int(rng.integers(2, 512))
            k = int(rng.integers(1, num_experts + 1))
            b = int(rng.integers(0, 2000))
            cov = expected_coverage_uniform(b, k, num_experts)
            assert 0.0 <= cov <= 1.0
            assert cov <= min(1.0, b * k / num_experts) + 1e-12
            assert cov <= expected_coverage_uniform(b + 1, k, num_experts) + 1e-15
            if k < num_experts:
                assert cov <= expected_coverage_uniform(b, k + 1, num_experts) + 1e-15
            assert cov >= expected_coverage_uniform(b, k, num_experts + 1) - 1e-15


class TestTable:
    @pytest.mark.parametrize("batch,expected", list(DEFAULT_COVERAGE_TABLE))
    def test_tabulated_points_exact(self, batch, expected):
        assert coverage_from_table(batch, DEFAULT_COVERAGE_TABLE) == expected

    def test_log_linear_interpolation(self):
        # halfway between 8 and 16 on the log axis: B=12 sits at ln(1.5)/ln(2)
        t = np.log(12 / 8) / np.log(2)
        expected = 0.290 + (0.445 - 0.290) * t
        assert coverage_from_table(12, DEFAULT_COVERAGE_TABLE) == pytest.approx(expected, abs=1e-12)

    def test_clamped_above(self):
        assert coverage_from_table(4096, DEFAULT_COVERAGE_TABLE) == 0.98

    def test_zero_tokens_zero_coverage(self):
        assert coverage_from_table(0, DEFAULT_COVERAGE_TABLE) == 0.0

    def test_invalid_table_rejected(self):
        with pytest.raises(ValidationError):
            coverage_from_table(4, ((4, 0.5), (2, 0.7)))

    def test_csv_round_trip(self, tmp_path):
        path = tmp_path / "cov.csv"
        path.write_text(
            "batch_size,coverage_fraction\n"
            + "\n".join(f"{b},{c}" for b, c in DEFAULT_COVERAGE_TABLE)
            + "\n"
        )
        assert load_table_csv(path) == DEFAULT_COVERAGE_TABLE


class TestTokensPerExpert:
    def test_moderate_batch(self):
        assert tokens_per_expert(2048, 8, 128) == 128

    def test_large_chunk(self):
        assert tokens_per_expert(8192, 8, 128) == 512

    def test_zero(self):
        assert tokens_per_expert(0, 8, 128) == 0


class TestSampler:
    def test_single_token_coverage_every_draw(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            res = sample_activation(1, 8, 128, 0.0, rng, trials=1)
            assert res.coverage_fraction == 8 / 128
            assert res.experts_activated == 8
            assert res.tokens_per_active_expert == 1.0

    def test_zero_batch(self):
        res = sample_activation(0, 8, 128, 0.0, np.random.default_rng(0), trials=5)
        assert res == ActivationResult(0.0, 0.0, 0.0)

    def test_uniform_mean_converges_to_closed_form(self):
        res = sample_activation(8, 8, 128, 0.0, np.random.default_rng(42), trials=100_000)
        # per-trial coverage std ~0.024 -> 3 sigma over 1e5 trials ~2.3e-4
        assert abs(res.coverage_fraction - COV_B8) < 5e-4

    def test_deterministic_given_seed(self):
        a = sample_activation(16, 8, 128, 0.7, np.random.default_rng(5), trials=200)
        b = sample_activation(16, 8, 128, 0.7, np.random.default_rng(5), trials=200)
        assert a == b

    def test_calibrated_skew_reproduces_measured_batch8_point(self):
        skew = calibrate_skew(8, 8, 128, target_coverage=0.29, seed=11, trials=20_000)
        res = sample_activation(8, 8, 128, skew, np.random.default_rng(77), trials=20_000)
        assert abs(res.coverage_fraction - 0.29) < 0.01


class TestModelObjects:
    def test_uniform_analytic_model(self):
        m = UniformAnalytic(top_k=8, num_experts=128)
        assert m.coverage(1) == 0.0625

    def test_empirical_table_default(self):
        m = EmpiricalTable()
        assert m.coverage(128) == 0.863

    def test_sampled_model_requires_rng(self):
        m = Sampled(top_k=8, num_experts=128)
        with pytest.raises(ValidationError):
            m.coverage(4, None)
        assert 0.0 < m.coverage(4, np.random.default_rng(3)) <= 1.0
