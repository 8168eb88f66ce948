"""Backend parity and statistical correctness of the activation-sampling kernels.

The numba and numpy paths must be bit-identical for the same pre-drawn
uniforms; that is what makes MOESIM_KERNELS a speed knob rather than a
behavior knob.
"""

import numpy as np
import pytest

from moesim import kernels
from moesim.coverage import rank_power_weights


BACKENDS_AVAILABLE = kernels._HAS_NUMBA


def _mc_union_mean_independent(batch, k, num_experts, trials, seed):
    """Independent oracle: argpartition top-k subsets, unique count per trial."""
    rng = np.random.default_rng(seed)
    total = 0
    done = 0
    while done < trials:
        n = min(trials - done, max(1, 200_000 // max(batch * num_experts, 1)))
        keys = rng.random((n, batch, num_experts))
        experts = np.argpartition(keys, k - 1, axis=2)[:, :, :k]
        for t in range(n):
            total += np.unique(experts[t]).size
        done += n
    return total / (trials * num_experts)


class TestBackendParity:
    @pytest.mark.skipif(not BACKENDS_AVAILABLE, reason="numba unavailable")
    @pytest.mark.parametrize("batch,k,num_experts", [(1, 8, 128), (8, 8, 128), (5, 4, 32), (16, 1, 7), (3, 7, 7)])
    def test_uniform_paths_bit_identical(self, batch, k, num_experts):
        u = np.random.default_rng(42).random((500, batch, k))
        a = kernels._uniform_union_counts_nb(u, batch, k, num_experts)
        b = kernels._uniform_union_counts_np(u, batch, k, num_experts)
        assert np.array_equal(a, b)

    @pytest.mark.skipif(not BACKENDS_AVAILABLE, reason="numba unavailable")
    @pytest.mark.parametrize("skew", [0.0, 0.3, 1.0, 2.5])
    def test_weighted_paths_bit_identical(self, skew):
        batch, k, num_experts = 8, 8, 128
        w = rank_power_weights(num_experts, skew)
        u = np.random.default_rng(9).random((400, batch, k))
        a = kernels._weighted_union_counts_nb(u, batch, k, num_experts, w)
        b = kernels._weighted_union_counts_np(u, batch, k, num_experts, w)
        assert np.array_equal(a, b)

    def test_batch_zero_is_zero(self):
        u = np.zeros((4, 0, 8))
        assert kernels.uniform_union_counts(u, 0, 8, 128).tolist() == [0, 0, 0, 0]

    def test_backend_selection_roundtrip(self):
        original = kernels.active_backend()
        try:
            kernels.use_backend("numpy")
            assert kernels.active_backend() == "numpy"
        finally:
            kernels.use_backend(original)

    def test_unknown_backend_rejected(self):
        with pytest.raises(ValueError):
            kernels.use_backend("gpu")


class TestStatistics:
    def test_single_token_activates_exactly_k(self):
        u = np.random.default_rng(1).random((2000, 1, 8))
        counts = kernels.uniform_union_counts(u, 1, 8, 128)
        assert np.all(counts == 8)

    def test_uniform_mean_matches_independent_oracle(self):
        batch, k, num_experts = 8, 8, 128
        u = np.random.default_rng(3).random((60_000, batch, k))
        counts = kernels.uniform_union_counts(u, batch, k, num_experts)
        sampled = counts.mean() / num_experts
        oracle = _mc_union_mean_independent(batch, k, num_experts, trials=60_000, seed=4)
        closed = 1.0 - (1.0 - k / num_experts) ** batch
        assert abs(sampled - closed) < 1.5e-3
        assert abs(oracle - closed) < 1.5e-3

    def test_weighted_skew_reduces_coverage(self):
        batch, k, num_experts = 8, 8, 128
        u = np.random.default_rng(5).random((5000, batch, k))
        flat = kernels.weighted_union_counts(
            u, batch, k, num_experts, rank_power_weights(num_experts, 0.0)
        )
        skewed = kernels.weighted_union_counts(
            u, batch, k, num_experts, rank_power_weights(num_experts, 2.0)
        )
        assert skewed.mean() < flat.mean()

    def test_weighted_draws_are_distinct_per_token(self):
        # k == num_experts forces every expert exactly once per token
        batch, k = 3, 6
        u = np.random.default_rng(8).random((200, batch, k))
        counts = kernels.weighted_union_counts(u, batch, k, 6, rank_power_weights(6, 1.5))
        assert np.all(counts == 6)
