import numpy as np
import pytest

from moesim.types import ValidationError
from moesim.workload import (
    EmpiricalLengths,
    FixedLengths,
    LogNormalLengths,
    WorkloadConfig,
    export_trace,
    generate_arrivals,
    generate_requests,
    load_trace,
    sample_lengths,
)

ARXIV = LogNormalLengths(input_mean=9194, input_std=5754, output_mean=231, output_std=104)
SHAREGPT = LogNormalLengths(input_mean=2340, input_std=2088, output_mean=438, output_std=265)


class TestArrivals:
    def test_mean_gap_matches_rate(self):
        cfg = WorkloadConfig(
            request_rate_rps=2.0, length_dist=FixedLengths(8, 1), seed=11, num_requests=10_000
        )
        times = generate_arrivals(cfg)
        gaps = np.diff([0.0, *times])
        assert abs(gaps.mean() - 0.5) / 0.5 < 0.05

    def test_single_arrival_nonnegative(self):
        cfg = WorkloadConfig(
            request_rate_rps=1.0, length_dist=FixedLengths(8, 1), seed=3, num_requests=1
        )
        times = generate_arrivals(cfg)
        assert len(times) == 1 and times[0] >= 0.0

    def test_same_seed_identical(self):
        cfg = WorkloadConfig(
            request_rate_rps=3.0, length_dist=FixedLengths(8, 1), seed=5, num_requests=500
        )
        assert generate_arrivals(cfg) == generate_arrivals(cfg)

    def test_monotone_nondecreasing(self):
        for seed in range(5):
            cfg = WorkloadConfig(
                request_rate_rps=10.0,
                length_dist=FixedLengths(8, 1),
                seed=seed,
                num_requests=1000,
            )
            times = generate_arrivals(cfg)
            assert all(a <= b for a, b in zip(times, times[1:]))

    def test_duration_mode_bounds_timestamps(self):
        cfg = WorkloadConfig(
            request_rate_rps=5.0, length_dist=FixedLengths(8, 1), seed=1, duration_s=20.0
        )
        times = generate_arrivals(cfg)
        assert times and max(times) <= 20.0

    def test_requires_exactly_one_stop_condition(self):
        with pytest.raises(ValidationError, match="exactly one"):
            WorkloadConfig(
                request_rate_rps=1.0,
                length_dist=FixedLengths(8, 1),
                seed=0,
                num_requests=10,
                duration_s=5.0,
            )


class TestLengths:
    @pytest.mark.parametrize("dist,targets", [(ARXIV, (9194, 231)), (SHAREGPT, (2340, 438))])
    def test_lognormal_moment_matching(self, dist, targets):
        pairs = sample_lengths(dist, 100_000, seed=17)
        ins = np.array([p[0] for p in pairs], dtype=float)
        outs = np.array([p[1] for p in pairs], dtype=float)
        assert abs(ins.mean() - targets[0]) / targets[0] < 0.10
        assert abs(outs.mean() - targets[1]) / targets[1] < 0.10
        assert abs(ins.std() - dist.input_std) / dist.input_std < 0.10

    def test_fixed_lengths(self):
        pairs = sample_lengths(FixedLengths(8192, 1), 50, seed=0)
        assert pairs == [(8192, 1)] * 50

    def test_empirical_single_pair(self):
        pairs = sample_lengths(EmpiricalLengths(pairs=((100, 10),)), 25, seed=0)
        assert pairs == [(100, 10)] * 25

    def test_all_lengths_at_least_one(self):
        tiny = LogNormalLengths(input_mean=2.0, input_std=3.0, output_mean=1.5, output_std=2.0)
        pairs = sample_lengths(tiny, 20_000, seed=23)
        assert min(p[0] for p in pairs) >= 1
        assert min(p[1] for p in pairs) >= 1

    def test_implied_p90_reported(self):
        p90_in, p90_out = ARXIV.implied_p90()
        # fit is two-parameter; implied p90 should land near the nominal table value
        assert 12_000 < p90_in < 22_000
        assert 300 < p90_out < 500


class TestTrace:
    def test_round_trip_identity(self, tmp_path):
        cfg = WorkloadConfig(
            request_rate_rps=2.0, length_dist=ARXIV, seed=9, num_requests=100
        )
        reqs = generate_requests(cfg)
        path = tmp_path / "trace.csv"
        export_trace(reqs, path)
        loaded = load_trace(path)
        assert len(loaded) == len(reqs)
        for a, b in zip(reqs, loaded):
            assert (a.id, a.arrival_s, a.input_len, a.output_len) == (
                b.id,
                b.arrival_s,
                b.input_len,
                b.output_len,
            )

    def test_malformed_line_names_line_number(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("id,arrival_s,input_len,output_len\n0,0.0,10,5\nnot,valid\n")
        with pytest.raises(ValidationError, match="line 3"):
            load_trace(path)

    def test_empty_file_gives_empty_list(self, tmp_path):
        path = tmp_path / "empty.csv"
        path.write_text("")
        assert load_trace(path) == []

    def test_stream_fully_determined_by_config(self):
        cfg = WorkloadConfig(request_rate_rps=1.5, length_dist=SHAREGPT, seed=31, num_requests=64)
        a = generate_requests(cfg)
        b = generate_requests(cfg)
        assert [(r.arrival_s, r.input_len, r.output_len) for r in a] == [
            (r.arrival_s, r.input_len, r.output_len) for r in b
        ]
