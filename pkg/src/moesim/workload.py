"""Request-stream generation (Poisson arrivals, dataset-shaped lengths) and trace I/O."""

import math
from dataclasses import dataclass

import numpy as np

from .types import Request, ValidationError, _require

# Pathological-tail guards applied to every sampled length.
MAX_INPUT_LEN = 131_072
MAX_OUTPUT_LEN = 8_192

TRACE_HEADER = "id,arrival_s,input_len,output_len"


@dataclass(frozen=True)
class FixedLengths:
    """Every request gets the same (input, output) pair."""

    input_len: int
    output_len: int

    def __post_init__(self):
        _require(self.input_len >= 1, f"input_len must be >= 1, got {self.input_len}")
        _require(self.output_len >= 1, f"output_len must be >= 1, got {self.output_len}")

    def sample(self, n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
        return [(self.input_len, self.output_len)] * n


@dataclass(frozen=True)
class LogNormalLengths:
    """Two independent lognormals, moment-matched to the configured mean/std."""

    input_mean: float
    input_std: float
    output_mean: float
    output_std: float

    def __post_init__(self):
        for fname in ("input_mean", "input_std", "output_mean", "output_std"):
            _require(getattr(self, fname) > 0, f"{fname} must be > 0, got {getattr(self, fname)}")

    @staticmethod
    def _params(mean: float, std: float) -> tuple[float, float]:
        # mu/sigma of ln X such that E[X]=mean and Std[X]=std
        sigma2 = math.log(1.0 + (std / mean) ** 2)
        mu = math.log(mean) - sigma2 / 2.0
        return mu, math.sqrt(sigma2)

    def implied_p90(self) -> tuple[float, float]:
        """p90 of the fitted input and output distributions (for docs/sanity)."""
        z90 = 1.2815515655446004
        out = []
        for mean, std in ((self.input_mean, self.input_std), (self.output_mean, self.output_std)):
            mu, sigma = self._params(mean, std)
            out.append(math.exp(mu + z90 * sigma))
        return out[0], out[1]

    def sample(self, n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
        mu_i, sg_i = self._params(self.input_mean, self.input_std)
        mu_o, sg_o = self._params(self.output_mean, self.output_std)
        ins = np.rint(rng.lognormal(mu_i, sg_i, size=n)).astype(np.int64)
        outs = np.rint(rng.lognormal(mu_o, sg_o, size=n)).astype(np.int64)
        ins = np.clip(ins, 1, MAX_INPUT_LEN)
        outs = np.clip(outs, 1, MAX_OUTPUT_LEN)
        return list(zip(ins.tolist(), outs.tolist()))


@dataclass(frozen=True)
class EmpiricalLengths:
    """Uniform resampling (with replacement) from observed (input, output) pairs."""

    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        _require(len(self.pairs) > 0, "empirical length trace must be non-empty")
        for i, o in self.pairs:
            _require(i >= 1 and o >= 1, f"empirical lengths must be >= 1, got ({i}, {o})")

    def sample(self, n: int, rng: np.random.Generator) -> list[tuple[int, int]]:
        idx = rng.integers(0, len(self.pairs), size=n)
        return [self.pairs[i] for i in idx.tolist()]


LengthDistribution = FixedLengths | LogNormalLengths | EmpiricalLengths


@dataclass(frozen=True)
class WorkloadConfig:
    """Arrival process plus length shape; (config, seed) fully determines the stream."""

    request_rate_rps: float
    length_dist: LengthDistribution
    seed: int
    num_requests: int | None = None
    duration_s: float | None = None

    def __post_init__(self):
        _require(self.request_rate_rps > 0, f"request_rate_rps must be > 0, got {self.request_rate_rps}")
        _require(
            (self.num_requests is None) != (self.duration_s is None),
            "exactly one of num_requests / duration_s must be set",
        )
        if self.num_requests is not None:
            _require(self.num_requests >= 1, f"num_requests must be >= 1, got {self.num_requests}")
        if self.duration_s is not None:
            _require(self.duration_s > 0, f"duration_s must be > 0, got {self.duration_s}")


def generate_arrivals(cfg: WorkloadConfig) -> list[float]:
    """Poisson arrival timestamps: i.i.d. exponential gaps with mean 1/rate."""
    rng = np.random.default_rng(cfg.seed)
    if cfg.num_requests is not None:
        gaps = rng.exponential(1.0 / cfg.request_rate_rps, size=cfg.num_requests)
        return np.cumsum(gaps).tolist()
    times: list[float] = []
    t = 0.0
    while True:
        t += rng.exponential(1.0 / cfg.request_rate_rps)
        if t > cfg.duration_s:
            return times
        times.append(t)


def sample_lengths(
    dist: LengthDistribution, n: int, seed: int
) -> list[tuple[int, int]]:
    """n (input_len, output_len) pairs, each component >= 1."""
    return dist.sample(n, np.random.default_rng(seed))


def generate_requests(cfg: WorkloadConfig) -> list[Request]:
    """Full request stream for one run; deterministic in (cfg, seed)."""
    arrivals = generate_arrivals(cfg)
    # independent stream for lengths so arrival count changes don't reshuffle them
    lengths = sample_lengths(cfg.length_dist, len(arrivals), cfg.seed + 0x9E3779B9)
    return [
        Request(id=i, arrival_s=t, input_len=li, output_len=lo)
        for i, (t, (li, lo)) in enumerate(zip(arrivals, lengths))
    ]


def export_trace(requests: list[Request], path) -> None:
    """Write requests as CSV: one request per line, header included."""
    with open(path, "w", encoding="utf-8") as f:
        f.write(TRACE_HEADER + "\n")
        for r in requests:
            f.write(f"{r.id},{r.arrival_s!r},{r.input_len},{r.output_len}\n")


def load_trace(path) -> list[Request]:
    """Read a trace CSV written by export_trace; errors name the offending line."""
    requests: list[Request] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            if lineno == 1 and line == TRACE_HEADER:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValidationError(
                    f"{path}: line {lineno}: expected 4 comma-separated fields, got {len(parts)}"
                )
            try:
                rid = int(parts[0])
                arrival = float(parts[1])
                input_len = int(parts[2])
                output_len = int(parts[3])
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
            requests.append(
                Request(id=rid, arrival_s=arrival, input_len=input_len, output_len=output_len)
            )
    return requests
