"""Expert-activation models: what fraction of experts a batch of routed tokens touches.

Three interchangeable models feed the cost model:

  * UniformAnalytic - closed form under independent uniform top-k routing
  * EmpiricalTable  - measured coverage curve, log-linear interpolation in B
  * Sampled         - Monte Carlo draws with rank-power routing skew

The default simulation model is the built-in measured table: real routing
is correlated, so measured coverage sits below the independence model.
"""

import math
from bisect import bisect_left
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .types import ValidationError, _require

# Measured decode-batch expert coverage for a 128-expert / top-8 model under
# conversational serving traffic (fractions of experts activated per batch).
DEFAULT_COVERAGE_TABLE: tuple[tuple[int, float], ...] = (
    (1, 0.0625),
    (2, 0.117),
    (4, 0.213),
    (8, 0.290),
    (16, 0.445),
    (32, 0.547),
    (64, 0.694),
    (128, 0.863),
    (256, 0.934),
    (512, 0.98),
)


def expected_coverage_uniform(batch: int, top_k: int, num_experts: int) -> float:
    """Expected fraction of experts activated by `batch` independent uniform top-k draws.

    1 - (1 - k/E)^B: each expert is missed by one token with probability 1 - k/E.
    """
    _require(batch >= 0, f"batch must be >= 0, got {batch}")
    _require(
        1 <= top_k <= num_experts,
        f"top_k out of range: need 1 <= top_k <= num_experts, got top_k={top_k}, "
        f"num_experts={num_experts}",
    )
    return 1.0 - (1.0 - top_k / num_experts) ** batch


def tokens_per_expert(batch: int, top_k: int, num_experts: int) -> float:
    """Mean tokens routed to each expert: B*k/E."""
    _require(batch >= 0, f"batch must be >= 0, got {batch}")
    return batch * top_k / num_experts


def _validate_table(table: tuple[tuple[int, float], ...]) -> None:
    _require(len(table) > 0, "coverage table must be non-empty")
    prev_b, prev_c = 0, -1.0
    for b, c in table:
        _require(b > prev_b, f"coverage table batch sizes must be strictly increasing at B={b}")
        _require(c >= prev_c, f"coverage table must be nondecreasing in coverage at B={b}")
        _require(0.0 <= c <= 1.0, f"coverage fraction must be in [0,1], got {c} at B={b}")
        prev_b, prev_c = b, c


def coverage_from_table(batch: int, table: tuple[tuple[int, float], ...]) -> float:
    """Table lookup with log-linear interpolation in B, clamped at the endpoints.

    The log axis matches tables sampled at powers of two. B=0 returns 0.0:
    no routed tokens activate no experts.
    """
    _validate_table(table)
    _require(batch >= 0, f"batch must be >= 0, got {batch}")
    if batch == 0:
        return 0.0
    bs = [b for b, _ in table]
    cs = [c for _, c in table]
    if batch <= bs[0]:
        return cs[0]
    if batch >= bs[-1]:
        return cs[-1]
    hi = bisect_left(bs, batch)
    if bs[hi] == batch:
        return cs[hi]
    lo = hi - 1
    t = (math.log(batch) - math.log(bs[lo])) / (math.log(bs[hi]) - math.log(bs[lo]))
    return cs[lo] + (cs[hi] - cs[lo]) * t


@dataclass(frozen=True)
class ActivationResult:
    """Mean activation statistics over the sampled trials."""

    coverage_fraction: float
    experts_activated: float
    tokens_per_active_expert: float


def rank_power_weights(num_experts: int, skew_exponent: float) -> np.ndarray:
    """Expert popularity ~ (rank+1)^(-skew); skew 0 is uniform."""
    _require(skew_exponent >= 0, f"skew_exponent must be >= 0, got {skew_exponent}")
    _require(skew_exponent <= 64, f"skew_exponent must be <= 64, got {skew_exponent}")
    ranks = np.arange(num_experts, dtype=np.float64) + 1.0
    return ranks ** (-skew_exponent)


# Slab limits keep pre-drawn uniforms and fallback scratch arrays bounded.
_MAX_TOKENS_PER_SLAB = 65_536


def _sample_union_counts(
    batch: int,
    top_k: int,
    num_experts: int,
    skew_exponent: float,
    rng: np.random.Generator,
    trials: int,
) -> np.ndarray:
    counts = np.empty(trials, dtype=np.int64)
    weights = None
    if skew_exponent > 0:
        weights = rank_power_weights(num_experts, skew_exponent)
    trials_per_slab = max(1, _MAX_TOKENS_PER_SLAB // max(batch, 1))
    done = 0
    while done < trials:
        n = min(trials_per_slab, trials - done)
        u = rng.random((n, batch, top_k))
        if weights is None:
            counts[done : done + n] = kernels.uniform_union_counts(u, batch, top_k, num_experts)
        else:
            counts[done : done + n] = kernels.weighted_union_counts(
                u, batch, top_k, num_experts, weights
            )
        done += n
    return counts


def sample_activation(
    batch: int,
    top_k: int,
    num_experts: int,
    skew_exponent: float,
    rng: np.random.Generator,
    trials: int = 1,
) -> ActivationResult:
    """Draw `trials` batches of top-k subsets and average the activation stats.

    Each token draws k distinct experts, popularity ~ (rank+1)^(-skew).
    Deterministic for a given rng state.
    """
    _require(batch >= 0, f"batch must be >= 0, got {batch}")
    _require(trials >= 1, f"trials must be >= 1, got {trials}")
    _require(
        1 <= top_k <= num_experts,
        f"top_k out of range: need 1 <= top_k <= num_experts, got top_k={top_k}, "
        f"num_experts={num_experts}",
    )
    if batch == 0:
        return ActivationResult(0.0, 0.0, 0.0)
    counts = _sample_union_counts(batch, top_k, num_experts, skew_exponent, rng, trials)
    cov = float(counts.mean()) / num_experts
    routed = batch * top_k
    return ActivationResult(
        coverage_fraction=cov,
        experts_activated=float(counts.mean()),
        tokens_per_active_expert=float((routed / counts).mean()),
    )


def calibrate_skew(
    batch: int,
    top_k: int,
    num_experts: int,
    target_coverage: float,
    seed: int = 0,
    trials: int = 20_000,
    tol: float = 2e-3,
    max_iter: int = 24,
) -> float:
    """Bisect the skew exponent so mean sampled coverage at `batch` hits the target.

    Mean coverage is monotone decreasing in skew, so bisection converges; the
    sampler reuses one seed per evaluation to keep the objective deterministic.
    """
    _require(0.0 < target_coverage <= 1.0, f"target_coverage must be in (0,1], got {target_coverage}")

    def mean_cov(skew: float) -> float:
        rng = np.random.default_rng(seed)
        return sample_activation(batch, top_k, num_experts, skew, rng, trials).coverage_fraction

    lo, hi = 0.0, 8.0
    cov_lo = mean_cov(lo)
    if cov_lo <= target_coverage:
        return lo
    if mean_cov(hi) >= target_coverage:
        raise ValidationError(
            f"target coverage {target_coverage} not reachable with skew <= {hi}"
        )
    for _ in range(max_iter):
        mid = (lo + hi) / 2.0
        cov = mean_cov(mid)
        if abs(cov - target_coverage) <= tol:
            return mid
        if cov > target_coverage:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2.0


# ---------------------------------------------------------------------------
# model objects used by the engine

@dataclass(frozen=True)
class UniformAnalytic:
    """Closed-form independence model."""

    top_k: int
    num_experts: int

    def coverage(self, routed_tokens: int, rng: np.random.Generator | None = None) -> float:
        return expected_coverage_uniform(routed_tokens, self.top_k, self.num_experts)


@dataclass(frozen=True)
class EmpiricalTable:
    """Interpolated measured curve; the default for simulation runs."""

    table: tuple[tuple[int, float], ...] = DEFAULT_COVERAGE_TABLE

    def __post_init__(self):
        _validate_table(self.table)

    def coverage(self, routed_tokens: int, rng: np.random.Generator | None = None) -> float:
        return coverage_from_table(routed_tokens, self.table)


@dataclass(frozen=True)
class Sampled:
    """One Monte Carlo draw per query; stochastic but deterministic per rng."""

    top_k: int
    num_experts: int
    skew_exponent: float = 0.0
    trials: int = 1

    def coverage(self, routed_tokens: int, rng: np.random.Generator | None = None) -> float:
        if rng is None:
            raise ValidationError("Sampled coverage model requires an rng")
        return sample_activation(
            routed_tokens, self.top_k, self.num_experts, self.skew_exponent, rng, self.trials
        ).coverage_fraction


CoverageModel = UniformAnalytic | EmpiricalTable | Sampled


def load_table_csv(path) -> tuple[tuple[int, float], ...]:
    """Read a `batch_size,coverage_fraction` CSV into a table."""
    rows: list[tuple[int, float]] = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.lower().startswith("batch"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValidationError(f"{path}: line {lineno}: expected 2 fields, got {len(parts)}")
            try:
                rows.append((int(parts[0]), float(parts[1])))
            except ValueError as exc:
                raise ValidationError(f"{path}: line {lineno}: {exc}") from exc
    table = tuple(rows)
    _validate_table(table)
    return table
