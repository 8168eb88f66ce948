"""Hot inner loops for Monte Carlo expert-activation sampling.

Two interchangeable backends compute identical results from the same
pre-drawn uniforms:

  * "numba"  - @njit scalar loops (default when numba imports cleanly)
  * "numpy"  - vectorized pure-numpy fallback

Select with the MOESIM_KERNELS environment variable or use_backend().
Both paths are bit-exact for the same inputs (asserted in tests), so the
flag changes speed only, never results. benchmarks/bench_kernels.py
compares the two.

Sampling algorithm, per token: a partial Fisher-Yates draw of k distinct
experts from an identity pool (uniform case), or a sequential weighted
draw without replacement (skewed case). Each token consumes exactly k
uniforms, so callers can pre-generate randomness in slabs.
"""

import os

import numpy as np

try:
    from numba import njit

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba installed
    _HAS_NUMBA = False

    def njit(*args, **kwargs):  # type: ignore[misc]
        def wrap(fn):
            return fn

        return wrap


_ENV_VAR = "MOESIM_KERNELS"
_VALID_BACKENDS = ("numba", "numpy")


def _initial_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice:
        if choice not in _VALID_BACKENDS:
            raise ValueError(f"{_ENV_VAR} must be one of {_VALID_BACKENDS}, got {choice!r}")
        if choice == "numba" and not _HAS_NUMBA:
            raise ValueError(f"{_ENV_VAR}=numba but numba is not importable")
        return choice
    return "numba" if _HAS_NUMBA else "numpy"


_BACKEND = _initial_backend()


def active_backend() -> str:
    return _BACKEND


def use_backend(name: str) -> None:
    """Override the kernel backend (tests and benchmarks)."""
    global _BACKEND
    if name not in _VALID_BACKENDS:
        raise ValueError(f"backend must be one of {_VALID_BACKENDS}, got {name!r}")
    if name == "numba" and not _HAS_NUMBA:
        raise ValueError("numba backend requested but numba is not importable")
    _BACKEND = name


# ---------------------------------------------------------------------------
# numba backend

@njit(cache=True)
def _uniform_union_counts_nb(u, batch, k, num_experts):
    trials = u.shape[0]
    out = np.zeros(trials, dtype=np.int64)
    if batch == 0:
        return out
    pool = np.arange(num_experts)
    swaps = np.empty(k, dtype=np.int64)
    stamp = np.zeros(num_experts, dtype=np.int64)
    for t in range(trials):
        union = 0
        for b in range(batch):
            # partial Fisher-Yates on an identity pool, undone afterwards so
            # every token samples from the same pool state
            for i in range(k):
                j = i + int(u[t, b, i] * (num_experts - i))
                swaps[i] = j
                tmp = pool[i]
                pool[i] = pool[j]
                pool[j] = tmp
                e = pool[i]
                if stamp[e] != t + 1:
                    stamp[e] = t + 1
                    union += 1
            for i in range(k - 1, -1, -1):
                j = swaps[i]
                tmp = pool[i]
                pool[i] = pool[j]
                pool[j] = tmp
        out[t] = union
    return out


@njit(cache=True)
def _weighted_union_counts_nb(u, batch, k, num_experts, weights):
    trials = u.shape[0]
    out = np.zeros(trials, dtype=np.int64)
    if batch == 0:
        return out
    total_w = 0.0
    for e in range(num_experts):
        total_w += weights[e]
    drawn = np.full(num_experts, -1, dtype=np.int64)
    stamp = np.zeros(num_experts, dtype=np.int64)
    for t in range(trials):
        union = 0
        for b in range(batch):
            tok = t * batch + b
            w_rem = total_w
            for i in range(k):
                target = u[t, b, i] * w_rem
                cum = 0.0
                sel = -1
                for e in range(num_experts):
                    if drawn[e] == tok:
                        continue
                    cum += weights[e]
                    if cum > target:
                        sel = e
                        break
                if sel < 0:
                    # float round-off pushed target past the final cumsum
                    for e in range(num_experts - 1, -1, -1):
                        if drawn[e] != tok:
                            sel = e
                            break
                drawn[sel] = tok
                w_rem -= weights[sel]
                if stamp[sel] != t + 1:
                    stamp[sel] = t + 1
                    union += 1
        out[t] = union
    return out


# ---------------------------------------------------------------------------
# numpy backend

def _union_from_experts(experts: np.ndarray, trials: int, num_experts: int) -> np.ndarray:
    flat = experts.reshape(trials, -1) + (
        np.arange(trials, dtype=np.int64)[:, None] * num_experts
    )
    counts = np.bincount(flat.ravel(), minlength=trials * num_experts)
    return (counts.reshape(trials, num_experts) > 0).sum(axis=1).astype(np.int64)


def _uniform_union_counts_np(u, batch, k, num_experts):
    trials = u.shape[0]
    if batch == 0:
        return np.zeros(trials, dtype=np.int64)
    n = trials * batch
    uu = u.reshape(n, k)
    pool = np.tile(np.arange(num_experts, dtype=np.int64), (n, 1))
    experts = np.empty((n, k), dtype=np.int64)
    rows = np.arange(n)
    for i in range(k):
        j = i + (uu[:, i] * (num_experts - i)).astype(np.int64)
        tmp = pool[rows, i].copy()
        pool[rows, i] = pool[rows, j]
        pool[rows, j] = tmp
        experts[:, i] = pool[rows, i]
    return _union_from_experts(experts, trials, num_experts)


def _weighted_union_counts_np(u, batch, k, num_experts, weights):
    trials = u.shape[0]
    if batch == 0:
        return np.zeros(trials, dtype=np.int64)
    n = trials * batch
    uu = u.reshape(n, k)
    w = np.tile(weights, (n, 1))
    # sequential scalar sum to match the numba accumulation order bit-for-bit
    total_w = 0.0
    for e in range(num_experts):
        total_w += float(weights[e])
    w_rem = np.full(n, total_w, dtype=np.float64)
    experts = np.empty((n, k), dtype=np.int64)
    rows = np.arange(n)
    for i in range(k):
        target = uu[:, i] * w_rem
        cum = np.cumsum(w, axis=1)  # drawn entries are 0.0: exact no-ops in the sum
        hit = cum > target[:, None]
        sel = hit.argmax(axis=1)
        none = ~hit.any(axis=1)
        if none.any():
            alive = w[none] > 0.0
            sel[none] = num_experts - 1 - alive[:, ::-1].argmax(axis=1)
        experts[:, i] = sel
        w_rem = w_rem - w[rows, sel]
        w[rows, sel] = 0.0
    return _union_from_experts(experts, trials, num_experts)


# ---------------------------------------------------------------------------
# dispatch

def uniform_union_counts(u: np.ndarray, batch: int, k: int, num_experts: int) -> np.ndarray:
    """Per-trial union sizes for `batch` uniform top-k draws; u: (trials, batch, k)."""
    if _BACKEND == "numba":
        return _uniform_union_counts_nb(u, batch, k, num_experts)
    return _uniform_union_counts_np(u, batch, k, num_experts)


def weighted_union_counts(
    u: np.ndarray, batch: int, k: int, num_experts: int, weights: np.ndarray
) -> np.ndarray:
    """Per-trial union sizes for rank-weighted top-k draws without replacement."""
    if _BACKEND == "numba":
        return _weighted_union_counts_nb(u, batch, k, num_experts, weights)
    return _weighted_union_counts_np(u, batch, k, num_experts, weights)
