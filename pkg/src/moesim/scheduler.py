"""Iteration-level prefill/decode policies: chunked, layered, and their hybrid.

Planning is pure: plan_* functions read engine state and return a BatchPlan
without mutating anything. apply_plan performs the matching bookkeeping
(activation, cursor advance, completion detection) when the engine commits
an iteration. Every plan lists every currently-decoding request, so decode
is never stalled by prefill work.

Layer-group bookkeeping follows a one-group-per-iteration rule: a prefill
cohort advances through contiguous layer groups, touching each (layer,
prompt-token) pair exactly once. The hybrid policy additionally splits each
prompt into fixed-size chunks that move through the groups as a lockstep
pipeline: chunk c sits in group (step - c), so a chunk enters a group only
after its predecessor has left it, which is exactly the KV dependency.
"""

import math
from dataclasses import dataclass, replace

from .types import Phase, Request, SchedulerConfig, _require


def compute_num_groups(prompt_len: int, group_token_target: int, num_layers: int | None = None) -> int:
    """max(1, ceil(L/target)), optionally capped at the layer count.

    The cap exists because a group is at least one layer.
    """
    _require(prompt_len >= 1, f"prompt_len must be >= 1, got {prompt_len}")
    _require(group_token_target >= 1, f"group_token_target must be >= 1, got {group_token_target}")
    g = max(1, math.ceil(prompt_len / group_token_target))
    if num_layers is not None:
        g = min(g, num_layers)
    return g


@dataclass(frozen=True)
class GroupPlan:
    """Contiguous, disjoint, covering partition of [0, num_layers); sizes differ by <= 1."""

    num_layers: int
    boundaries: tuple[int, ...]  # ascending, boundaries[0] == 0, boundaries[-1] == num_layers

    @property
    def num_groups(self) -> int:
        return len(self.boundaries) - 1

    def group_range(self, g: int) -> tuple[int, int]:
        return self.boundaries[g], self.boundaries[g + 1]


def partition_layers(num_layers: int, groups: int) -> GroupPlan:
    """Balanced contiguous partition into min(groups, num_layers) groups, larger groups first."""
    _require(num_layers >= 1, f"num_layers must be >= 1, got {num_layers}")
    _require(groups >= 1, f"groups must be >= 1, got {groups}")
    g = min(groups, num_layers)
    base, extra = divmod(num_layers, g)
    bounds = [0]
    for i in range(g):
        bounds.append(bounds[-1] + base + (1 if i < extra else 0))
    return GroupPlan(num_layers=num_layers, boundaries=tuple(bounds))


@dataclass(frozen=True)
class PrefillAssignment:
    """One request's prefill slice for one iteration over one layer range."""

    request_id: int
    token_start: int
    token_end: int  # exclusive
    layer_start: int
    layer_end: int  # exclusive

    @property
    def num_tokens(self) -> int:
        return self.token_end - self.token_start

    @property
    def num_layers(self) -> int:
        return self.layer_end - self.layer_start


@dataclass(frozen=True)
class BatchPlan:
    """One iteration's work: the full decode set plus prefill slices."""

    decode_ids: tuple[int, ...]
    prefill_assignments: tuple[PrefillAssignment, ...]
    designated_group: int | None = None  # set only when a multi-group cohort is in flight

    @property
    def prefill_tokens(self) -> int:
        return sum(a.num_tokens for a in self.prefill_assignments)


@dataclass
class Cohort:
    """Requests whose prefills advance together through layer groups.

    cursor is the next group index (layered) or the pipeline step (hybrid).
    chunk_size None means whole-prompt-per-group (layered).
    """

    member_ids: tuple[int, ...]
    group_plan: GroupPlan
    cursor: int = 0
    chunk_size: int | None = None

    def num_chunks(self, input_len: int) -> int:
        if self.chunk_size is None:
            return 1
        return math.ceil(input_len / self.chunk_size)


def _decode_ids(state) -> tuple[int, ...]:
    return tuple(sorted(r.id for r in state.decoding))


def _admissible_prefix(state) -> list[Request]:
    """Longest FCFS prefix of waiting requests whose prompts fit the KV budget.

    Head-of-line blocking: a blocked head makes everyone behind it wait.
    """
    taken: list[Request] = []
    headroom = state.kv_headroom_bytes()
    for r in state.waiting:
        need = r.input_len * state.model.kv_bytes_per_token
        if need > headroom:
            break
        headroom -= need
        taken.append(r)
    return taken


def form_cohort(state, group_token_target: int, chunk_size: int | None = None) -> Cohort | None:
    """Merge all currently-admissible waiting requests into one cohort.

    The group count comes from the longest member prompt so per-iteration
    prefill work stays near the token target.
    """
    members = _admissible_prefix(state)
    if not members:
        return None
    max_len = max(r.input_len for r in members)
    g = compute_num_groups(max_len, group_token_target, num_layers=state.model.num_layers)
    plan = partition_layers(state.model.num_layers, g)
    return Cohort(
        member_ids=tuple(r.id for r in members),
        group_plan=plan,
        cursor=0,
        chunk_size=chunk_size,
    )


# ---------------------------------------------------------------------------
# chunked

def _chunked_assignments(state, chunk_size: int, gate_target: int | None = None) -> tuple[PrefillAssignment, ...]:
    """FCFS fill of up to chunk_size new prefill tokens across all layers.

    In-flight partial prefills drain first; waiting requests join while
    budget and KV room remain. gate_target, when set, only admits new
    requests short enough for a single layer group (hybrid degenerate mode).
    """
    num_layers = state.model.num_layers
    budget = chunk_size
    out: list[PrefillAssignment] = []
    for r in state.prefilling:
        if budget == 0:
            break
        take = min(budget, r.input_len - r.prefill_progress)
        if take > 0:
            out.append(
                PrefillAssignment(r.id, r.prefill_progress, r.prefill_progress + take, 0, num_layers)
            )
            budget -= take
    headroom = state.kv_headroom_bytes()
    for r in state.waiting:
        if budget == 0:
            break
        if gate_target is not None and compute_num_groups(r.input_len, gate_target, num_layers) > 1:
            break
        need = r.input_len * state.model.kv_bytes_per_token
        if need > headroom:
            break
        headroom -= need
        take = min(budget, r.input_len)
        out.append(PrefillAssignment(r.id, 0, take, 0, num_layers))
        budget -= take
    return tuple(out)


def plan_chunked(state, chunk_size: int) -> BatchPlan:
    """All decoders plus up to chunk_size FCFS prefill tokens through every layer."""
    return BatchPlan(
        decode_ids=_decode_ids(state),
        prefill_assignments=_chunked_assignments(state, chunk_size),
        designated_group=None,
    )


# ---------------------------------------------------------------------------
# layered

def _layered_assignments(state, cohort: Cohort) -> tuple[PrefillAssignment, ...]:
    ls, le = cohort.group_plan.group_range(cohort.cursor)
    out = []
    for rid in cohort.member_ids:
        r = state.request(rid)
        out.append(PrefillAssignment(rid, 0, r.input_len, ls, le))
    return tuple(out)


def _cohort_designated(cohort: Cohort) -> int | None:
    if cohort.group_plan.num_groups == 1:
        return None
    return min(cohort.cursor, cohort.group_plan.num_groups - 1)


def plan_layered(state, group_token_target: int) -> BatchPlan:
    """All decoders everywhere; the cohort's whole prompts through exactly one group."""
    cohort = state.cohort
    if cohort is None:
        cohort = form_cohort(state, group_token_target)
    if cohort is None:
        return BatchPlan(decode_ids=_decode_ids(state), prefill_assignments=())
    return BatchPlan(
        decode_ids=_decode_ids(state),
        prefill_assignments=_layered_assignments(state, cohort),
        designated_group=_cohort_designated(cohort),
    )


# ---------------------------------------------------------------------------
# hybrid

def _hybrid_assignments(state, cohort: Cohort) -> tuple[PrefillAssignment, ...]:
    """Slices for pipeline step `cohort.cursor`: chunk c occupies group (step - c)."""
    g_count = cohort.group_plan.num_groups
    step = cohort.cursor
    chunk = cohort.chunk_size
    out: list[PrefillAssignment] = []
    c_lo = max(0, step - g_count + 1)
    for c in range(c_lo, step + 1):
        g = step - c
        ls, le = cohort.group_plan.group_range(g)
        for rid in cohort.member_ids:
            r = state.request(rid)
            if c >= cohort.num_chunks(r.input_len):
                continue
            start = c * chunk
            end = min((c + 1) * chunk, r.input_len)
            out.append(PrefillAssignment(rid, start, end, ls, le))
    return tuple(out)


def plan_hybrid(state, chunk_size: int, group_token_target: int) -> BatchPlan:
    """Chunked along tokens and layered along groups at once.

    Prompts needing more than one group form a cohort whose chunks pipeline
    through the groups; single-group prompts degrade to plain chunked
    scheduling, and chunk_size >= prompt length degrades to plain layered.
    """
    decode_ids = _decode_ids(state)
    cohort = state.cohort
    if cohort is None and not state.prefilling:
        candidates = _admissible_prefix(state)
        if candidates:
            max_len = max(r.input_len for r in candidates)
            g = compute_num_groups(max_len, group_token_target, num_layers=state.model.num_layers)
            if g > 1:
                cohort = form_cohort(state, group_token_target, chunk_size=chunk_size)
    if cohort is not None:
        return BatchPlan(
            decode_ids=decode_ids,
            prefill_assignments=_hybrid_assignments(state, cohort),
            designated_group=_cohort_designated(cohort),
        )
    # degenerate single-group mode: behave exactly like chunked prefill
    return BatchPlan(
        decode_ids=decode_ids,
        prefill_assignments=_chunked_assignments(state, chunk_size, gate_target=group_token_target),
        designated_group=None,
    )


def plan_for(state, cfg: SchedulerConfig) -> BatchPlan:
    if cfg.policy.value == "chunked":
        return plan_chunked(state, cfg.chunk_size)
    if cfg.policy.value == "layered":
        return plan_layered(state, cfg.group_token_target)
    return plan_hybrid(state, cfg.chunk_size, cfg.group_token_target)


# ---------------------------------------------------------------------------
# bookkeeping applied when the engine commits an iteration

def _is_cohort_plan(state, plan: BatchPlan, cfg: SchedulerConfig) -> bool:
    if cfg.policy.value == "layered":
        return True
    if cfg.policy.value == "hybrid":
        return state.cohort is not None or plan.designated_group is not None
    return False


def apply_plan(state, plan: BatchPlan, cfg: SchedulerConfig) -> list[int]:
    """Activate newly-planned requests, advance prefill cursors, detect completions.

    Returns ids whose prefill completed this iteration. Must be called
    exactly once per planned iteration, before decode emission.
    """
    if not plan.prefill_assignments:
        return []

    cohort_mode = _is_cohort_plan(state, plan, cfg)
    if cohort_mode and state.cohort is None:
        chunk = cfg.chunk_size if cfg.policy.value == "hybrid" else None
        state.cohort = form_cohort(state, cfg.group_token_target, chunk_size=chunk)
        assert state.cohort is not None, "cohort plan with no formable cohort"

    # move newly-referenced waiting requests into the prefilling set
    assigned_order: list[int] = []
    seen: set[int] = set()
    for a in plan.prefill_assignments:
        if a.request_id not in seen:
            seen.add(a.request_id)
            assigned_order.append(a.request_id)
    for rid in assigned_order:
        r = state.request(rid)
        if r.phase == Phase.QUEUED:
            state.activate_prefill(r)

    completed: list[int] = []
    if cohort_mode:
        cohort = state.cohort
        step = cohort.cursor
        cohort.cursor = step + 1
        g_count = cohort.group_plan.num_groups
        if cohort.chunk_size is None:
            for rid in cohort.member_ids:
                state.request(rid).prefill_progress = cohort.cursor
            if cohort.cursor == g_count:
                completed.extend(cohort.member_ids)
                state.cohort = None
        else:
            all_done = True
            for rid in cohort.member_ids:
                r = state.request(rid)
                n_chunks = cohort.num_chunks(r.input_len)
                if step >= g_count - 1:
                    r.prefill_progress = min(n_chunks, step - g_count + 2)
                if step == n_chunks + g_count - 2:
                    completed.append(rid)
                elif step < n_chunks + g_count - 2:
                    all_done = False
            if all_done:
                state.cohort = None
    else:
        for a in plan.prefill_assignments:
            r = state.request(a.request_id)
            assert a.token_start == r.prefill_progress, "chunked slice must resume at the cursor"
            r.prefill_progress = a.token_end
            if r.prefill_progress == r.input_len:
                completed.append(a.request_id)
    return completed
