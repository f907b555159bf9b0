"""Greedy instance selection under a byte budget.

Score = predicted workload-time reduction divided by state size; the best
positive-scoring candidate that still fits is taken and every remaining
benefit is recomputed, so the step count is quadratic in the candidate
count.  A budget of zero or an all-nonpositive pool selects nothing.
"""

from __future__ import annotations

from dataclasses import dataclass, field


def workload_time(tables: dict, chosen: frozenset) -> float:
    """Predicted total seconds across queries given the chosen candidates."""
    total = 0.0
    for rows in tables.values():
        total += min(t for ids, t in rows if ids <= chosen)
    return total


@dataclass
class SelectionStep:
    candidate_id: str
    benefit_per_byte: float
    size_bytes: int
    budget_left: float
    workload_seconds: float


@dataclass
class SelectionResult:
    chosen: list
    steps: list = field(default_factory=list)
    recompute_count: int = 0
    initial_seconds: float = 0.0
    final_seconds: float = 0.0

    def budget_respected(self, sizes: dict, budget: float) -> bool:
        total = 0
        for step in self.steps:
            total += step.size_bytes
            if total > budget:
                return False
        return True


def select_greedy(candidate_ids, sizes: dict, budget_bytes: float,
                  tables: dict) -> SelectionResult:
    chosen: list = []
    chosen_set: frozenset = frozenset()
    remaining = list(candidate_ids)
    budget = float(budget_bytes)
    current = workload_time(tables, chosen_set)
    result = SelectionResult(chosen, initial_seconds=current)

    while remaining:
        best = None
        for cid in remaining:
            result.recompute_count += 1
            size = max(sizes[cid], 1)
            if size > budget:
                continue
            t = workload_time(tables, chosen_set | {cid})
            reduction = current - t
            if reduction <= 0:
                continue
            score = reduction / size
            if best is None or score > best[0]:
                best = (score, cid, size, t)
        if best is None:
            break
        score, cid, size, t = best
        chosen.append(cid)
        chosen_set = chosen_set | {cid}
        remaining.remove(cid)
        budget -= size
        current = t
        result.steps.append(SelectionStep(cid, score, size, budget, t))

    result.final_seconds = current
    return result


def select_naive(candidate_ids, sizes: dict, budget_bytes: float,
                 replaced_ops: dict) -> list:
    """Baseline: grab the candidates that replace the most of a query until
    the budget runs out; predictions are never consulted."""
    order = sorted(candidate_ids,
                   key=lambda c: (-replaced_ops.get(c, 0), sizes.get(c, 0), c))
    chosen = []
    budget = float(budget_bytes)
    for cid in order:
        size = max(sizes.get(cid, 1), 1)
        if size <= budget:
            chosen.append(cid)
            budget -= size
    return chosen


def exhaustive_best(candidate_ids, sizes: dict, budget_bytes: float,
                    tables: dict):
    """2^n oracle for small fixtures: the truly optimal subset."""
    ids = list(candidate_ids)
    best_set, best_t = frozenset(), workload_time(tables, frozenset())
    for mask in range(1 << len(ids)):
        subset = frozenset(ids[i] for i in range(len(ids)) if mask >> i & 1)
        if sum(max(sizes[c], 1) for c in subset) > budget_bytes:
            continue
        t = workload_time(tables, subset)
        if t < best_t - 1e-12:
            best_set, best_t = subset, t
    return best_set, best_t
