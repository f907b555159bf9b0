"""Residual-query time: scale the bare query's run time by operator-count
and input-cardinality ratios."""

from __future__ import annotations

from ..cardinality import input_cardinality
from ..plan import AcceleratorCall, LogicalPlan, walk_plan
from ..types import Catalog


def engine_operator_count(plan: LogicalPlan) -> int:
    """Plan operators the engine still executes (accelerator calls are
    sources, not engine work)."""
    return sum(1 for n in walk_plan(plan)
               if not isinstance(n, AcceleratorCall))


def residual_time(bare_seconds: float, bare_plan: LogicalPlan,
                  residual_plan: LogicalPlan, catalog: Catalog,
                  accel_cards: dict | None = None) -> float:
    ops_ratio = engine_operator_count(residual_plan) / \
        max(engine_operator_count(bare_plan), 1)
    card_ratio = input_cardinality(residual_plan, catalog, accel_cards) / \
        max(input_cardinality(bare_plan, catalog), 1)
    return bare_seconds * ops_ratio * card_ratio
