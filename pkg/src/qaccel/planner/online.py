"""Per-query planning: match built instances, enumerate placements, pick the
option with the lowest predicted total."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from ..egraph import from_plan, saturate
from ..errors import QaccelError
from ..matching import (AccelNodeInfo, enumerate_options, insert_accel_nodes,
                        match_all_classes, resolve)
from ..models import engine_operator_count
from ..plan import AcceleratorCall, LogicalPlan, digest, walk_plan
from ..templates import compile_template, instantiation_digest
from ..templates.constructs import RUN_TIME, TABLE_EXPR
from .costs import CallCost, call_cost_for


@dataclass
class CallBinding:
    instance_id: str
    accel_id: str
    inst: object                     # full instantiation incl. run-time values
    fragment_fields: list
    cost: CallCost


@dataclass
class ExecutionPlan:
    query_digest: str
    query_plan: LogicalPlan
    option_plan: LogicalPlan
    bare_plan: LogicalPlan
    bindings: dict[str, CallBinding]
    predicted_total: float
    predicted_bare: float
    breakdown: dict[str, float] = field(default_factory=dict)
    considered: list = field(default_factory=list)
    strategy: str = "model"
    from_cache: bool = False
    planning_seconds: float = 0.0

    @property
    def uses_accelerators(self) -> bool:
        return any(isinstance(n, AcceleratorCall)
                   for n in walk_plan(self.option_plan))


class PlanCache:
    def __init__(self):
        self._plans: dict[str, ExecutionPlan] = {}

    def get(self, key):
        return self._plans.get(key)

    def put(self, key, plan: ExecutionPlan):
        self._plans[key] = plan

    def invalidate(self):
        self._plans.clear()

    def __len__(self):
        return len(self._plans)


class TemplateIndex:
    """Compiled automaton per accelerator, built once."""

    def __init__(self, accels: dict):
        self.accels = accels
        self.compiled = {}
        for aid, accel in accels.items():
            tpl = accel.template()
            self.compiled[aid] = (tpl, compile_template(tpl))

    def matches_on(self, g, accel_id, catalog):
        """Resolved, validated instantiations with their match records."""
        tpl, nfta = self.compiled[accel_id]
        accel = self.accels[accel_id]
        out = []
        for mr in match_all_classes(nfta, g):
            try:
                inst = resolve(mr, g, tpl)
            except QaccelError:
                continue
            if accel.validate(inst, catalog):
                out.append((inst, mr))
        return out

    def runtime_input_class(self, accel_id, mr):
        """Matched e-class of the run-time table-expression input, if any."""
        tpl, _ = self.compiled[accel_id]
        for var in tpl.variables():
            if var.resolution == RUN_TIME and var.vtype == TABLE_EXPR:
                cid = tpl.construct_id(var)
                for ev in mr.events:
                    if ev.construct == cid:
                        return ev.eclass
        return None


def _score_option(option, bindings, costs, bare_plan, bare_s, query_key):
    calls = [n for n in walk_plan(option) if isinstance(n, AcceleratorCall)]
    if not calls:
        return bare_s, {"bare": bare_s}
    accel_cards = {}
    accel_s = 0.0
    transfer_s = 0.0
    for call in calls:
        b = bindings[call.call_id]
        accel_cards[call.call_id] = b.cost.out_card
        accel_s += costs.accel_seconds(b.cost)
        transfer_s += costs.transfer_seconds(b.cost.out_bytes)
        if b.cost.input_plan is not None:
            transfer_s += costs.transfer_seconds(b.cost.in_bytes)
    residual_s = costs.residual_seconds(bare_s, bare_plan, option, accel_cards)
    total = accel_s + transfer_s + residual_s
    return total, {"accelerators": accel_s, "transfer": transfer_s,
                   "residual": residual_s}


def plan_query(plan: LogicalPlan, *, instances: dict, accels: dict,
               templates: TemplateIndex, costs, catalog, rules,
               option_cap: int = 64, strategy: str = "model",
               cache: PlanCache | None = None, node_limit: int = 10_000,
               iter_limit: int = 20) -> ExecutionPlan:
    t0 = time.perf_counter()
    key = digest(plan)
    cache_key = f"{key}:{strategy}"
    if cache is not None:
        hit = cache.get(cache_key)
        if hit is not None:
            out = ExecutionPlan(**{**hit.__dict__})
            out.from_cache = True
            out.planning_seconds = time.perf_counter() - t0
            return out

    g, root = from_plan(plan)
    saturate(g, rules, catalog, node_limit=node_limit, iter_limit=iter_limit)

    infos, bindings = [], {}
    counter = 0
    for inst_id in sorted(instances):
        instance = instances[inst_id]
        if instance.stale:
            continue
        accel = accels[instance.accel_id]
        fixed_digest = instantiation_digest(instance.fixed)
        for resolved, mr in templates.matches_on(g, instance.accel_id, catalog):
            if instantiation_digest(accel.instantiation_key(resolved)) \
                    != fixed_digest:
                continue
            call_id = f"c{counter}"
            counter += 1
            child_classes = ()
            input_plan = None
            in_class = templates.runtime_input_class(instance.accel_id, mr)
            if accel.midplan and in_class is not None:
                child_classes = (in_class,)
                input_plan = g.extract_smallest(in_class,
                                                exclude=frozenset({"Accel"}))
            infos.append(AccelNodeInfo(inst_id, call_id, mr, child_classes))
            fragment = g.extract_smallest(mr.root,
                                          exclude=frozenset({"Accel"}))
            cost = call_cost_for(accel, inst_id, resolved, catalog,
                                 input_plan=input_plan, fragment=fragment)
            bindings[call_id] = CallBinding(inst_id, instance.accel_id,
                                            resolved, cost.out_fields, cost)

    insert_accel_nodes(g, infos)
    options = enumerate_options(g, g.find(root), option_cap)
    bare_plan = options[0]
    bare_s = costs.bare_seconds(bare_plan, key)

    scored = []
    for option in options:
        total, parts = _score_option(option, bindings, costs, bare_plan,
                                     bare_s, key)
        n_calls = sum(1 for n in walk_plan(option)
                      if isinstance(n, AcceleratorCall))
        scored.append((option, total, parts, n_calls))

    if strategy == "naive":
        withcalls = [s for s in scored if s[3] > 0]
        pool = withcalls or scored
        # replace as much of the query as possible, predictions ignored
        best = min(pool, key=lambda s: (engine_operator_count(s[0]), -s[3]))
    else:
        best = min(scored, key=lambda s: (s[1], engine_operator_count(s[0])))

    option_plan, total, parts, _ = best
    used = {n.call_id for n in walk_plan(option_plan)
            if isinstance(n, AcceleratorCall)}
    eplan = ExecutionPlan(
        query_digest=key,
        query_plan=plan,
        option_plan=option_plan,
        bare_plan=bare_plan,
        bindings={k: v for k, v in bindings.items() if k in used},
        predicted_total=total,
        predicted_bare=bare_s,
        breakdown=parts,
        considered=[(digest(o), t, n) for o, t, _, n in scored],
        strategy=strategy,
        planning_seconds=time.perf_counter() - t0,
    )
    if cache is not None:
        cache.put(cache_key, eplan)
    return eplan
