"""The planner facade: offline selection, online planning, execution."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

from ..accelerators import (AccelContext, AcceleratorInstance,
                            builtin_accelerators, measure_size)
from ..adapters import OracleAdapter
from ..batch import batches_equal, canonical_order
from ..egraph import default_rules, project_filter_swap_rule
from ..models import IN_PROCESS, TransferModel
from ..plan import LogicalPlan, digest
from ..sql import unparse
from ..types import EngineContext
from .candidates import WorkloadAnalysis, build_option_tables, enumerate_candidates
from .costs import GroundTruthCosts, LearnedCosts
from .execute import execute
from .online import ExecutionPlan, PlanCache, TemplateIndex, plan_query
from .runtime import BareRuntimeSource
from .selection import (SelectionResult, select_greedy, select_naive,
                        workload_time)


@dataclass
class OfflineReport:
    selection: SelectionResult | None
    chosen: list
    measured_bytes: int
    budget_bytes: float
    evicted: list = field(default_factory=list)
    candidate_count: int = 0

    def manifest(self, instances: dict) -> dict:
        return {
            "budget_bytes": self.budget_bytes,
            "measured_bytes": self.measured_bytes,
            "candidates_considered": self.candidate_count,
            "evicted": self.evicted,
            "instances": [{
                "instance_id": i.instance_id,
                "accel_id": i.accel_id,
                "size_bytes": i.size_bytes,
                "stale": i.stale,
            } for i in instances.values()],
        }


@dataclass
class BenchRow:
    query_id: str
    bare_seconds: float
    planned_seconds: float
    speedup: float
    used_accelerators: bool
    fallback: str | None
    verified: bool | None
    planning_seconds: float


@dataclass
class BenchReport:
    rows: list
    geomean_speedup: float
    mismatches: int


class Planner:
    def __init__(self, store, adapter=None, accels=None, rules=None,
                 models=None, transfer: TransferModel | None = None,
                 strategy: str = "model", cost_mode: str = "learned",
                 option_cap: int = 64, node_limit: int = 10_000,
                 iter_limit: int = 20, observed_runtimes: dict | None = None,
                 error_q: float = 1.0, error_seed: int = 0,
                 engine: EngineContext | None = None):
        self.store = store
        self.adapter = adapter or OracleAdapter(store)
        self.accels = accels or builtin_accelerators()
        self.rules = rules if rules is not None \
            else default_rules() + [project_filter_swap_rule()]
        self.models = models or {}
        self.transfer = transfer if transfer is not None else IN_PROCESS
        self.strategy = strategy
        self.cost_mode = cost_mode
        self.option_cap = option_cap
        self.node_limit = node_limit
        self.iter_limit = iter_limit
        self.engine = engine or EngineContext()
        self.templates = TemplateIndex(self.accels)
        self.runtime = BareRuntimeSource(self.adapter, observed_runtimes,
                                         error_q=error_q,
                                         error_seed=error_seed)
        self.instances: dict[str, AcceleratorInstance] = {}
        self._truth_pool: dict[str, AcceleratorInstance] = {}
        self._cost_provider = None
        self.cache = PlanCache()

    # --- infrastructure ---

    @property
    def catalog(self):
        return self.store.catalog

    def context(self) -> AccelContext:
        return AccelContext(catalog=self.catalog, adapter=self.adapter,
                            engine=self.engine,
                            generation=self.store.generation)

    def costs(self):
        if self._cost_provider is None:
            if self.cost_mode == "truth":
                # truth mode measures real component times once and reuses
                # them, reading whichever instances are currently installed
                self._cost_provider = GroundTruthCosts(
                    self.runtime, self.catalog, self.accels,
                    lambda: {**self._truth_pool, **self.instances},
                    self.context, transfer=self.transfer)
            else:
                self._cost_provider = LearnedCosts(
                    self.models, self.transfer, self.runtime, self.catalog,
                    self.accels)
        return self._cost_provider

    # --- offline phase ---

    def analyze_workload(self, plans: dict) -> WorkloadAnalysis:
        return enumerate_candidates(plans, self.templates, self.catalog,
                                    self.rules, self.node_limit,
                                    self.iter_limit)

    def _build_instance(self, candidate) -> AcceleratorInstance:
        accel = self.accels[candidate.accel_id]
        ctx = self.context()
        state = accel.build(candidate.sample, ctx)
        instance = AcceleratorInstance(
            instance_id=candidate.candidate_id,
            accel_id=candidate.accel_id,
            fixed=candidate.fixed,
            sample=candidate.sample,
            state=state,
            built_generation=ctx.generation,
        )
        instance.size_bytes = measure_size(state)
        return instance

    def select_instances(self, plans: dict, budget_bytes: float,
                         strategy: str | None = None) -> OfflineReport:
        strategy = strategy or self.strategy
        analysis = self.analyze_workload(plans)
        sizes = {cid: c.est_size_bytes
                 for cid, c in analysis.candidates.items()}
        if self.cost_mode == "truth":
            # truth mode needs built state to measure run times; keep the
            # builds around so budget sweeps do not rebuild every candidate
            for cid, cand in analysis.candidates.items():
                if cid not in self._truth_pool:
                    self._truth_pool[cid] = self._build_instance(cand)
                self.instances[cid] = self._truth_pool[cid]
                sizes[cid] = self.instances[cid].size_bytes
        tables = build_option_tables(analysis, self.templates, self.costs(),
                                     self.catalog, self.option_cap)
        if strategy == "naive":
            chosen = select_naive(list(analysis.candidates), sizes,
                                  budget_bytes,
                                  {cid: c.replaced_ops for cid, c in
                                   analysis.candidates.items()})
            selection = None
        else:
            selection = select_greedy(sorted(analysis.candidates), sizes,
                                      budget_bytes, tables)
            chosen = list(selection.chosen)

        built: dict[str, AcceleratorInstance] = {}
        for cid in chosen:
            built[cid] = self._truth_pool.get(cid) \
                or self._build_instance(analysis.candidates[cid])
        # measured sizes may overshoot the estimates: evict worst scorers
        evicted = []
        order = list(chosen)
        while order and sum(built[c].size_bytes for c in order) > budget_bytes:
            scores = {}
            for c in order:
                t_without = workload_time(
                    tables, frozenset(x for x in order if x != c))
                t_with = workload_time(tables, frozenset(order))
                scores[c] = (t_without - t_with) / max(built[c].size_bytes, 1)
            worst = min(order, key=lambda c: scores[c])
            order.remove(worst)
            evicted.append(worst)
        self.instances = {c: built[c] for c in order}
        self.cache.invalidate()
        total = sum(i.size_bytes for i in self.instances.values())
        return OfflineReport(selection=selection, chosen=order,
                             measured_bytes=total, budget_bytes=budget_bytes,
                             evicted=evicted,
                             candidate_count=len(analysis.candidates))

    def rebuild(self):
        """Re-run build() for every instance and clear staleness."""
        ctx = self.context()
        for instance in self.instances.values():
            accel = self.accels[instance.accel_id]
            instance.state = accel.build(instance.sample, ctx)
            instance.size_bytes = measure_size(instance.state)
            instance.built_generation = ctx.generation
            instance.stale = False
        self._cost_provider = None  # stale measurements died with the data
        self.cache.invalidate()

    def mark_stale(self):
        for instance in self.instances.values():
            instance.stale = True
        self.cache.invalidate()

    # --- online phase ---

    def plan(self, plan: LogicalPlan, strategy: str | None = None
             ) -> ExecutionPlan:
        return plan_query(plan, instances=self.instances, accels=self.accels,
                          templates=self.templates, costs=self.costs(),
                          catalog=self.catalog, rules=self.rules,
                          option_cap=self.option_cap,
                          strategy=strategy or self.strategy,
                          cache=self.cache, node_limit=self.node_limit,
                          iter_limit=self.iter_limit)

    def run(self, plan: LogicalPlan, fault_hook=None,
            strategy: str | None = None):
        eplan = self.plan(plan, strategy=strategy)
        return execute(eplan, self.adapter, self.accels, self.instances,
                       self.context(), fault_hook=fault_hook)

    # --- benchmarking ---

    def bench(self, plans: dict, verify: bool = False, repeats: int = 1,
              fault_hook=None, oracle_store=None) -> BenchReport:
        rows = []
        mismatches = 0
        for qid, plan in plans.items():
            bare_sql = unparse(plan)
            bare_best = math.inf
            for _ in range(repeats):
                t0 = time.perf_counter()
                bare_out = self.adapter.submit(bare_sql)
                bare_best = min(bare_best, time.perf_counter() - t0)
            self.runtime.record(digest(plan), bare_best)
            planned_best, trace, out = math.inf, None, None
            eplan = self.plan(plan)
            for _ in range(repeats):
                t0 = time.perf_counter()
                out, trace = execute(eplan, self.adapter, self.accels,
                                     self.instances, self.context(),
                                     fault_hook=fault_hook)
                planned_best = min(planned_best, time.perf_counter() - t0)
            verified = None
            if verify:
                verified = batches_equal(canonical_order(out),
                                         canonical_order(bare_out),
                                         ordered=True, float_rtol=1e-9)
                if not verified:
                    mismatches += 1
            rows.append(BenchRow(
                query_id=qid,
                bare_seconds=bare_best,
                planned_seconds=planned_best,
                speedup=bare_best / max(planned_best, 1e-9),
                used_accelerators=trace.used_accelerators,
                fallback=trace.fallback,
                verified=verified,
                planning_seconds=eplan.planning_seconds,
            ))
        logs = [math.log(max(r.speedup, 1e-9)) for r in rows]
        geo = math.exp(sum(logs) / len(logs)) if logs else 1.0
        return BenchReport(rows=rows, geomean_speedup=geo,
                           mismatches=mismatches)
