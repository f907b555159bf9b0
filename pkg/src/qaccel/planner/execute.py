"""Execution orchestration: run accelerators, register their outputs as
temp tables, submit the residual query, fall back to the bare engine on any
stage failure."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from ..batch import ColumnarBatch
from ..plan import AcceleratorCall, LogicalPlan, plan_children, with_children
from ..sql import unparse
from .online import ExecutionPlan


@dataclass
class StageTrace:
    name: str
    seconds: float
    bytes_moved: int = 0


@dataclass
class ExecutionTrace:
    query_digest: str
    predicted_total: float
    stages: list[StageTrace] = field(default_factory=list)
    fallback: str | None = None
    wall_seconds: float = 0.0
    used_accelerators: bool = False

    def to_json(self) -> dict:
        return {
            "query": self.query_digest,
            "predicted_total_s": self.predicted_total,
            "stages": [{"name": s.name, "seconds": s.seconds,
                        "bytes": s.bytes_moved} for s in self.stages],
            "fallback": self.fallback,
            "wall_seconds": self.wall_seconds,
            "used_accelerators": self.used_accelerators,
        }


def execute(eplan: ExecutionPlan, adapter, accels: dict, instances: dict,
            ctx, fault_hook=None) -> tuple[ColumnarBatch, ExecutionTrace]:
    """Run the chosen option; the result must match the bare query row for
    row; any stage failure reruns the whole query on the engine."""
    trace = ExecutionTrace(eplan.query_digest, eplan.predicted_total)
    t_start = time.perf_counter()
    temps: list[str] = []

    from ..plan import Scan

    def materialize(plan: LogicalPlan) -> LogicalPlan:
        if isinstance(plan, AcceleratorCall):
            binding = eplan.bindings[plan.call_id]
            instance = instances[binding.instance_id]
            accel = accels[binding.accel_id]
            instance.check_fresh(ctx)
            input_batch = None
            if accel.midplan:
                child = materialize(plan.children[0])
                t0 = time.perf_counter()
                input_batch = adapter.export(unparse(child))
                trace.stages.append(StageTrace(
                    f"{plan.call_id}:export-input",
                    time.perf_counter() - t0, input_batch.payload_bytes()))
            if fault_hook is not None:
                fault_hook(binding)
            t0 = time.perf_counter()
            out = accel.run(instance.state, binding.inst, input_batch, ctx)
            run_s = time.perf_counter() - t0
            out = out.rename([f.name for f in binding.fragment_fields])
            temp_name = f"qat_{eplan.query_digest[:6]}_{plan.call_id}"
            t0 = time.perf_counter()
            adapter.import_table(temp_name, out)
            import_s = time.perf_counter() - t0
            temps.append(temp_name)
            trace.stages.append(StageTrace(f"{plan.call_id}:run", run_s))
            trace.stages.append(StageTrace(f"{plan.call_id}:import", import_s,
                                           out.payload_bytes()))
            trace.used_accelerators = True
            return Scan(temp_name)
        kids = tuple(materialize(c) for c in plan_children(plan))
        return with_children(plan, kids)

    try:
        residual = materialize(eplan.option_plan)
        t0 = time.perf_counter()
        result = adapter.submit(unparse(residual))
        trace.stages.append(StageTrace("residual", time.perf_counter() - t0))
    except Exception as exc:  # fallback must catch accelerator bugs too
        trace.fallback = f"{type(exc).__name__}: {exc}"
        trace.used_accelerators = False
        t0 = time.perf_counter()
        result = adapter.submit(unparse(eplan.bare_plan))
        trace.stages.append(StageTrace("bare-fallback",
                                       time.perf_counter() - t0))
    finally:
        for name in temps:
            try:
                adapter.drop_table(name)
            except Exception:
                pass
    trace.wall_seconds = time.perf_counter() - t_start
    return result, trace
