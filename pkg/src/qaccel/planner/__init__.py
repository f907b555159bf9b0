from .candidates import (Candidate, WorkloadAnalysis, build_option_tables,
                         enumerate_candidates)
from .core import BenchReport, BenchRow, OfflineReport, Planner
from .costs import CallCost, GroundTruthCosts, LearnedCosts, call_cost_for
from .execute import ExecutionTrace, StageTrace, execute
from .online import (CallBinding, ExecutionPlan, PlanCache, TemplateIndex,
                     plan_query)
from .runtime import BareRuntimeSource
from .selection import (SelectionResult, SelectionStep, exhaustive_best,
                        select_greedy, select_naive, workload_time)

__all__ = ["Candidate", "WorkloadAnalysis", "build_option_tables",
           "enumerate_candidates", "BenchReport", "BenchRow", "OfflineReport",
           "Planner", "CallCost", "GroundTruthCosts", "LearnedCosts",
           "call_cost_for", "ExecutionTrace", "StageTrace", "execute",
           "CallBinding", "ExecutionPlan", "PlanCache", "TemplateIndex",
           "plan_query", "BareRuntimeSource", "SelectionResult",
           "SelectionStep", "exhaustive_best", "select_greedy", "select_naive",
           "workload_time"]
