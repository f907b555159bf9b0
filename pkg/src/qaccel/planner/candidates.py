"""Offline candidate enumeration: match every accelerator template against
the workload log and deduplicate by instantiation-time identity."""

from __future__ import annotations

from dataclasses import dataclass, field

from ..egraph import from_plan, saturate
from ..matching import AccelNodeInfo, enumerate_options, insert_accel_nodes
from ..models import engine_operator_count
from ..plan import AcceleratorCall, walk_plan
from ..templates import instantiation_digest
from .costs import call_cost_for
from .online import CallBinding, TemplateIndex, _score_option


@dataclass
class Candidate:
    candidate_id: str                 # accel id + fixed-binding digest
    accel_id: str
    fixed: object                     # instantiation-time identity
    sample: object                    # one full instantiation (for build)
    matched_queries: set = field(default_factory=set)
    est_size_bytes: int = 0
    replaced_ops: int = 0             # naive strategy's ranking signal


@dataclass
class WorkloadAnalysis:
    candidates: dict                  # candidate_id -> Candidate
    graphs: dict                      # query_id -> (egraph, root)
    matches: dict                     # query_id -> [(candidate_id, inst, mr)]
    plans: dict                       # query_id -> LogicalPlan


def enumerate_candidates(plans: dict, templates: TemplateIndex, catalog,
                         rules, node_limit=10_000,
                         iter_limit=20) -> WorkloadAnalysis:
    """plans: query id -> logical plan (already parsed)."""
    candidates: dict[str, Candidate] = {}
    graphs, matches = {}, {}
    for qid, plan in plans.items():
        g, root = from_plan(plan)
        saturate(g, rules, catalog, node_limit=node_limit,
                 iter_limit=iter_limit)
        graphs[qid] = (g, root)
        found = []
        for accel_id, accel in templates.accels.items():
            for inst, mr in templates.matches_on(g, accel_id, catalog):
                fixed = accel.instantiation_key(inst)
                cid = f"{accel_id}:{instantiation_digest(fixed)}"
                if cid not in candidates:
                    frag = accel.fragment_plan(inst)
                    candidates[cid] = Candidate(
                        candidate_id=cid,
                        accel_id=accel_id,
                        fixed=fixed,
                        sample=inst,
                        est_size_bytes=accel.estimate_state_bytes(inst,
                                                                  catalog),
                        replaced_ops=engine_operator_count(frag),
                    )
                candidates[cid].matched_queries.add(qid)
                found.append((cid, inst, mr))
        matches[qid] = found
    return WorkloadAnalysis(candidates, graphs, matches, dict(plans))


def build_option_tables(analysis: WorkloadAnalysis, templates: TemplateIndex,
                        costs, catalog, option_cap: int = 64) -> dict:
    """Per query: rows of (candidate-id frozenset, predicted seconds).

    The bare row uses the empty set, so any chosen subset has a defined
    time and adding candidates can only shrink the per-query minimum.
    """
    tables = {}
    for qid, (g, root) in analysis.graphs.items():
        infos, bindings, call_to_cand = [], {}, {}
        for i, (cid, inst, mr) in enumerate(analysis.matches[qid]):
            accel = templates.accels[analysis.candidates[cid].accel_id]
            call_id = f"c{i}"
            child_classes = ()
            input_plan = None
            in_class = templates.runtime_input_class(accel.accel_id, mr)
            if accel.midplan and in_class is not None:
                child_classes = (in_class,)
                input_plan = g.extract_smallest(in_class,
                                                exclude=frozenset({"Accel"}))
            infos.append(AccelNodeInfo(cid, call_id, mr, child_classes))
            fragment = g.extract_smallest(mr.root,
                                          exclude=frozenset({"Accel"}))
            cost = call_cost_for(accel, cid, inst, catalog,
                                 input_plan=input_plan, fragment=fragment)
            bindings[call_id] = CallBinding(cid, accel.accel_id, inst,
                                            cost.out_fields, cost)
            call_to_cand[call_id] = cid
        insert_accel_nodes(g, infos)
        options = enumerate_options(g, g.find(root), option_cap)
        bare = options[0]
        from ..plan import digest
        bare_s = costs.bare_seconds(bare, digest(analysis.plans[qid]))
        rows = []
        for option in options:
            total, _ = _score_option(option, bindings, costs, bare, bare_s,
                                     qid)
            used = frozenset(call_to_cand[n.call_id]
                             for n in walk_plan(option)
                             if isinstance(n, AcceleratorCall))
            rows.append((used, total))
        tables[qid] = rows
    return tables
