"""Command-line surface: load data, bootstrap training data, train models,
select instances offline, run queries, benchmark, explain, rebuild.

Exit codes: 0 ok, 2 config error, 3 adapter error, 4 correctness-check
failure (bench --verify).
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .accelerators import builtin_accelerators, load_state, save_state
from .adapters import MockTransferAdapter, OracleAdapter, SqliteAdapter
from .batch import ColumnarBatch
from .bootstrap import (generate_instance, label_instances, read_dataset,
                        slice_workload, write_dataset)
from .config import Config, load_config
from .errors import AdapterUnavailable, ConfigError, QaccelError
from .models import (TemplateCostModel, TrainConfig, featurize,
                     load_checkpoint, save_checkpoint, train)
from .planner import Planner
from .sql import parse, read_workload_log
from .store import load_store
from .types import Catalog, days_to_date, Kind

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ADAPTER = 3
EXIT_VERIFY = 4


def _open_store(cfg: Config):
    catalog = Catalog.from_json_file(cfg.catalog_path)
    return load_store(catalog, cfg.data_dir)


def _adapter_for(cfg: Config, store):
    if cfg.adapter == "oracle":
        return OracleAdapter(store)
    if cfg.adapter == "mock":
        return MockTransferAdapter(OracleAdapter(store),
                                   rate_bytes_per_s=cfg.mock_rate_bytes_per_s,
                                   floor_s=cfg.mock_floor_s)
    if cfg.adapter == "sqlite":
        return SqliteAdapter(store)
    raise ConfigError(f"unknown adapter {cfg.adapter!r}")


def _workload_plans(cfg: Config, store):
    entries = read_workload_log(cfg.workload_path)
    plans, observed = {}, {}
    for e in entries:
        plan = parse(e.sql, store.catalog, e.bindings)
        plans[e.template_id] = plan
        if e.observed_runtime_ms is not None:
            from .plan import digest
            observed[digest(plan)] = e.observed_runtime_ms / 1000.0
    return plans, observed


def _paths(cfg: Config):
    out = cfg.out_dir
    return {
        "out": out,
        "states": os.path.join(out, "states"),
        "models": os.path.join(out, "models"),
        "datasets": os.path.join(out, "datasets"),
        "metrics": os.path.join(out, "metrics"),
        "manifest": os.path.join(out, "manifest.json"),
        "traces": os.path.join(out, "traces.jsonl"),
        "budget_report": os.path.join(out, "budget_report.json"),
    }


def _ensure_dirs(paths):
    for key in ("out", "states", "models", "datasets", "metrics"):
        os.makedirs(paths[key], exist_ok=True)


def _load_models(cfg: Config, paths, accels):
    models = {}
    for aid, accel in accels.items():
        path = os.path.join(paths["models"], f"{aid}.json")
        if os.path.exists(path):
            models[aid] = load_checkpoint(accel.template(), path)
    return models


def _make_planner(cfg: Config, store, with_models=True) -> Planner:
    adapter = _adapter_for(cfg, store)
    paths = _paths(cfg)
    accels = builtin_accelerators()
    models = _load_models(cfg, paths, accels) if with_models else {}
    _, observed = ({}, {})
    if os.path.exists(cfg.workload_path):
        try:
            _, observed = _workload_plans(cfg, store)
        except QaccelError:
            observed = {}
    planner = Planner(store, adapter=adapter, accels=accels, models=models,
                      strategy=cfg.strategy, cost_mode=cfg.cost_mode,
                      option_cap=cfg.option_cap, node_limit=cfg.node_limit,
                      iter_limit=cfg.iter_limit, observed_runtimes=observed,
                      error_q=cfg.error_q, error_seed=cfg.error_seed)
    state_dir = paths["states"]
    if os.path.isdir(state_dir):
        for fname in sorted(os.listdir(state_dir)):
            if fname.endswith(".state"):
                inst = load_state(os.path.join(state_dir, fname))
                planner.instances[inst.instance_id] = inst
    return planner


def _print_batch(batch: ColumnarBatch, limit=20):
    names = [f.name for f in batch.schema]
    print("\t".join(names))
    for r, row in enumerate(batch.to_rows()):
        if r >= limit:
            print(f"... ({batch.num_rows} rows total)")
            break
        cells = []
        for v, f in zip(row, batch.schema):
            if v is None:
                cells.append("NULL")
            elif f.ctype.kind == Kind.DATE:
                cells.append(days_to_date(v))
            elif f.ctype.kind == Kind.DECIMAL:
                s = f.ctype.scale
                cells.append(f"{v / 10**s:.{s}f}" if s else str(v))
            else:
                cells.append(str(v))
        print("\t".join(cells))


# --- commands ---------------------------------------------------------------


def cmd_load(cfg: Config, args) -> int:
    store = _open_store(cfg)
    paths = _paths(cfg)
    _ensure_dirs(paths)
    enriched = os.path.join(paths["out"], "catalog_with_stats.json")
    with open(enriched, "w") as f:
        json.dump(store.catalog.to_json(), f, indent=1)
    total = store.total_payload_bytes()
    for name in store.catalog.tables:
        if name in store.temp_names:
            continue
        b = store.get(name)
        print(f"{name}: {b.num_rows} rows, {b.payload_bytes()} bytes")
    print(f"total payload: {total} bytes")
    print(f"stats written to {enriched}")
    return EXIT_OK


def cmd_bootstrap(cfg: Config, args) -> int:
    store = _open_store(cfg)
    paths = _paths(cfg)
    _ensure_dirs(paths)
    plans, _ = _workload_plans(cfg, store)
    pool = slice_workload(list(plans.values()))
    adapter = _adapter_for(cfg, store)
    from .accelerators import AccelContext
    ctx = AccelContext(catalog=store.catalog, adapter=adapter,
                       generation=store.generation)
    rng = np.random.default_rng(cfg.seed)
    for aid, accel in builtin_accelerators().items():
        instances = []
        failures = 0
        while len(instances) < cfg.bootstrap_instances and failures < 50:
            try:
                instances.append(generate_instance(accel, store.catalog,
                                                   pool, rng))
            except QaccelError:
                failures += 1
        report = label_instances(accel, instances, ctx, rng,
                                 repeats=cfg.label_repeats)
        path = os.path.join(paths["datasets"], f"{aid}.csv")
        write_dataset(path, report.labeled)
        print(f"{aid}: {len(report.labeled)} labeled, "
              f"{len(report.build_failures)} skipped -> {path}")
    return EXIT_OK


def cmd_train(cfg: Config, args) -> int:
    store = _open_store(cfg)
    paths = _paths(cfg)
    _ensure_dirs(paths)
    for aid, accel in builtin_accelerators().items():
        data_path = os.path.join(paths["datasets"], f"{aid}.csv")
        if not os.path.exists(data_path):
            print(f"{aid}: no dataset, skipping")
            continue
        labeled = read_dataset(data_path)
        tpl = accel.template()
        samples = [(featurize(tpl, li.inst, store.catalog), li.seconds)
                   for li in labeled]
        if len(samples) < 10:
            print(f"{aid}: only {len(samples)} samples, skipping")
            continue
        model = TemplateCostModel(tpl, hidden=cfg.hidden, seed=cfg.seed)
        report = train(model, samples,
                       TrainConfig(max_epochs=cfg.max_epochs, seed=cfg.seed))
        ckpt = os.path.join(paths["models"], f"{aid}.json")
        save_checkpoint(model, ckpt)
        metrics = os.path.join(paths["metrics"], f"{aid}_training.csv")
        with open(metrics, "w") as f:
            f.write(report.metrics_csv())
        print(f"{aid}: test p50 q-error {report.test_p50_q:.3f} "
              f"(geomean baseline {report.baseline_p50_q:.3f}), "
              f"p90 {report.test_p90_q:.3f} -> {ckpt}")
    return EXIT_OK


def cmd_plan_offline(cfg: Config, args) -> int:
    store = _open_store(cfg)
    paths = _paths(cfg)
    _ensure_dirs(paths)
    plans, _ = _workload_plans(cfg, store)
    planner = _make_planner(cfg, store)
    budget = cfg.budget_bytes(store.total_payload_bytes())
    report = planner.select_instances(plans, budget)
    for fname in os.listdir(paths["states"]):
        if fname.endswith(".state"):
            os.unlink(os.path.join(paths["states"], fname))
    for iid, instance in planner.instances.items():
        safe = iid.replace(":", "_").replace("/", "_")
        save_state(os.path.join(paths["states"], f"{safe}.state"), instance)
    manifest = report.manifest(planner.instances)
    with open(paths["manifest"], "w") as f:
        json.dump(manifest, f, indent=1)
    with open(paths["budget_report"], "w") as f:
        json.dump({
            "budget_bytes": budget,
            "measured_bytes": report.measured_bytes,
            "chosen": report.chosen,
            "evicted": report.evicted,
            "steps": [{"candidate": s.candidate_id,
                       "benefit_per_byte": s.benefit_per_byte,
                       "size_bytes": s.size_bytes,
                       "budget_left": s.budget_left}
                      for s in (report.selection.steps
                                if report.selection else [])],
        }, f, indent=1)
    print(f"selected {len(report.chosen)} of {report.candidate_count} "
          f"candidates, {report.measured_bytes} bytes "
          f"(budget {budget:.0f}) -> {paths['manifest']}")
    return EXIT_OK


def cmd_run(cfg: Config, args) -> int:
    store = _open_store(cfg)
    planner = _make_planner(cfg, store)
    plan = parse(args.sql, store.catalog)
    out, trace = planner.run(plan)
    _print_batch(out, limit=args.limit)
    doc = trace.to_json()
    eplan = planner.plan(plan)
    doc["options_considered"] = len(eplan.considered)
    doc["options"] = [{"digest": d, "predicted_s": t, "accelerator_calls": n}
                      for d, t, n in eplan.considered]
    doc["predicted_components_s"] = eplan.breakdown
    doc["predicted_bare_s"] = eplan.predicted_bare
    print(json.dumps(doc, indent=1))
    paths = _paths(cfg)
    if os.path.isdir(paths["out"]):
        with open(paths["traces"], "a") as f:
            f.write(json.dumps(doc) + "\n")
    return EXIT_OK


def cmd_bench(cfg: Config, args) -> int:
    store = _open_store(cfg)
    planner = _make_planner(cfg, store)
    plans, _ = _workload_plans(cfg, store)
    report = planner.bench(plans, verify=args.verify, repeats=args.repeats)
    paths = _paths(cfg)
    trace_rows = []
    for r in report.rows:
        flag = ""
        if r.fallback:
            flag = " [fallback]"
        ver = "" if r.verified is None else \
            (" ok" if r.verified else " MISMATCH")
        print(f"{r.query_id}: bare {r.bare_seconds*1000:.2f} ms, "
              f"planned {r.planned_seconds*1000:.2f} ms, "
              f"speedup {r.speedup:.2f}x"
              f"{' (accelerated)' if r.used_accelerators else ''}{flag}{ver}")
        trace_rows.append({
            "query": r.query_id, "bare_s": r.bare_seconds,
            "planned_s": r.planned_seconds, "speedup": r.speedup,
            "accelerated": r.used_accelerators, "fallback": r.fallback,
            "verified": r.verified, "planning_s": r.planning_seconds,
        })
    print(f"geomean speedup: {report.geomean_speedup:.3f}x")
    if os.path.isdir(paths["out"]):
        with open(paths["traces"], "a") as f:
            for row in trace_rows:
                f.write(json.dumps(row) + "\n")
    if args.verify and report.mismatches:
        print(f"{report.mismatches} result mismatches", file=sys.stderr)
        return EXIT_VERIFY
    return EXIT_OK


def cmd_explain(cfg: Config, args) -> int:
    store = _open_store(cfg)
    planner = _make_planner(cfg, store)
    plan = parse(args.sql, store.catalog)
    from .egraph import dump, from_plan, saturate
    g, root = from_plan(plan)
    res = saturate(g, planner.rules, store.catalog,
                   node_limit=cfg.node_limit, iter_limit=cfg.iter_limit)
    print(f"saturation: {res.iterations} iterations, "
          f"{g.class_count()} classes, {g.node_count()} nodes, "
          f"{'fixpoint' if res.reached_fixpoint else 'limit hit'}")
    if args.egraph:
        print(dump(g))
    if args.matches:
        for aid in planner.accels:
            for inst, mr in planner.templates.matches_on(g, aid,
                                                         store.catalog):
                print(f"match: {aid} at class {mr.root}")
                for name, value in sorted(inst.variables.items()):
                    print(f"  {name} = {value}")
                for name, insts in sorted(inst.repetitions.items()):
                    print(f"  {name} x{len(insts)}")
    eplan = planner.plan(plan)
    print(f"options considered: {len(eplan.considered)}")
    for od, total, n_calls in eplan.considered:
        print(f"  option {od}: predicted {total*1000:.3f} ms, "
              f"{n_calls} accelerator call(s)")
    print(f"chosen: predicted {eplan.predicted_total*1000:.3f} ms "
          f"(bare {eplan.predicted_bare*1000:.3f} ms), "
          f"accelerated={eplan.uses_accelerators}")
    return EXIT_OK


def cmd_rebuild(cfg: Config, args) -> int:
    store = _open_store(cfg)
    planner = _make_planner(cfg, store)
    planner.rebuild()
    paths = _paths(cfg)
    _ensure_dirs(paths)
    for iid, instance in planner.instances.items():
        safe = iid.replace(":", "_").replace("/", "_")
        save_state(os.path.join(paths["states"], f"{safe}.state"), instance)
    print(f"rebuilt {len(planner.instances)} instance(s)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="qaccel",
        description="external query planner with pluggable accelerators")
    p.add_argument("--config", "-c", default=None, help="TOML config file")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("load", help="ingest CSVs and compute statistics")
    sub.add_parser("bootstrap", help="generate labeled training datasets")
    sub.add_parser("train", help="fit run-time models from the datasets")
    sub.add_parser("plan-offline",
                   help="select accelerator instances under the budget")
    run_p = sub.add_parser("run", help="plan and execute one query")
    run_p.add_argument("--sql", required=True)
    run_p.add_argument("--limit", type=int, default=20)
    bench_p = sub.add_parser("bench", help="replay the workload log")
    bench_p.add_argument("--verify", action="store_true",
                         help="check results against the bare engine")
    bench_p.add_argument("--repeats", type=int, default=1)
    exp_p = sub.add_parser("explain", help="diagnostics for one query")
    exp_p.add_argument("--sql", required=True)
    exp_p.add_argument("--egraph", action="store_true")
    exp_p.add_argument("--matches", action="store_true")
    sub.add_parser("rebuild", help="rebuild accelerator state after a reload")
    return p


COMMANDS = {
    "load": cmd_load,
    "bootstrap": cmd_bootstrap,
    "train": cmd_train,
    "plan-offline": cmd_plan_offline,
    "run": cmd_run,
    "bench": cmd_bench,
    "explain": cmd_explain,
    "rebuild": cmd_rebuild,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except AdapterUnavailable as exc:
        print(f"adapter error: {exc}", file=sys.stderr)
        return EXIT_ADAPTER
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
