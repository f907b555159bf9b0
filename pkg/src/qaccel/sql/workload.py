"""Workload log: JSON-lines, one query observation per line."""

from __future__ import annotations

import json
from dataclasses import dataclass, field


@dataclass
class WorkloadEntry:
    template_id: str
    sql: str
    bindings: dict = field(default_factory=dict)
    observed_runtime_ms: float | None = None


def read_workload_log(path) -> list[WorkloadEntry]:
    entries = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if not line:
                continue
            doc = json.loads(line)
            entries.append(WorkloadEntry(
                template_id=doc.get("template_id", f"q{len(entries)}"),
                sql=doc["sql"],
                bindings=doc.get("bindings", {}),
                observed_runtime_ms=doc.get("observed_runtime_ms"),
            ))
    return entries


def write_workload_log(path, entries: list[WorkloadEntry]):
    with open(path, "w") as f:
        for e in entries:
            doc = {"template_id": e.template_id, "sql": e.sql,
                   "bindings": e.bindings}
            if e.observed_runtime_ms is not None:
                doc["observed_runtime_ms"] = e.observed_runtime_ms
            f.write(json.dumps(doc) + "\n")
