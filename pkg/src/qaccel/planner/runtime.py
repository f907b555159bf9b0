"""Bare-query run-time source: measured-and-cached, with optional
multiplicative error injection for robustness studies."""

from __future__ import annotations

import hashlib
import math
import time

from ..plan import LogicalPlan, digest
from ..sql import unparse


class BareRuntimeSource:
    """Run times of unaccelerated queries.

    Priority: explicit observations (workload log), then the memo of
    previous measurements, then a timed run on the adapter.  When
    ``error_q`` > 1, every reading is multiplied by a deterministic
    per-query factor drawn log-uniformly from [1/q, q].
    """

    def __init__(self, adapter, observed: dict | None = None,
                 error_q: float = 1.0, error_seed: int = 0):
        self.adapter = adapter
        self.observed = dict(observed or {})
        self.cache: dict[str, float] = {}
        self.error_q = error_q
        self.error_seed = error_seed

    def _inject(self, key: str, seconds: float) -> float:
        if self.error_q <= 1.0:
            return seconds
        h = hashlib.sha256(f"{self.error_seed}:{key}".encode()).digest()
        u = int.from_bytes(h[:8], "big") / 2**64  # deterministic per query
        factor = math.exp((2 * u - 1) * math.log(self.error_q))
        return seconds * factor

    def true_seconds(self, plan: LogicalPlan, key: str | None = None) -> float:
        key = key or digest(plan)
        if key in self.observed:
            return max(self.observed[key], 1e-6)
        if key not in self.cache:
            sql = unparse(plan)
            best = float("inf")
            for _ in range(2):  # discard cold-start noise
                t0 = time.perf_counter()
                self.adapter.submit(sql)
                best = min(best, time.perf_counter() - t0)
            self.cache[key] = max(best, 1e-6)
        return self.cache[key]

    def bare_seconds(self, plan: LogicalPlan, key: str | None = None) -> float:
        key = key or digest(plan)
        return self._inject(key, self.true_seconds(plan, key))

    def record(self, key: str, seconds: float):
        self.cache[key] = max(seconds, 1e-6)
