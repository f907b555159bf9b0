"""Accelerator API: template + build + run, instances, and state files.

An accelerator declares the plan fragments it can compute (a template with
a validator), precomputes per-instance state in ``build``, and answers
matched fragments in ``run``.  ``run`` output must equal the reference
executor on the matched fragment for every valid instantiation; that
contract is enforced by the test suite across randomized instantiations.
"""

from __future__ import annotations

import json
import pickle
import struct
from dataclasses import dataclass, field

from ..errors import QaccelError, StaleState
from ..plan import LogicalPlan
from ..templates import (Instantiation, PlanTemplate, instantiation_digest,
                         instantiation_to_json, instantiation_from_json)
from ..types import Catalog, EngineContext


@dataclass
class AccelContext:
    """Everything build/run may consult about the backing engine."""
    catalog: Catalog
    adapter: object                  # engine adapter (submit/import/export)
    engine: EngineContext = field(default_factory=EngineContext)
    generation: int = 0              # data generation; bumped on reload


class Accelerator:
    """Base class for accelerators.  Subclasses define:

    - ``accel_id``: stable identifier
    - ``template()``: the pattern + validator
    - ``build(inst, ctx) -> state``
    - ``run(state, inst, input_batch, ctx) -> ColumnarBatch``
    - ``fragment_plan(inst) -> LogicalPlan`` reconstructing the matched
      fragment (used for oracle checks and cost estimation)
    - ``estimate_state_bytes(inst, catalog)`` for pre-build sizing
    """

    accel_id: str = "abstract"
    midplan: bool = False            # True when run() consumes input batches

    def template(self) -> PlanTemplate:
        raise NotImplementedError

    def validate(self, inst: Instantiation, catalog: Catalog) -> bool:
        tpl = self.template()
        if tpl.validator is None:
            return True
        try:
            return bool(tpl.validator(inst, catalog))
        except QaccelError:
            return False

    def build(self, inst: Instantiation, ctx: AccelContext):
        raise NotImplementedError

    def run(self, state, inst: Instantiation, input_batch, ctx: AccelContext):
        raise NotImplementedError

    def fragment_plan(self, inst: Instantiation) -> LogicalPlan:
        raise NotImplementedError

    def estimate_state_bytes(self, inst: Instantiation, catalog: Catalog) -> int:
        return 1024

    # instantiation-time identity: everything except run-time variables,
    # plus any accelerator-specific derived bindings
    def instantiation_key(self, inst: Instantiation) -> Instantiation:
        tpl = self.template()
        runtime_names = {v.name for v in tpl.variables()
                         if v.resolution == "runtime"}
        fixed = Instantiation(inst.template,
                              {k: v for k, v in inst.variables.items()
                               if k not in runtime_names},
                              dict(inst.alternations),
                              {name: [type(b)(dict(b.variables),
                                              dict(b.alternations))
                                      for b in insts]
                               for name, insts in inst.repetitions.items()})
        extra = self.derived_bindings(inst)
        if extra:
            fixed.variables.update(extra)
        return fixed

    def derived_bindings(self, inst: Instantiation) -> dict:
        """Extra instantiation-time identity derived from run-time values
        (e.g. the indexed column of a sargable predicate)."""
        return {}

    def instance_digest(self, inst: Instantiation) -> str:
        return instantiation_digest(self.instantiation_key(inst))

    def compatible(self, fixed: Instantiation, candidate: Instantiation) -> bool:
        """Does a fresh match's instantiation agree with a built instance?"""
        return instantiation_digest(self.instantiation_key(candidate)) == \
            instantiation_digest(fixed)


@dataclass
class AcceleratorInstance:
    instance_id: str
    accel_id: str
    fixed: Instantiation             # instantiation-time identity bindings
    sample: Instantiation            # one full instantiation (for build)
    state: object = None
    size_bytes: int = 0
    stale: bool = False
    built_generation: int = -1

    def check_fresh(self, ctx: AccelContext):
        if self.stale or self.built_generation != ctx.generation:
            raise StaleState(
                f"instance {self.instance_id} is stale "
                f"(built at generation {self.built_generation}, "
                f"data at {ctx.generation})")


def measure_size(state) -> int:
    """Deep byte size of built state: its serialized form."""
    return len(pickle.dumps(state, protocol=pickle.HIGHEST_PROTOCOL))


MAGIC = b"QACSTATE"
VERSION = 1


def save_state(path, instance: AcceleratorInstance):
    """Versioned container: magic, version, JSON header, pickled state."""
    payload = pickle.dumps(instance.state, protocol=pickle.HIGHEST_PROTOCOL)
    header = json.dumps({
        "accel_id": instance.accel_id,
        "instance_id": instance.instance_id,
        "digest": instantiation_digest(instance.fixed),
        "fixed": instantiation_to_json(instance.fixed),
        "sample": instantiation_to_json(instance.sample),
        "size_bytes": instance.size_bytes,
        "built_generation": instance.built_generation,
        "stale": instance.stale,
    }).encode()
    with open(path, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<HI", VERSION, len(header)))
        f.write(header)
        f.write(struct.pack("<Q", len(payload)))
        f.write(payload)


def load_state(path) -> AcceleratorInstance:
    with open(path, "rb") as f:
        magic = f.read(len(MAGIC))
        if magic != MAGIC:
            raise QaccelError(f"{path}: not an accelerator state file")
        version, hlen = struct.unpack("<HI", f.read(6))
        if version != VERSION:
            raise QaccelError(f"{path}: unsupported state version {version}")
        header = json.loads(f.read(hlen).decode())
        (plen,) = struct.unpack("<Q", f.read(8))
        state = pickle.loads(f.read(plen))
    inst = AcceleratorInstance(
        instance_id=header["instance_id"],
        accel_id=header["accel_id"],
        fixed=instantiation_from_json(header["fixed"]),
        sample=instantiation_from_json(header["sample"]),
        state=state,
        size_bytes=header["size_bytes"],
        stale=header.get("stale", False),
        built_generation=header.get("built_generation", -1),
    )
    return inst
