"""Template-structured run-time model.

The model mirrors the accelerator's template: one encoder per variable
type, one per repetition, one per alternation, a shared inner-node net and
an output net.  Inference pools encoded construct vectors up the template
tree (average for token children, elementwise sum plus a count feature for
repetition instances, one-hot-tagged choice for alternations) and the root
vector maps to a log run time.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from ..cardinality import estimate_cardinality
from ..errors import ShapeMismatch
from ..plan import (ColumnRef, Filter, InnerJoin, LeftJoin, LogicalPlan,
                    digest, operator_histogram)
from ..schema import output_schema
from ..templates import (Alternation, Hole, Instantiation, LeafToken,
                         PlanTemplate, Repetition, TreeToken, TypedVariable,
                         template_to_json)
from ..templates.constructs import (BOOL_EXPR, COLUMN_EXPR, COLUMN_REF,
                                    TABLE_EXPR, TABLE_REF)
from ..types import Catalog, Kind
from .autograd import Var, backprop, concat, constant, mean_stack, sum_stack
from .mlp import Mlp, Momentum

HIST_DIM = 9  # one slot per plan operator kind

FEATURE_DIMS = {
    TABLE_EXPR: 2 + HIST_DIM,
    TABLE_REF: 2,
    BOOL_EXPR: 1,
    COLUMN_EXPR: 2,
    COLUMN_REF: 2,
}


# --- feature tree -----------------------------------------------------------


@dataclass
class FVar:
    vtype: str
    vec: np.ndarray


@dataclass
class FInner:
    children: list


@dataclass
class FAlt:
    name: str
    option: int
    n_options: int
    child: object


@dataclass
class FRep:
    name: str
    count: int
    instances: list


@dataclass
class FeatureTree:
    root: object
    flags: list = field(default_factory=list)


def _row_width(fields) -> float:
    total = 0.0
    for f in fields:
        total += 32.0 if f.ctype.kind == Kind.STRING else 8.0
    return total


def _plan_features(plan: LogicalPlan, catalog: Catalog) -> np.ndarray:
    card = estimate_cardinality(plan, catalog)
    try:
        width = _row_width(output_schema(plan, catalog))
    except Exception:
        width = 8.0
    hist = operator_histogram(plan)
    return np.log1p(np.array([card, width] + hist, dtype=np.float64))


def _column_stats(name: str, ctx_card: float, catalog: Catalog, flags):
    for t in catalog.tables.values():
        for c in t.columns:
            if c.name == name and c.distinct:
                return float(c.distinct)
    flags.append(f"no-distinct:{name}")
    return math.sqrt(max(ctx_card, 1.0))


def featurize(template: PlanTemplate, inst: Instantiation,
              catalog: Catalog) -> FeatureTree:
    """Construct-annotated feature tree for one instantiation.

    Run-time variables may be bound with planning-time values.  Missing
    statistics degrade to neutral defaults and are flagged.
    """
    flags: list = []

    def value_of(name, rep_binding):
        if rep_binding is not None and name in rep_binding.variables:
            return rep_binding.variables[name]
        return inst.variables.get(name)

    def choice_of(name, rep_binding):
        if rep_binding is not None and name in rep_binding.alternations:
            return rep_binding.alternations[name]
        return inst.alternations.get(name, 0)

    def reconstruct(construct, rep_binding) -> LogicalPlan | None:
        if isinstance(construct, TypedVariable):
            v = value_of(construct.name, rep_binding)
            return v if isinstance(v, LogicalPlan) else None
        if isinstance(construct, Alternation):
            return reconstruct(construct.options[choice_of(construct.name,
                                                           rep_binding)],
                               rep_binding)
        if isinstance(construct, TreeToken):
            kids = construct.children
            if construct.label == "Filter":
                child = reconstruct(kids[0], rep_binding)
                pred = value_of(getattr(kids[1], "name", ""), rep_binding)
                if child is not None and pred is not None:
                    return Filter(child, pred)
                return child
            if construct.label in ("InnerJoin", "LeftJoin"):
                l = reconstruct(kids[0], rep_binding)
                r = reconstruct(kids[1], rep_binding)
                if l is not None and r is not None:
                    from ..plan import TRUE
                    cls = InnerJoin if construct.label == "InnerJoin" else LeftJoin
                    return cls(l, r, TRUE)
                return l or r
            if construct.label == "GroupByAgg":
                return reconstruct(kids[0], rep_binding)
        return None

    def var_vec(var: TypedVariable, rep_binding, ctx_plan) -> np.ndarray:
        value = value_of(var.name, rep_binding)
        if var.vtype == TABLE_EXPR:
            if isinstance(value, LogicalPlan):
                return _plan_features(value, catalog)
            flags.append(f"unbound:{var.name}")
            return np.zeros(FEATURE_DIMS[TABLE_EXPR])
        if var.vtype == TABLE_REF:
            if isinstance(value, str) and catalog.has_table(value):
                meta = catalog.table(value)
                width = _row_width([c.as_field() for c in meta.columns])
                return np.log1p(np.array([meta.row_count, width]))
            flags.append(f"unbound:{var.name}")
            return np.zeros(FEATURE_DIMS[TABLE_REF])
        if var.vtype == BOOL_EXPR:
            if value is None or ctx_plan is None:
                flags.append(f"no-context:{var.name}")
                return np.array([0.5])
            base = estimate_cardinality(ctx_plan, catalog)
            kept = estimate_cardinality(Filter(ctx_plan, value), catalog)
            return np.array([min(1.0, kept / max(base, 1))])
        # column expression / reference
        card = (estimate_cardinality(ctx_plan, catalog)
                if ctx_plan is not None else 1.0)
        if ctx_plan is None:
            flags.append(f"no-context:{var.name}")
        name = value.name if isinstance(value, ColumnRef) else \
            value if isinstance(value, str) else None
        if name is not None:
            distinct = _column_stats(name, card, catalog, flags)
        else:
            distinct = math.sqrt(max(card, 1.0))
            flags.append(f"derived-distinct:{var.name}")
        return np.log1p(np.array([card, distinct], dtype=np.float64))

    def walk(construct, rep_binding, ctx_plan):
        if isinstance(construct, Hole):
            return None
        if isinstance(construct, TypedVariable):
            return FVar(construct.vtype, var_vec(construct, rep_binding,
                                                 ctx_plan))
        if isinstance(construct, LeafToken):
            return FInner([])
        if isinstance(construct, TreeToken):
            kids = construct.children
            contexts = [ctx_plan] * len(kids)
            if construct.label == "Filter" and len(kids) == 2:
                contexts[1] = reconstruct(kids[0], rep_binding) or ctx_plan
            elif construct.label in ("InnerJoin", "LeftJoin") and len(kids) == 3:
                contexts[2] = reconstruct(construct, rep_binding) or ctx_plan
            elif construct.label == "GroupByAgg":
                inner = reconstruct(kids[0], rep_binding) or ctx_plan
                contexts = [ctx_plan] + [inner] * (len(kids) - 1)
            out = []
            for k, c in zip(kids, contexts):
                node = walk(k, rep_binding, c)
                if node is not None:
                    out.append(node)
            return FInner(out)
        if isinstance(construct, Alternation):
            opt = choice_of(construct.name, rep_binding)
            child = walk(construct.options[opt], rep_binding, ctx_plan)
            return FAlt(construct.name, opt, len(construct.options), child)
        if isinstance(construct, Repetition):
            bindings = inst.repetitions.get(construct.name, [])
            instances = []
            for b in bindings:
                node = walk(construct.body, b, ctx_plan)
                if node is not None:
                    instances.append(node)
            if not isinstance(construct.base, LeafToken):
                node = walk(construct.base, rep_binding, ctx_plan)
                if node is not None:
                    instances.append(node)
            return FRep(construct.name, len(bindings), instances)
        raise ShapeMismatch(f"unexpected construct {construct!r}")

    root = walk(template.root, None, None)
    return FeatureTree(root, flags)


# --- the model ---------------------------------------------------------------


class TemplateCostModel:
    def __init__(self, template: PlanTemplate, hidden: int = 32, seed: int = 0):
        self.template = template
        self.hidden = hidden
        self.seed = seed
        self.template_digest = digest(template_to_json(template.root))
        rng = np.random.default_rng(seed)
        h = hidden
        self.encoders: dict[str, Mlp] = {}
        for vtype in sorted({v.vtype for v in template.variables()}):
            self.encoders[vtype] = Mlp(f"enc/{vtype}", FEATURE_DIMS[vtype],
                                       h, h, rng)
        self.rep_nets: dict[str, Mlp] = {}
        for rep in template.repetitions():
            self.rep_nets[rep.name] = Mlp(f"rep/{rep.name}", h + 1, h, h, rng)
        self.alt_nets: dict[str, Mlp] = {}
        self.alt_width: dict[str, int] = {}
        for alt in template.alternations():
            self.alt_nets[alt.name] = Mlp(f"alt/{alt.name}",
                                          h + len(alt.options), h, h, rng)
            self.alt_width[alt.name] = len(alt.options)
        self.inner = Mlp("inner", h, h, h, rng)
        self.output = Mlp("output", h, 1, h, rng)

    def mlp_count(self) -> int:
        return len(self.encoders) + len(self.rep_nets) + len(self.alt_nets) + 2

    def params(self) -> dict[str, Var]:
        out = {}
        for m in list(self.encoders.values()) + list(self.rep_nets.values()) \
                + list(self.alt_nets.values()) + [self.inner, self.output]:
            out.update(m.params)
        return out

    # --- inference ---

    def _eval(self, node) -> Var:
        if isinstance(node, FVar):
            return self.encoders[node.vtype](constant(node.vec))
        if isinstance(node, FInner):
            pooled = mean_stack([self._eval(c) for c in node.children],
                                self.hidden)
            return self.inner(pooled)
        if isinstance(node, FAlt):
            onehot = np.zeros(self.alt_width[node.name])
            onehot[node.option] = 1.0
            child = self._eval(node.child) if node.child is not None \
                else constant(np.zeros(self.hidden))
            return self.alt_nets[node.name](concat([child, constant(onehot)]))
        if isinstance(node, FRep):
            pooled = sum_stack([self._eval(c) for c in node.instances],
                               self.hidden)
            return self.rep_nets[node.name](
                concat([pooled, constant([float(node.count)])]))
        raise ShapeMismatch(f"feature node {node!r} does not fit this model")

    def predict_log(self, ftree: FeatureTree) -> Var:
        return self.output(self._eval(ftree.root))

    def predict(self, ftree: FeatureTree) -> float:
        """Predicted run time in seconds; strictly positive."""
        with np.errstate(over="ignore", invalid="ignore"):
            return float(np.exp(self.predict_log(ftree).value[0]))

    # --- parameter plumbing ---

    def param_vector(self) -> np.ndarray:
        ps = self.params()
        return np.concatenate([ps[k].value.ravel() for k in sorted(ps)])

    def set_param_vector(self, vec: np.ndarray):
        ps = self.params()
        off = 0
        for k in sorted(ps):
            n = ps[k].value.size
            ps[k].value = vec[off:off + n].reshape(ps[k].value.shape).copy()
            off += n

    def grad_vector(self) -> np.ndarray:
        ps = self.params()
        out = []
        for k in sorted(ps):
            g = ps[k].grad
            out.append((np.zeros_like(ps[k].value) if g is None else g).ravel())
        return np.concatenate(out)

    def loss_and_grad(self, samples) -> tuple[float, np.ndarray]:
        """Mean squared error in log space over (ftree, seconds) samples."""
        ps = self.params()
        for v in ps.values():
            v.grad = None
        total = 0.0
        n = len(samples)
        with np.errstate(over="ignore", invalid="ignore"):
            for ftree, seconds in samples:
                out = self.predict_log(ftree)
                diff = out.value[0] - math.log(seconds)
                total += diff * diff / n
                backprop(out, seed_grad=np.array([2.0 * diff / n]))
        return total, self.grad_vector()


def q_error(predicted: float, actual: float) -> float:
    predicted = max(predicted, 1e-12)
    actual = max(actual, 1e-12)
    if not math.isfinite(predicted):
        return 1e12  # a diverged model scores as terribly as possible
    return min(max(predicted / actual, actual / predicted), 1e12)


def _quantile(values, q):
    if not values:
        return float("nan")
    return float(np.quantile(np.array(values, dtype=np.float64), q))


@dataclass
class TrainReport:
    epochs: int
    restarts: int
    test_p50_q: float
    test_p90_q: float
    baseline_p50_q: float
    baseline_p90_q: float
    metrics: list = field(default_factory=list)  # (epoch, loss, val p50, p90)

    def metrics_csv(self) -> str:
        lines = ["epoch,train_loss,val_p50_qerror,val_p90_qerror"]
        for row in self.metrics:
            lines.append(",".join(f"{x:.6g}" for x in row))
        return "\n".join(lines) + "\n"


@dataclass
class TrainConfig:
    lr: float = 2e-3
    momentum: float = 0.9
    batch_size: int = 16
    max_epochs: int = 60
    patience: int = 10
    seed: int = 0
    max_restarts: int = 3


def train(model: TemplateCostModel, dataset, config: TrainConfig | None = None
          ) -> TrainReport:
    """Fit on an 80/10/10 split; MSE in log space; early stopping on the
    validation median Q-error; NaN loss halves the rate and restarts."""
    config = config or TrainConfig()
    if len(dataset) < 10:
        raise ShapeMismatch("dataset too small to split 80/10/10")
    rng = np.random.default_rng(config.seed)
    order = rng.permutation(len(dataset))
    n = len(dataset)
    n_train = int(n * 0.8)
    n_val = int(n * 0.1)
    train_set = [dataset[i] for i in order[:n_train]]
    val_set = [dataset[i] for i in order[n_train:n_train + n_val]]
    test_set = [dataset[i] for i in order[n_train + n_val:]]

    init_vec = model.param_vector()
    lr = config.lr
    restarts = 0
    report_metrics = []
    best_vec, best_q = None, float("inf")
    epoch_total = 0

    while True:
        params = model.params()
        opt = Momentum(params, lr=lr, beta=config.momentum)
        diverged = False
        since_best = 0
        for epoch in range(config.max_epochs):
            perm = rng.permutation(len(train_set))
            losses = []
            for start in range(0, len(train_set), config.batch_size):
                batch = [train_set[i]
                         for i in perm[start:start + config.batch_size]]
                opt.zero_grad()
                loss, _ = model.loss_and_grad(batch)
                losses.append(loss)
                opt.step()
            train_loss = float(np.mean(losses)) if losses else 0.0
            if not math.isfinite(train_loss):
                diverged = True
                break
            val_q = [q_error(model.predict(f), t) for f, t in val_set]
            p50, p90 = _quantile(val_q, 0.5), _quantile(val_q, 0.9)
            epoch_total += 1
            report_metrics.append((epoch_total, train_loss, p50, p90))
            if p50 < best_q - 1e-9:
                best_q = p50
                best_vec = model.param_vector()
                since_best = 0
            else:
                since_best += 1
                if since_best >= config.patience:
                    break
        if diverged and restarts < config.max_restarts:
            restarts += 1
            lr /= 2.0
            model.set_param_vector(init_vec)
            continue
        break

    if best_vec is not None:
        model.set_param_vector(best_vec)
    test_q = [q_error(model.predict(f), t) for f, t in test_set]
    train_labels = [t for _, t in train_set]
    geomean = float(np.exp(np.mean(np.log(np.maximum(train_labels, 1e-12)))))
    base_q = [q_error(geomean, t) for _, t in test_set]
    return TrainReport(
        epochs=epoch_total,
        restarts=restarts,
        test_p50_q=_quantile(test_q, 0.5),
        test_p90_q=_quantile(test_q, 0.9),
        baseline_p50_q=_quantile(base_q, 0.5),
        baseline_p90_q=_quantile(base_q, 0.9),
        metrics=report_metrics,
    )


# --- checkpoints ---------------------------------------------------------------


def save_checkpoint(model: TemplateCostModel, path):
    ps = model.params()
    doc = {
        "template_digest": model.template_digest,
        "hidden": model.hidden,
        "seed": model.seed,
        "weights": {k: v.value.tolist() for k, v in ps.items()},
    }
    with open(path, "w") as f:
        json.dump(doc, f)


def load_checkpoint(template: PlanTemplate, path) -> TemplateCostModel:
    with open(path) as f:
        doc = json.load(f)
    model = TemplateCostModel(template, hidden=doc["hidden"],
                              seed=doc.get("seed", 0))
    if doc["template_digest"] != model.template_digest:
        raise ShapeMismatch(
            "checkpoint was trained for a different template")
    ps = model.params()
    for k, v in doc["weights"].items():
        if k not in ps:
            raise ShapeMismatch(f"unknown parameter {k!r} in checkpoint")
        arr = np.asarray(v, dtype=np.float64)
        if arr.shape != ps[k].value.shape:
            raise ShapeMismatch(f"parameter {k!r} shape mismatch")
        ps[k].value = arr
    return model
