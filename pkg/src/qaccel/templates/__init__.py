from .constructs import (BOOL_EXPR, COLUMN_EXPR, COLUMN_REF, INSTANTIATION_TIME,
                         RUN_TIME, TABLE_EXPR, TABLE_REF, Alternation, Hole,
                         Instantiation, LeafToken, PlanTemplate,
                         RepInstanceBinding, Repetition, TreeToken,
                         TypedVariable, instantiation_digest,
                         instantiation_from_json, instantiation_to_json,
                         template_from_json, template_to_json)
from .nfta import Nfta, Transition, accepts_tree, compile_rte, compile_template
from .rte import (RAlt, RConcat, RHole, RLeaf, RNode, RStar, RWild,
                  lower_to_rte, rte_matches)

__all__ = [
    "BOOL_EXPR", "COLUMN_EXPR", "COLUMN_REF", "INSTANTIATION_TIME", "RUN_TIME",
    "TABLE_EXPR", "TABLE_REF", "Alternation", "Hole", "Instantiation",
    "LeafToken", "PlanTemplate", "RepInstanceBinding", "Repetition",
    "TreeToken", "TypedVariable", "instantiation_digest",
    "instantiation_from_json", "instantiation_to_json", "template_from_json",
    "template_to_json", "Nfta", "Transition", "accepts_tree", "compile_rte",
    "compile_template", "RAlt", "RConcat", "RHole", "RLeaf", "RNode", "RStar",
    "RWild", "lower_to_rte", "rte_matches",
]
