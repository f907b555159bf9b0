from .core import EGraph, ENode, from_plan, dump
from .rules import (RewriteRule, SaturationResult, default_rules,
                    project_filter_swap_rule, saturate)
from .terms import Term, decode, decode_expr, decode_plan, encode_expr, encode_plan

__all__ = ["EGraph", "ENode", "from_plan", "dump", "RewriteRule",
           "SaturationResult", "default_rules", "project_filter_swap_rule",
           "saturate", "Term", "decode", "decode_expr", "decode_plan",
           "encode_expr", "encode_plan"]
