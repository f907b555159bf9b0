from .base import (AccelContext, Accelerator, AcceleratorInstance, load_state,
                   measure_size, save_state)
from .cdf import CumulativeAggregates
from .domain_negation import DomainNegation
from .known_groupby import KnownGroupBy
from .ordered_index import OrderedIndex


def builtin_accelerators() -> dict:
    """The shipped accelerator library, keyed by id."""
    accels = [DomainNegation(), CumulativeAggregates(), OrderedIndex(),
              KnownGroupBy()]
    return {a.accel_id: a for a in accels}


__all__ = ["AccelContext", "Accelerator", "AcceleratorInstance", "load_state",
           "measure_size", "save_state", "DomainNegation",
           "CumulativeAggregates", "OrderedIndex", "KnownGroupBy",
           "builtin_accelerators"]
