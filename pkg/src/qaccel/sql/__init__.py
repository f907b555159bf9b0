from .parser import parse
from .unparser import unparse
from .workload import WorkloadEntry, read_workload_log, write_workload_log

__all__ = ["parse", "unparse", "WorkloadEntry",
           "read_workload_log", "write_workload_log"]
