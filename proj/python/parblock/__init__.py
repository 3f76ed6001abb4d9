"""Python access to the parblock simulator: dependency graphs, simulated runs
and ledger audits."""

from ._parblock import (
    ConfigError,
    InfeasibleWorkload,
    Operation,
    conflicts,
    dependency_edges,
    generate_workload,
    run,
    sweep,
    verify_ledger,
    verify_run,
)

__all__ = [
    "ConfigError",
    "InfeasibleWorkload",
    "Operation",
    "conflicts",
    "dependency_edges",
    "generate_workload",
    "run",
    "sweep",
    "verify_ledger",
    "verify_run",
]
