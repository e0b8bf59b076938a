"""Deterministic simulator of a virtual-node partitioned memory subsystem.

The package models an Android-flavored memory stack: physical frames split
into virtual nodes, per-node LRU page reclamation with no swap path,
lifecycle-driven kill priorities, the low-memory and out-of-memory killers,
and a tick-based engine that replays scripted workloads into CSV traces,
summaries, and figures.
"""

from .engine import LatencyModel, MetricsReport, Simulation, run
from .frames import FramePool, Watermarks, alloc_frames, free_frames, free_report, pool_init
from .killers import KillRecord, LmkConfig, execute_kill, lmk_scan, oom_badness, oomk_select
from .lifecycle import LifecycleState, Process, Trust, route, set_state, spawn
from .reclaim import LruState, ReclaimResult, background_step, shrink_node, touch
from .scenario import Scenario, builtin_scenario_path, emit_scenario, parse_scenario
from .topology import NodeTopology, VnodeRange, vnode_generation, vnode_set_cpumask, vnode_setup_memblock

__version__ = "0.1.0"

__all__ = [
    "FramePool", "KillRecord", "LatencyModel", "LifecycleState", "LmkConfig",
    "LruState", "MetricsReport", "NodeTopology", "Process", "ReclaimResult",
    "Scenario", "Simulation", "Trust", "VnodeRange", "Watermarks",
    "alloc_frames", "background_step", "builtin_scenario_path", "emit_scenario",
    "execute_kill", "free_frames", "free_report", "lmk_scan", "oom_badness",
    "oomk_select", "parse_scenario", "pool_init", "route", "run", "set_state",
    "shrink_node", "spawn", "touch", "vnode_generation", "vnode_set_cpumask",
    "vnode_setup_memblock",
]
