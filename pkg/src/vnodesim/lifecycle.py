"""Process model: trust classes, lifecycle states, adj scores, node routing.

Trust is a static install-time label. It decides the node a process lives
on: trusted apps go to node 0, untrusted apps to the highest-numbered node,
and a single-node layout collapses both to node 0. Lifecycle state maps to
an adj kill-priority score through a fixed (but overridable) table.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

from .topology import NodeTopology


class Trust(enum.Enum):
    OFFICIAL = "official"
    UNTRUSTED = "untrusted"


class LifecycleState(enum.Enum):
    FOREGROUND = "foreground"
    VISIBLE = "visible"
    PERCEPTIBLE = "perceptible"
    SERVICE = "service"
    HOME = "home"
    CACHED = "cached"
    EMPTY = "empty"


STATE_ORDER = (
    LifecycleState.FOREGROUND,
    LifecycleState.VISIBLE,
    LifecycleState.PERCEPTIBLE,
    LifecycleState.SERVICE,
    LifecycleState.HOME,
    LifecycleState.CACHED,
    LifecycleState.EMPTY,
)

DEFAULT_ADJ_TABLE: dict[LifecycleState, int] = {
    LifecycleState.FOREGROUND: 0,
    LifecycleState.VISIBLE: 1,
    LifecycleState.PERCEPTIBLE: 2,
    LifecycleState.SERVICE: 5,
    LifecycleState.HOME: 6,
    LifecycleState.CACHED: 9,
    LifecycleState.EMPTY: 15,
}


class DeadProcess(RuntimeError):
    pass


@dataclass
class Process:
    pid: int
    name: str
    trust: Trust
    state: LifecycleState
    adj: int
    alive: bool = True
    home_node: int = 0


@dataclass(frozen=True)
class AllocationRequest:
    """Anonymous allocation a freshly spawned process needs before it runs."""

    node: int
    count: int


def route(trust: Trust, topology: NodeTopology) -> int:
    """Trusted work lands on node 0; untrusted on the last node."""
    if trust is Trust.OFFICIAL:
        return 0
    return topology.num_nodes - 1


def spawn(pid: int, name: str, trust: Trust, initial_state: LifecycleState,
          initial_anon: int, topology: NodeTopology,
          adj_table: dict[LifecycleState, int] | None = None
          ) -> tuple[Process, AllocationRequest]:
    """Create a process record and the anon allocation it requires."""
    table = adj_table or DEFAULT_ADJ_TABLE
    node = route(trust, topology)
    proc = Process(pid=pid, name=name, trust=trust, state=initial_state,
                   adj=table[initial_state], home_node=node)
    return proc, AllocationRequest(node=node, count=initial_anon)


def set_state(proc: Process, state: LifecycleState,
              adj_table: dict[LifecycleState, int] | None = None) -> Process:
    """Move a live process to a new lifecycle state, updating adj with it."""
    if not proc.alive:
        raise DeadProcess(f"pid {proc.pid} ({proc.name}) is dead")
    table = adj_table or DEFAULT_ADJ_TABLE
    proc.state = state
    proc.adj = table[state]
    return proc
