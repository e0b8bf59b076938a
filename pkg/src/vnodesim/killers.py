"""The two kill mechanisms: the low-memory killer and the OOM killer.

Both are pure selection functions over pool and process state; the engine
decides when to consult them and owns the kill log. The LMK compares free
and file counts in scope against a threshold ladder; the OOM killer ranks
processes by a badness score and is a last resort after a failed
allocation.
"""

from __future__ import annotations

from dataclasses import dataclass

from .frames import FramePool, free_frames
from .lifecycle import DeadProcess, Process

GLOBAL_SCOPE = "global"
PER_NODE_SCOPE = "per_node"

# Baseline ladder for a 2 GiB pool: the top rung is 85760 frames (335 MiB),
# the level at which memory killers start firing in the stress scenario.
DEFAULT_MINFREE = (2048, 4096, 8192, 16384, 32768, 85760)
DEFAULT_ADJ_LADDER = (15, 9, 6, 5, 2, 0)


class KillerConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LmkConfig:
    minfree: tuple[int, ...] = DEFAULT_MINFREE
    adj_ladder: tuple[int, ...] = DEFAULT_ADJ_LADDER
    scope: str = GLOBAL_SCOPE

    def __post_init__(self):
        if len(self.minfree) != len(self.adj_ladder):
            raise KillerConfigError("minfree and adj_ladder lengths differ")
        if any(a >= b for a, b in zip(self.minfree, self.minfree[1:])):
            raise KillerConfigError("minfree must be strictly ascending")
        if any(a <= b for a, b in zip(self.adj_ladder, self.adj_ladder[1:])):
            raise KillerConfigError("adj_ladder must be strictly descending")
        if self.scope not in (GLOBAL_SCOPE, PER_NODE_SCOPE):
            raise KillerConfigError(f"unknown scope {self.scope!r}")


@dataclass(frozen=True)
class KillRecord:
    tick: int
    killer: str               # "lmk" | "oomk"
    pid: int
    name: str
    adj: int
    frames_released: int
    scope: str                # "global" or "node<N>"


def _scope_counts(pool: FramePool, node: int | None) -> tuple[int, int]:
    if node is None:
        return sum(pool.free_count), sum(pool.file_count)
    return pool.free_count[node], pool.file_count[node]


def lmk_scan(pool: FramePool, processes: dict[int, Process], config: LmkConfig,
             node: int | None = None) -> int | None:
    """Pick the LMK victim pid for the given scope, or None.

    The ladder fires at the largest rung that both free and file counts sit
    below; its adj cutoff bounds the candidate set. Among candidates the
    highest adj wins, then the largest resident set, then the lowest pid.
    """
    free, file = _scope_counts(pool, node)
    min_adj = None
    for rung, adj in zip(reversed(config.minfree), reversed(config.adj_ladder)):
        if free < rung and file < rung:
            min_adj = adj
            break
    if min_adj is None:
        return None

    victim = None
    victim_key = None
    for pid, proc in processes.items():
        if not proc.alive or proc.adj < min_adj:
            continue
        anon, filecnt = pool.resident(pid, node)
        resident = anon + filecnt
        if resident <= 0:
            continue
        key = (proc.adj, resident, -pid)
        if victim_key is None or key > victim_key:
            victim, victim_key = pid, key
    return victim


def oom_badness(pool: FramePool, proc: Process, node: int | None = None) -> int:
    """Badness = resident frames in scope times 2^adj (adj clamped to 0..15)."""
    if not proc.alive:
        raise DeadProcess(f"pid {proc.pid} ({proc.name}) is dead")
    anon, file = pool.resident(proc.pid, node)
    adj = min(15, max(0, proc.adj))
    return (anon + file) * (1 << adj)


def oomk_select(pool: FramePool, processes: dict[int, Process],
                node: int | None = None) -> int | None:
    """Highest-badness live process with resident frames in scope, or None."""
    victim = None
    victim_key = None
    for pid, proc in processes.items():
        if not proc.alive:
            continue
        anon, file = pool.resident(pid, node)
        if anon + file <= 0:
            continue
        score = oom_badness(pool, proc, node)
        key = (score, -pid)
        if victim_key is None or key > victim_key:
            victim, victim_key = pid, key
    return victim


def execute_kill(pool: FramePool, proc: Process, lru, tick: int, killer: str,
                 scope: str) -> KillRecord:
    """Free every frame the process holds and mark it dead."""
    if not proc.alive:
        raise DeadProcess(f"pid {proc.pid} ({proc.name}) is dead")
    owned = pool.owned_frames(proc.pid)
    free_frames(pool, owned, lru=lru)
    proc.alive = False
    return KillRecord(tick=tick, killer=killer, pid=proc.pid, name=proc.name,
                      adj=proc.adj, frames_released=len(owned), scope=scope)
