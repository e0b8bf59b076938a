"""Deterministic tick-driven simulation of a scenario.

Each tick runs in a fixed phase order:

  1. sample points due this tick (free timeline rows, then one low-memory
     killer consult per scope),
  2. scheduled events in declaration order (spawn, set_state, alloc_anon,
     file_io activation),
  3. active file streams in start order,
  4. one background reclaim step per node, ascending.

A single writeback budget is shared by every reclaim call within a tick.
Anonymous allocations are all-or-nothing; when one fails after direct
reclaim, the killers are consulted (LMK first, then the OOM killer, which
exists for exactly this no-memory-left moment) and the allocation retried
once. File streams instead degrade to whatever the node can supply and
count the shortfall as an allocation stall.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from . import frames as fr
from . import lifecycle as lc
from .frames import Allocated, FramePool, alloc_frames, free_report, pool_init
from .killers import GLOBAL_SCOPE, KillRecord, LmkConfig, execute_kill, lmk_scan, oomk_select
from .lifecycle import LifecycleState, Process, Trust
from .reclaim import LruState, background_step, shrink_node
from .scenario import EventSpec, Scenario, build_adj_table, build_topology, build_watermarks


class ScenarioError(RuntimeError):
    """Raised when a scenario cannot be executed as written."""


@dataclass(frozen=True)
class LatencyModel:
    """Models launch cost from allocation, reclaim, and kill work."""

    t_base: float = 50.0
    t_page: float = 0.002
    t_reclaim: float = 0.01
    t_kill: float = 200.0

    def launch_ms(self, frames_allocated: int, frames_reclaimed: int,
                  kills: int) -> float:
        return (self.t_base + self.t_page * frames_allocated +
                self.t_reclaim * frames_reclaimed + self.t_kill * kills)


@dataclass(frozen=True)
class LaunchRecord:
    tick: int
    name: str
    trust: str
    frames: int
    reclaimed: int
    kills: int
    failed: bool
    ms: float


@dataclass
class MetricsReport:
    scenario: Scenario
    seed: int
    samples: list[tuple[int, int, int, int, int]] = field(default_factory=list)
    reclaim_rows: list[tuple[int, int, int, int]] = field(default_factory=list)
    kills: list[KillRecord] = field(default_factory=list)
    launches: list[LaunchRecord] = field(default_factory=list)
    alloc_stalls: int = 0
    stalled_frames: int = 0
    total_reclaimed: int = 0
    total_written_back: int = 0
    applied_io_frames: int = 0
    final_free: dict = field(default_factory=dict)

    def kill_count(self, killer: str) -> int:
        return sum(1 for k in self.kills if k.killer == killer)

    def mean_launch_ms(self, trust: str) -> float | None:
        vals = [l.ms for l in self.launches if l.trust == trust and not l.failed]
        if not vals:
            return None
        return sum(vals) / len(vals)

    def launch_for(self, name: str) -> LaunchRecord | None:
        for rec in self.launches:
            if rec.name == name:
                return rec
        return None

    def final_free_frames(self) -> int:
        return self.final_free["global"]["free_frames"]


@dataclass
class _Stream:
    pid: int
    name: str
    node: int
    remaining: int
    rate: int
    jitter: int


class Simulation:
    """One scenario run owning all mutable state.

    check_invariants: 0 = off, 1 = counter-level checks at every sample,
    2 = additionally recount frames and queues (slow; small pools only).
    """

    def __init__(self, scenario: Scenario, check_invariants: int = 0):
        self.scenario = scenario
        self.check_invariants = check_invariants
        self.topology = build_topology(scenario)
        self.pool: FramePool = pool_init(self.topology, build_watermarks(scenario))
        self.lru = LruState(self.pool)
        self.adj_table = build_adj_table(scenario)
        self.lmk_config = LmkConfig(minfree=scenario.minfree,
                                    adj_ladder=scenario.adj_ladder,
                                    scope=scenario.lmk_scope)
        self.latency = LatencyModel(t_base=scenario.t_base_ms,
                                    t_page=scenario.t_page_ms,
                                    t_reclaim=scenario.t_reclaim_ms,
                                    t_kill=scenario.t_kill_ms)
        self.rng = random.Random(scenario.seed)
        self.processes: dict[int, Process] = {}
        self.pid_of: dict[str, int] = {}
        self.next_pid = 1
        self.streams: list[_Stream] = []
        self.report = MetricsReport(scenario=scenario, seed=scenario.seed)
        self.tick = 0
        self._budget = 0
        self._tick_reclaim: dict[int, list[int]] = {}

        # Apps declared in the scenario spawn at tick 0, ahead of any
        # scripted tick-0 events, in declaration order.
        events_by_tick: dict[int, list] = {}
        for app in scenario.apps:
            events_by_tick.setdefault(0, []).append(EventSpec(
                tick=0, action="spawn", name=app.name, trust=app.trust,
                state=app.state, frames=app.anon_frames))
        for ev in scenario.events:
            events_by_tick.setdefault(ev.tick, []).append(ev)
        self.events_by_tick = events_by_tick

    # -- bookkeeping -----------------------------------------------------------

    def _note_reclaim(self, node: int, reclaimed: int, written: int) -> None:
        if reclaimed == 0 and written == 0:
            return
        row = self._tick_reclaim.setdefault(node, [0, 0])
        row[0] += reclaimed
        row[1] += written
        self.report.total_reclaimed += reclaimed
        self.report.total_written_back += written
        self._budget -= written

    def _scope_nodes(self, alloc_node: int | None) -> tuple[int | None, str]:
        if self.lmk_config.scope == GLOBAL_SCOPE:
            return None, "global"
        node = alloc_node if alloc_node is not None else 0
        return node, f"node{node}"

    def _kill(self, pid: int, killer: str, scope_label: str) -> None:
        proc = self.processes[pid]
        rec = execute_kill(self.pool, proc, self.lru, self.tick, killer,
                           scope_label)
        self.report.kills.append(rec)

    def _consult_killers(self, alloc_node: int) -> int:
        """LMK first, then OOMK, after a failed anonymous allocation."""
        scope_node, label = self._scope_nodes(alloc_node)
        victim = lmk_scan(self.pool, self.processes, self.lmk_config, scope_node)
        killer = "lmk"
        if victim is None:
            victim = oomk_select(self.pool, self.processes, scope_node)
            killer = "oomk"
        if victim is None:
            return 0
        self._kill(victim, killer, label)
        return 1

    def _alloc_anon(self, pid: int, node: int, count: int) -> tuple[bool, int, int]:
        """All-or-nothing anon allocation with one kill-and-retry attempt.

        Returns (granted, frames_reclaimed, kills_triggered).
        """
        out = alloc_frames(self.pool, node, count, pid, fr.ANON,
                           lru=self.lru, writeback_budget=max(0, self._budget))
        self._note_reclaim(node, out.reclaimed, out.written_back)
        if isinstance(out, Allocated):
            return True, out.reclaimed, 0
        reclaimed = out.reclaimed
        kills = self._consult_killers(node)
        if kills == 0:
            return False, reclaimed, 0
        retry = alloc_frames(self.pool, node, count, pid, fr.ANON,
                             lru=self.lru, writeback_budget=max(0, self._budget))
        self._note_reclaim(node, retry.reclaimed, retry.written_back)
        reclaimed += retry.reclaimed
        return isinstance(retry, Allocated), reclaimed, kills

    # -- event handlers --------------------------------------------------------

    def _do_spawn(self, name: str, trust: Trust, state: LifecycleState,
                  anon_frames: int) -> None:
        if name in self.pid_of:
            raise ScenarioError(f"tick {self.tick}: app {name!r} already exists")
        pid = self.next_pid
        self.next_pid += 1
        proc, request = lc.spawn(pid, name, trust, state, anon_frames,
                                 self.topology, self.adj_table)
        granted, reclaimed, kills = True, 0, 0
        if request.count > 0:
            granted, reclaimed, kills = self._alloc_anon(pid, request.node,
                                                         request.count)
        if granted:
            self.processes[pid] = proc
            self.pid_of[name] = pid
        else:
            self.report.alloc_stalls += 1
            self.report.stalled_frames += request.count
        ms = self.latency.launch_ms(anon_frames if granted else 0, reclaimed,
                                    kills)
        self.report.launches.append(LaunchRecord(
            tick=self.tick, name=name, trust=trust.value, frames=anon_frames,
            reclaimed=reclaimed, kills=kills, failed=not granted, ms=ms))

    def _do_set_state(self, name: str, state: LifecycleState) -> None:
        pid = self.pid_of.get(name)
        if pid is None or not self.processes[pid].alive:
            return  # the app never launched or was killed; nothing to move
        lc.set_state(self.processes[pid], state, self.adj_table)

    def _do_alloc_anon(self, name: str, count: int) -> None:
        pid = self.pid_of.get(name)
        if pid is None or not self.processes[pid].alive:
            return
        node = self.processes[pid].home_node
        granted, _, _ = self._alloc_anon(pid, node, count)
        if not granted:
            self.report.alloc_stalls += 1
            self.report.stalled_frames += count

    def _do_file_io(self, ev) -> None:
        pid = self.pid_of.get(ev.name)
        if pid is None or not self.processes[pid].alive:
            raise ScenarioError(f"tick {self.tick}: file_io for app {ev.name!r} "
                                f"which is not running")
        node = self.processes[pid].home_node
        self.streams.append(_Stream(pid=pid, name=ev.name, node=node,
                                    remaining=ev.total_frames, rate=ev.rate_frames,
                                    jitter=ev.jitter_frames))

    def _step_stream(self, stream: _Stream) -> None:
        """Advance one file stream: allocate dirty pages at reclaimable pace."""
        if stream.remaining <= 0 or stream.rate <= 0:
            return
        if not self.processes[stream.pid].alive:
            stream.remaining = 0
            return
        rate = stream.rate
        if stream.jitter:
            rate = max(0, rate + self.rng.randint(-stream.jitter, stream.jitter))
        want = min(rate, stream.remaining)
        if want <= 0:
            return
        pool, node = self.pool, stream.node
        wm_min = pool.watermarks[node].min
        if pool.free_count[node] < want + wm_min:
            res = shrink_node(pool, self.lru, node,
                              want + wm_min - pool.free_count[node],
                              max(0, self._budget))
            self._note_reclaim(node, res.reclaimed, res.written_back)
        grant = min(want, pool.free_count[node] - wm_min)
        if grant > 0:
            out = alloc_frames(pool, node, grant, stream.pid, fr.FILE_DIRTY,
                               lru=self.lru)
            assert isinstance(out, Allocated)
            stream.remaining -= grant
            self.report.applied_io_frames += grant
        if grant < want:
            self.report.alloc_stalls += 1
            self.report.stalled_frames += want - grant

    # -- sampling and checks ---------------------------------------------------

    def _sample(self) -> None:
        pool = self.pool
        for node in range(pool.num_nodes):
            self.report.samples.append((self.tick, node, pool.free_count[node],
                                        pool.file_count[node],
                                        pool.anon_count[node]))
        if self.check_invariants:
            self._check()
        if self.lmk_config.scope == GLOBAL_SCOPE:
            victim = lmk_scan(pool, self.processes, self.lmk_config, None)
            if victim is not None:
                self._kill(victim, "lmk", "global")
        else:
            for node in range(pool.num_nodes):
                victim = lmk_scan(pool, self.processes, self.lmk_config, node)
                if victim is not None:
                    self._kill(victim, "lmk", f"node{node}")

    def _check(self) -> None:
        pool = self.pool
        for node in range(pool.num_nodes):
            total = (pool.free_count[node] + pool.anon_count[node] +
                     pool.file_count[node] + pool.kernel_count[node])
            if total != pool.node_size(node):
                raise AssertionError(
                    f"tick {self.tick}: node {node} counters sum to {total}, "
                    f"size is {pool.node_size(node)}")
        if pool.num_nodes > 1:
            for pid, proc in self.processes.items():
                if proc.trust is not Trust.OFFICIAL:
                    continue
                for node in range(1, pool.num_nodes):
                    anon, file = pool.resident(pid, node)
                    if anon or file:
                        raise AssertionError(
                            f"tick {self.tick}: trusted app {proc.name} holds "
                            f"{anon}+{file} frames on node {node}")
        if self.check_invariants >= 2:
            fresh = pool.recount()
            assert fresh["free"] == pool.free_count
            assert fresh["anon"] == pool.anon_count
            assert fresh["file"] == pool.file_count
            assert fresh["kernel"] == pool.kernel_count
            self.lru.check()
            ledgers = pool.recount_resident()
            for pid, (anon, file) in ledgers.items():
                assert anon == pool.resident_anon[pid]
                assert file == pool.resident_file[pid]

    # -- main loop --------------------------------------------------------------

    def run(self) -> MetricsReport:
        scen = self.scenario
        for t in range(scen.end_tick + 1):
            self.tick = t
            self._budget = scen.writeback_budget
            self._tick_reclaim = {}

            if t % scen.sample_every == 0:
                self._sample()

            for ev in self.events_by_tick.get(t, ()):
                if ev.action == "spawn":
                    self._do_spawn(ev.name, Trust(ev.trust),
                                   LifecycleState(ev.state), ev.frames)
                elif ev.action == "set_state":
                    self._do_set_state(ev.name, LifecycleState(ev.state))
                elif ev.action == "alloc_anon":
                    self._do_alloc_anon(ev.name, ev.frames)
                elif ev.action == "file_io":
                    self._do_file_io(ev)
                else:
                    raise ScenarioError(f"unknown event action {ev.action!r}")

            for stream in self.streams:
                self._step_stream(stream)

            for node in range(self.pool.num_nodes):
                res = background_step(self.pool, self.lru, node,
                                      max(0, self._budget))
                self._note_reclaim(node, res.reclaimed, res.written_back)

            for node in sorted(self._tick_reclaim):
                reclaimed, written = self._tick_reclaim[node]
                self.report.reclaim_rows.append((t, node, reclaimed, written))

        self.report.final_free = free_report(self.pool)
        if self.check_invariants:
            self._check()
        return self.report


def run(scenario: Scenario, check_invariants: int = 0) -> MetricsReport:
    """Execute a scenario and return its metrics."""
    return Simulation(scenario, check_invariants=check_invariants).run()
