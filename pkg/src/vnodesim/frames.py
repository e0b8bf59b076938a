"""Physical frame pool with node-scoped free lists and watermarks.

Frames carry an owner and a kind. Anonymous frames are pinned until their
owner exits (there is no swap path), so only file-backed frames are ever
reclaimable. Allocation is all-or-nothing per request and strictly
node-local: a request for node n never touches another node's frames.
"""

from __future__ import annotations

from dataclasses import dataclass

from .topology import NodeTopology, UnknownNode

# Frame kinds, kept as small ints for compact bytearray storage.
FREE = 0
ANON = 1
FILE_CLEAN = 2
FILE_DIRTY = 3
KERNEL = 4

KIND_NAMES = {FREE: "free", ANON: "anon", FILE_CLEAN: "file_clean",
              FILE_DIRTY: "file_dirty", KERNEL: "kernel"}

NO_OWNER = -1
KERNEL_OWNER = -2

FRAME_BYTES = 4096
FRAMES_PER_MIB = (1 << 20) // FRAME_BYTES  # 256


class FrameError(ValueError):
    pass


class DoubleFree(FrameError):
    pass


class ZeroCount(FrameError):
    pass


class BadKind(FrameError):
    pass


@dataclass(frozen=True)
class Watermarks:
    """Per-node free-frame thresholds driving background and direct reclaim."""

    min: int
    low: int
    high: int

    def __post_init__(self):
        if not 0 < self.min <= self.low <= self.high:
            raise FrameError(f"watermarks must satisfy 0 < min <= low <= high, "
                             f"got {self.min}/{self.low}/{self.high}")


def default_watermarks(node_frames: int) -> Watermarks:
    """Simplified kswapd-style ladder: min = max(256, size/256), low/high above it."""
    wm_min = max(256, node_frames // 256)
    return Watermarks(min=wm_min, low=wm_min + wm_min // 4, high=wm_min + wm_min // 2)


@dataclass(frozen=True)
class Allocated:
    frames: list[int]
    reclaimed: int
    written_back: int = 0


@dataclass(frozen=True)
class Failed:
    shortfall: int
    reclaimed: int
    written_back: int = 0


AllocOutcome = Allocated | Failed


class FramePool:
    """Array-backed frame records plus per-node counters and free stacks.

    Construct via pool_init(). Mutation happens through the module-level
    operations and through reclaim, which frees frames it has already
    unlinked from the LRU.
    """

    def __init__(self, topology: NodeTopology,
                 watermarks: list[Watermarks] | None = None):
        n_frames = topology.total_frames
        n_nodes = topology.num_nodes
        self.topology = topology
        self.kind = bytearray(n_frames)          # all FREE
        self.owner = [NO_OWNER] * n_frames
        self.node = bytearray(n_frames)
        self.free_count = [0] * n_nodes
        self.anon_count = [0] * n_nodes
        self.file_count = [0] * n_nodes
        self.kernel_count = [0] * n_nodes
        self.free_stack: list[list[int]] = []
        # pid -> per-node [anon, file] frame counts
        self.resident_anon: dict[int, list[int]] = {}
        self.resident_file: dict[int, list[int]] = {}

        for r in topology.ranges:
            nid = r.node_id
            self.node[r.start_frame:r.end_frame] = bytes([nid]) * len(r)
            # Reversed so .pop() hands out ascending frame ids.
            self.free_stack.append(list(range(r.end_frame - 1, r.start_frame - 1, -1)))
            self.free_count[nid] = len(r)

        if watermarks is None:
            watermarks = [default_watermarks(len(r)) for r in topology.ranges]
        for wm, r in zip(watermarks, topology.ranges):
            if wm.high >= len(r):
                raise FrameError(f"high watermark {wm.high} must be below node "
                                 f"size {len(r)} (node {r.node_id})")
        self.watermarks = list(watermarks)

    @property
    def num_nodes(self) -> int:
        return self.topology.num_nodes

    def node_size(self, node: int) -> int:
        return self.topology.node_size(node)

    def resident(self, pid: int, node: int | None = None) -> tuple[int, int]:
        """(anon, file) frames held by pid, on one node or across all."""
        anon = self.resident_anon.get(pid)
        file = self.resident_file.get(pid)
        if anon is None:
            return (0, 0)
        if node is None:
            return (sum(anon), sum(file))
        return (anon[node], file[node])

    def resident_pids(self) -> list[int]:
        return [pid for pid, per_node in self.resident_anon.items()
                if any(per_node) or any(self.resident_file[pid])]

    def owned_frames(self, pid: int) -> list[int]:
        """All frame ids currently owned by pid (full scan, used on kill)."""
        return [f for f, o in enumerate(self.owner) if o == pid]

    def _ledger(self, pid: int) -> tuple[list[int], list[int]]:
        anon = self.resident_anon.get(pid)
        if anon is None:
            anon = self.resident_anon[pid] = [0] * self.num_nodes
            self.resident_file[pid] = [0] * self.num_nodes
        return anon, self.resident_file[pid]

    def free_one_reclaimed(self, f: int) -> None:
        """Free a file frame already unlinked from the LRU by reclaim."""
        if self.kind[f] not in (FILE_CLEAN, FILE_DIRTY):
            raise BadKind(f"reclaim may only free file frames, frame {f} is "
                          f"{KIND_NAMES.get(self.kind[f])}")
        nid = self.node[f]
        pid = self.owner[f]
        self.file_count[nid] -= 1
        self.resident_file[pid][nid] -= 1
        self.kind[f] = FREE
        self.owner[f] = NO_OWNER
        self.free_count[nid] += 1
        self.free_stack[nid].append(f)

    def recount(self) -> dict[str, list[int]]:
        """Recount all per-node counters from the frame array (test oracle)."""
        n = self.num_nodes
        fresh = {"free": [0] * n, "anon": [0] * n, "file": [0] * n,
                 "kernel": [0] * n}
        for f in range(self.topology.total_frames):
            nid = self.node[f]
            k = self.kind[f]
            if k == FREE:
                fresh["free"][nid] += 1
            elif k == ANON:
                fresh["anon"][nid] += 1
            elif k in (FILE_CLEAN, FILE_DIRTY):
                fresh["file"][nid] += 1
            else:
                fresh["kernel"][nid] += 1
        return fresh

    def recount_resident(self) -> dict[int, tuple[list[int], list[int]]]:
        """Per-pid (anon, file) per-node counts rebuilt from frame ownership."""
        out: dict[int, tuple[list[int], list[int]]] = {}
        n = self.num_nodes
        for f in range(self.topology.total_frames):
            pid = self.owner[f]
            if pid < 0:
                continue
            if pid not in out:
                out[pid] = ([0] * n, [0] * n)
            if self.kind[f] == ANON:
                out[pid][0][self.node[f]] += 1
            else:
                out[pid][1][self.node[f]] += 1
        return out


def pool_init(topology: NodeTopology,
              watermarks: list[Watermarks] | None = None) -> FramePool:
    """Build the all-free frame pool for a topology."""
    return FramePool(topology, watermarks)


def alloc_frames(pool: FramePool, node: int, count: int, owner: int, kind: int,
                 lru=None, writeback_budget: int = 0) -> AllocOutcome:
    """Allocate `count` frames on `node`, reclaiming file pages first if needed.

    The node must end the allocation with at least its min watermark free;
    when it cannot, nothing is allocated and the shortfall is reported.
    Reclaim never crosses nodes. File-backed frames are linked onto the
    node's inactive LRU tail when an LRU is attached.
    """
    if not 0 <= node < pool.num_nodes:
        raise UnknownNode(f"node {node} not in pool of {pool.num_nodes} nodes")
    if count < 1:
        raise ZeroCount(f"allocation count must be >= 1, got {count}")
    if kind not in (ANON, FILE_CLEAN, FILE_DIRTY):
        raise BadKind(f"cannot allocate kind {KIND_NAMES.get(kind, kind)}")

    wm_min = pool.watermarks[node].min
    reclaimed = 0
    written = 0
    if pool.free_count[node] < count + wm_min and lru is not None:
        from .reclaim import shrink_node
        deficit = count + wm_min - pool.free_count[node]
        result = shrink_node(pool, lru, node, deficit, writeback_budget)
        reclaimed = result.reclaimed
        written = result.written_back

    if pool.free_count[node] - count < wm_min:
        return Failed(shortfall=count + wm_min - pool.free_count[node],
                      reclaimed=reclaimed, written_back=written)

    stack = pool.free_stack[node]
    ids = [stack.pop() for _ in range(count)]
    kinds = pool.kind
    owners = pool.owner
    for f in ids:
        kinds[f] = kind
        owners[f] = owner
    pool.free_count[node] -= count
    anon_ledger, file_ledger = pool._ledger(owner)
    if kind == ANON:
        pool.anon_count[node] += count
        anon_ledger[node] += count
    else:
        pool.file_count[node] += count
        file_ledger[node] += count
        if lru is not None:
            lru.enqueue_file(node, ids, dirty=(kind == FILE_DIRTY))
    return Allocated(frames=ids, reclaimed=reclaimed, written_back=written)


def free_frames(pool: FramePool, frame_ids, lru=None) -> None:
    """Return frames to their nodes' free lists (process exit / kill path)."""
    kinds = pool.kind
    seen = set()
    for f in frame_ids:
        if kinds[f] == FREE or f in seen:
            raise DoubleFree(f"frame {f} is already free")
        seen.add(f)
    for f in frame_ids:
        k = kinds[f]
        nid = pool.node[f]
        pid = pool.owner[f]
        if k == ANON:
            pool.anon_count[nid] -= 1
            pool.resident_anon[pid][nid] -= 1
        else:
            pool.file_count[nid] -= 1
            pool.resident_file[pid][nid] -= 1
            if lru is not None:
                lru.remove(f)
        kinds[f] = FREE
        pool.owner[f] = NO_OWNER
        pool.free_count[nid] += 1
        pool.free_stack[nid].append(f)


def free_report(pool: FramePool) -> dict:
    """Per-node and global {free, file, anon} snapshot in frames and MiB."""
    nodes = []
    for nid in range(pool.num_nodes):
        nodes.append({
            "node": nid,
            "free_frames": pool.free_count[nid],
            "file_frames": pool.file_count[nid],
            "anon_frames": pool.anon_count[nid],
            "free_mib": pool.free_count[nid] / FRAMES_PER_MIB,
            "file_mib": pool.file_count[nid] / FRAMES_PER_MIB,
            "anon_mib": pool.anon_count[nid] / FRAMES_PER_MIB,
        })
    glob = {
        "free_frames": sum(pool.free_count),
        "file_frames": sum(pool.file_count),
        "anon_frames": sum(pool.anon_count),
    }
    glob["free_mib"] = glob["free_frames"] / FRAMES_PER_MIB
    glob["file_mib"] = glob["file_frames"] / FRAMES_PER_MIB
    glob["anon_mib"] = glob["anon_frames"] / FRAMES_PER_MIB
    return {"nodes": nodes, "global": glob}
