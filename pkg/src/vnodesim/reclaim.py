"""Per-node page reclamation over a two-queue (active/inactive) LRU.

Only file-backed frames live on the queues; anonymous frames are exempt and
are never reclaimed. New file pages enter the inactive tail. A frame touched
twice while inactive is promoted to the active tail.

Scan discipline, which the brute-force test reference mirrors literally:
a shrink call runs passes over the entries present in the inactive queue at
pass start, head first. Clean frames are freed on the spot. Dirty frames
are written back while per-call writeback budget remains, becoming clean
and re-queued at the inactive tail, freeable only on a later pass; once the
budget is gone, dirty frames are left in place. A pass that makes no
progress demotes active-head frames to the inactive tail (clearing
referenced bits), examining each as it arrives. The call stops when the
target is met or when neither queue can yield anything further.

The implementation keeps the queues as intrusive doubly-linked lists plus a
FIFO of clean inactive entries, so the budget-exhausted portion of a pass
frees each remaining eligible clean frame in O(1) instead of stepping over
the dirty frames sitting in front of it; the resulting queue order is
identical to the literal walk.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from . import frames as fr
from .frames import FramePool


class NotFilePage(ValueError):
    pass


@dataclass(frozen=True)
class ReclaimResult:
    reclaimed: int
    written_back: int


INACTIVE = 1
ACTIVE = 2


class LruState:
    """Queue state for every node of a pool's topology."""

    def __init__(self, pool: FramePool):
        n_frames = pool.topology.total_frames
        n_nodes = pool.num_nodes
        self.pool = pool
        self._next = [-1] * n_frames
        self._prev = [-1] * n_frames
        self.where = bytearray(n_frames)     # 0 none, INACTIVE, ACTIVE
        self.referenced = bytearray(n_frames)
        self._stamp = [0] * n_frames
        self.inactive_head = [-1] * n_nodes
        self.inactive_tail = [-1] * n_nodes
        self.active_head = [-1] * n_nodes
        self.active_tail = [-1] * n_nodes
        self.inactive_count = [0] * n_nodes
        self.active_count = [0] * n_nodes
        self.inactive_clean = [0] * n_nodes
        # (frame, stamp, pass_seq) in inactive-queue order; stale entries are
        # skipped when their stamp no longer matches.
        self._clean_fifo: list[deque] = [deque() for _ in range(n_nodes)]
        self._seq = 0

    # -- intrusive list primitives -------------------------------------------

    def _push_inactive_tail(self, node: int, f: int) -> None:
        t = self.inactive_tail[node]
        self._prev[f] = t
        self._next[f] = -1
        if t == -1:
            self.inactive_head[node] = f
        else:
            self._next[t] = f
        self.inactive_tail[node] = f
        self.inactive_count[node] += 1
        self.where[f] = INACTIVE

    def _push_active_tail(self, node: int, f: int) -> None:
        t = self.active_tail[node]
        self._prev[f] = t
        self._next[f] = -1
        if t == -1:
            self.active_head[node] = f
        else:
            self._next[t] = f
        self.active_tail[node] = f
        self.active_count[node] += 1
        self.where[f] = ACTIVE

    def _unlink_inactive(self, node: int, f: int) -> None:
        p, n = self._prev[f], self._next[f]
        if p == -1:
            self.inactive_head[node] = n
        else:
            self._next[p] = n
        if n == -1:
            self.inactive_tail[node] = p
        else:
            self._prev[n] = p
        self.inactive_count[node] -= 1
        self.where[f] = 0

    def _unlink_active(self, node: int, f: int) -> None:
        p, n = self._prev[f], self._next[f]
        if p == -1:
            self.active_head[node] = n
        else:
            self._next[p] = n
        if n == -1:
            self.active_tail[node] = p
        else:
            self._prev[n] = p
        self.active_count[node] -= 1
        self.where[f] = 0

    def _note_clean(self, node: int, f: int, seq: int) -> None:
        self._stamp[f] += 1
        self._clean_fifo[node].append((f, self._stamp[f], seq))
        self.inactive_clean[node] += 1

    def _drop_clean(self, node: int, f: int) -> None:
        self._stamp[f] += 1
        self.inactive_clean[node] -= 1

    # -- membership ----------------------------------------------------------

    def enqueue_file(self, node: int, frame_ids, dirty: bool) -> None:
        """Attach freshly allocated file frames at the inactive tail."""
        for f in frame_ids:
            self._push_inactive_tail(node, f)
            self.referenced[f] = 0
            if not dirty:
                self._note_clean(node, f, self._seq)

    def remove(self, f: int) -> None:
        """Detach a frame that is being freed outside of reclaim."""
        w = self.where[f]
        if w == 0:
            return
        node = self.pool.node[f]
        if w == INACTIVE:
            self._unlink_inactive(node, f)
            if self.pool.kind[f] == fr.FILE_CLEAN:
                self._drop_clean(node, f)
        else:
            self._unlink_active(node, f)
        self.referenced[f] = 0

    # -- introspection (tests and invariant sweeps) ---------------------------

    def inactive_list(self, node: int) -> list[int]:
        out = []
        f = self.inactive_head[node]
        while f != -1:
            out.append(f)
            f = self._next[f]
        return out

    def active_list(self, node: int) -> list[int]:
        out = []
        f = self.active_head[node]
        while f != -1:
            out.append(f)
            f = self._next[f]
        return out

    def check(self) -> None:
        """Assert queue membership and counters against the frame array."""
        pool = self.pool
        for node in range(pool.num_nodes):
            inact = self.inactive_list(node)
            act = self.active_list(node)
            assert len(inact) == self.inactive_count[node]
            assert len(act) == self.active_count[node]
            assert len(inact) + len(act) == pool.file_count[node]
            clean = 0
            for f in inact:
                assert pool.kind[f] in (fr.FILE_CLEAN, fr.FILE_DIRTY)
                assert pool.node[f] == node
                if pool.kind[f] == fr.FILE_CLEAN:
                    clean += 1
            assert clean == self.inactive_clean[node]
            for f in act:
                assert pool.kind[f] in (fr.FILE_CLEAN, fr.FILE_DIRTY)
                assert pool.node[f] == node


def touch(pool: FramePool, lru: LruState, f: int) -> None:
    """Mark a file frame referenced; a second inactive touch promotes it."""
    k = pool.kind[f]
    if k not in (fr.FILE_CLEAN, fr.FILE_DIRTY):
        raise NotFilePage(f"frame {f} is {fr.KIND_NAMES.get(k, k)}, not a file page")
    if not lru.referenced[f]:
        lru.referenced[f] = 1
        return
    if lru.where[f] == INACTIVE:
        node = pool.node[f]
        lru._unlink_inactive(node, f)
        if k == fr.FILE_CLEAN:
            lru._drop_clean(node, f)
        lru._push_active_tail(node, f)
        lru.referenced[f] = 0


def shrink_node(pool: FramePool, lru: LruState, node: int, target: int,
                writeback_budget: int = 0) -> ReclaimResult:
    """Reclaim up to `target` file frames from one node.

    Returns the exact number of frames freed and written back; shortfall is
    visible as reclaimed < target.
    """
    if target < 1:
        return ReclaimResult(0, 0)
    reclaimed = 0
    written = 0
    budget = writeback_budget
    kinds = pool.kind
    fifo = lru._clean_fifo[node]

    while reclaimed < target:
        lru._seq += 1
        pass_seq = lru._seq
        progress = 0

        # Head walk while writeback budget remains: every entry met is either
        # freed (clean) or written back and moved to the tail (dirty).
        window = lru.inactive_count[node]
        examined = 0
        while budget > 0 and reclaimed < target and examined < window:
            f = lru.inactive_head[node]
            if f == -1:
                break
            examined += 1
            if kinds[f] == fr.FILE_CLEAN:
                lru._unlink_inactive(node, f)
                lru._drop_clean(node, f)
                pool.free_one_reclaimed(f)
                reclaimed += 1
                progress += 1
            else:
                lru._unlink_inactive(node, f)
                kinds[f] = fr.FILE_CLEAN
                budget -= 1
                written += 1
                progress += 1
                lru._push_inactive_tail(node, f)
                lru._note_clean(node, f, pass_seq)

        # Budget exhausted: dirty frames are skipped in place, so the rest of
        # the pass reduces to freeing each still-eligible clean entry, oldest
        # first. Entries written back during this pass wait for a later one.
        while reclaimed < target and fifo:
            f, st, sq = fifo[0]
            if lru._stamp[f] != st:
                fifo.popleft()
                continue
            if sq >= pass_seq:
                break
            fifo.popleft()
            lru._unlink_inactive(node, f)
            lru._drop_clean(node, f)
            pool.free_one_reclaimed(f)
            reclaimed += 1
            progress += 1

        if reclaimed >= target:
            break
        if progress > 0:
            continue
        if lru.active_count[node] == 0:
            break

        # Demotion: the inactive queue yielded nothing, pull from the active
        # head, clearing referenced bits and examining each demoted frame.
        while reclaimed < target and lru.active_count[node] > 0:
            f = lru.active_head[node]
            lru._unlink_active(node, f)
            lru.referenced[f] = 0
            if kinds[f] == fr.FILE_CLEAN:
                pool.free_one_reclaimed(f)
                reclaimed += 1
            elif budget > 0:
                kinds[f] = fr.FILE_CLEAN
                budget -= 1
                written += 1
                lru._push_inactive_tail(node, f)
                lru._note_clean(node, f, pass_seq)
            else:
                lru._push_inactive_tail(node, f)

    return ReclaimResult(reclaimed, written)


def background_step(pool: FramePool, lru: LruState, node: int,
                    writeback_budget: int = 0) -> ReclaimResult:
    """Watermark-driven reclaim: below low, shrink back toward high."""
    free = pool.free_count[node]
    wm = pool.watermarks[node]
    if free >= wm.low:
        return ReclaimResult(0, 0)
    return shrink_node(pool, lru, node, wm.high - free, writeback_budget)
