"""Virtual-node layout: frame ranges, the node distance table, and CPU masks.

A topology carves a flat physical frame range [0, total_frames) into one or
more virtual nodes. Node 0 hosts trusted workloads by convention; the
single-node layout is the unpartitioned baseline.
"""

from __future__ import annotations

import bisect
from dataclasses import dataclass, field

LOCAL_DISTANCE = 10
REMOTE_DISTANCE = 20


class TopologyError(ValueError):
    """Base class for topology construction failures."""


class EmptyRange(TopologyError):
    pass


class OverlapError(TopologyError):
    pass


class CoverageError(TopologyError):
    pass


class DuplicateNodeId(TopologyError):
    pass


class UnknownNode(TopologyError):
    pass


@dataclass(frozen=True)
class VnodeRange:
    """Half-open frame interval [start_frame, end_frame) owned by one node."""

    node_id: int
    start_frame: int
    end_frame: int

    def __len__(self) -> int:
        return self.end_frame - self.start_frame


@dataclass(frozen=True)
class NodeTopology:
    """Validated node layout with distance table and CPU-to-node bindings."""

    ranges: tuple[VnodeRange, ...]
    distance: tuple[tuple[int, ...], ...]
    cpu_to_node: dict[int, int] = field(default_factory=dict)
    total_frames: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.ranges)

    def node_ids(self) -> range:
        return range(len(self.ranges))

    def node_size(self, node_id: int) -> int:
        if not 0 <= node_id < len(self.ranges):
            raise UnknownNode(f"node {node_id} not in topology of {len(self.ranges)} nodes")
        return len(self.ranges[node_id])

    def node_of_frame(self, frame: int) -> int:
        """Resolve a frame index to its owning node via binary search."""
        if not 0 <= frame < self.total_frames:
            raise IndexError(f"frame {frame} outside [0, {self.total_frames})")
        starts = [r.start_frame for r in self.ranges]
        i = bisect.bisect_right(starts, frame) - 1
        return self.ranges[i].node_id


def vnode_setup_memblock(start_frame: int, end_frame: int, node_id: int) -> VnodeRange:
    """Stake out one virtual node over the frame interval [start, end)."""
    if node_id < 0:
        raise TopologyError(f"node_id must be >= 0, got {node_id}")
    if start_frame < 0:
        raise TopologyError(f"start_frame must be >= 0, got {start_frame}")
    if start_frame >= end_frame:
        raise EmptyRange(f"empty frame range [{start_frame}, {end_frame})")
    return VnodeRange(node_id=node_id, start_frame=start_frame, end_frame=end_frame)


def vnode_generation(ranges: list[VnodeRange] | tuple[VnodeRange, ...],
                     total_frames: int) -> NodeTopology:
    """Assemble validated ranges into a topology with a default distance table.

    Ranges must tile [0, total_frames) exactly: no gaps, no overlaps, and node
    ids dense in 0..N-1. The distance table is filled with the conventional
    local/remote weights; no runtime policy consumes it, but it is part of the
    configuration record.
    """
    if not ranges:
        raise TopologyError("at least one range is required")

    seen_ids = set()
    for r in ranges:
        if r.node_id in seen_ids:
            raise DuplicateNodeId(f"node_id {r.node_id} appears twice")
        seen_ids.add(r.node_id)

    n = len(ranges)
    if seen_ids != set(range(n)):
        raise TopologyError(
            f"node ids must be dense 0..{n - 1}, got {sorted(seen_ids)}")

    ordered = sorted(ranges, key=lambda r: r.start_frame)
    for a, b in zip(ordered, ordered[1:]):
        if b.start_frame < a.end_frame:
            raise OverlapError(
                f"node {a.node_id} [{a.start_frame},{a.end_frame}) overlaps "
                f"node {b.node_id} [{b.start_frame},{b.end_frame})")

    covered = sum(len(r) for r in ordered)
    if ordered[0].start_frame != 0 or ordered[-1].end_frame != total_frames \
            or covered != total_frames:
        raise CoverageError(
            f"ranges cover {covered} frames with bounds "
            f"[{ordered[0].start_frame}, {ordered[-1].end_frame}), "
            f"expected exactly [0, {total_frames})")

    by_id = tuple(sorted(ranges, key=lambda r: r.node_id))
    distance = tuple(
        tuple(LOCAL_DISTANCE if i == j else REMOTE_DISTANCE for j in range(n))
        for i in range(n))
    return NodeTopology(ranges=by_id, distance=distance, cpu_to_node={},
                        total_frames=total_frames)


def vnode_set_cpumask(topology: NodeTopology, node_id: int,
                      cpus: set[int]) -> NodeTopology:
    """Bind a set of CPU indices to a node, overwriting prior bindings."""
    if not 0 <= node_id < topology.num_nodes:
        raise UnknownNode(
            f"node {node_id} not in topology of {topology.num_nodes} nodes")
    mapping = dict(topology.cpu_to_node)
    for cpu in cpus:
        mapping[cpu] = node_id
    return NodeTopology(ranges=topology.ranges, distance=topology.distance,
                        cpu_to_node=mapping, total_frames=topology.total_frames)
