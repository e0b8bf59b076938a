"""Scenario files: parsing, validation, and the canonical writer.

The format is line-oriented text with named sections. Scalar settings are
`key = value` lines; apps and events are repeated `app =` / `event =` lines
kept in file order (same-tick events run in declaration order). All sizes
must convert to whole 4 KiB frames; values may be given in MiB or directly
in frames where a `_frames` key exists.
"""

from __future__ import annotations

import importlib.resources
from dataclasses import dataclass, replace
from pathlib import Path

from .frames import FRAMES_PER_MIB, Watermarks, default_watermarks
from .killers import DEFAULT_ADJ_LADDER, DEFAULT_MINFREE, GLOBAL_SCOPE, PER_NODE_SCOPE
from .lifecycle import STATE_ORDER, LifecycleState, Trust
from .topology import NodeTopology, vnode_generation, vnode_set_cpumask, vnode_setup_memblock

PAGE_KIB = 4
DEFAULT_WRITEBACK_BUDGET = 2048

EVENT_ACTIONS = ("spawn", "set_state", "alloc_anon", "file_io")


class ParseError(Exception):
    """Syntax-level failure: the file could not be read into sections."""


class ValidationError(Exception):
    """Semantic failures, all collected in one pass."""

    def __init__(self, errors: list[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass(frozen=True)
class AppSpec:
    name: str
    trust: str
    state: str
    anon_frames: int


@dataclass(frozen=True)
class EventSpec:
    tick: int
    action: str
    name: str
    trust: str = ""
    state: str = ""
    frames: int = 0
    total_frames: int = 0
    rate_frames: int = 0
    jitter_frames: int = 0


@dataclass(frozen=True)
class Scenario:
    total_frames: int
    nodes: tuple[int, ...]                      # frames per node
    cpus: tuple[tuple[int, int], ...] = ()      # (cpu, node)
    watermarks: tuple[tuple[int, int, int, int], ...] = ()  # (node, min, low, high)
    minfree: tuple[int, ...] = DEFAULT_MINFREE
    adj_ladder: tuple[int, ...] = DEFAULT_ADJ_LADDER
    lmk_scope: str = GLOBAL_SCOPE
    t_base_ms: float = 50.0
    t_page_ms: float = 0.002
    t_reclaim_ms: float = 0.01
    t_kill_ms: float = 200.0
    writeback_budget: int = DEFAULT_WRITEBACK_BUDGET
    adj_table: tuple[int, ...] = ()             # 7 entries when overridden
    apps: tuple[AppSpec, ...] = ()
    events: tuple[EventSpec, ...] = ()
    end_tick: int = 0
    sample_every: int = 10
    seed: int = 0

    @property
    def num_nodes(self) -> int:
        return len(self.nodes)

    @property
    def total_mib(self) -> int:
        return self.total_frames // FRAMES_PER_MIB

    def file_io_volume(self) -> int:
        return sum(e.total_frames for e in self.events if e.action == "file_io")


def with_overrides(scenario: Scenario, seed: int | None = None,
                   sample_every: int | None = None) -> Scenario:
    out = scenario
    if seed is not None:
        out = replace(out, seed=seed)
    if sample_every is not None:
        out = replace(out, sample_every=sample_every)
    return out


# -- reading ----------------------------------------------------------------


def _read_sections(text: str) -> dict[str, list[tuple[int, str, str]]]:
    sections: dict[str, list[tuple[int, str, str]]] = {}
    current = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ParseError(f"line {lineno}: malformed section header {raw.strip()!r}")
            current = line[1:-1].strip()
            sections.setdefault(current, [])
            continue
        if current is None:
            raise ParseError(f"line {lineno}: entry before any [section]")
        if "=" not in line:
            raise ParseError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = line.split("=", 1)
        sections[current].append((lineno, key.strip(), value.strip()))
    return sections


class _SectionReader:
    """Typed accessors over one section, accumulating errors by field name."""

    def __init__(self, name: str, entries: list[tuple[int, str, str]],
                 errors: list[str]):
        self.name = name
        self.errors = errors
        self.scalars: dict[str, str] = {}
        self.repeated: dict[str, list[tuple[int, str]]] = {}
        for lineno, key, value in entries:
            if key in ("app", "event"):
                self.repeated.setdefault(key, []).append((lineno, value))
            elif key in self.scalars:
                errors.append(f"{name}.{key}: duplicate key")
            else:
                self.scalars[key] = value

    def err(self, key: str, msg: str) -> None:
        self.errors.append(f"{self.name}.{key}: {msg}")

    def get_int(self, key: str, default=None, minimum=None):
        if key not in self.scalars:
            if default is None:
                self.err(key, "missing required value")
                return None
            return default
        raw = self.scalars.pop(key)
        try:
            v = int(raw)
        except ValueError:
            self.err(key, f"expected an integer, got {raw!r}")
            return default
        if minimum is not None and v < minimum:
            self.err(key, f"must be >= {minimum}, got {v}")
            return default
        return v

    def get_float(self, key: str, default: float) -> float:
        if key not in self.scalars:
            return default
        try:
            v = float(self.scalars.pop(key))
        except ValueError:
            self.err(key, "expected a number")
            return default
        if v < 0:
            self.err(key, f"must be >= 0, got {v}")
            return default
        return v

    def get_str(self, key: str, default=None):
        if key not in self.scalars:
            if default is None:
                self.err(key, "missing required value")
            return default
        return self.scalars.pop(key)

    def get_int_list(self, key: str, default=None):
        if key not in self.scalars:
            return default
        raw = self.scalars.pop(key)
        try:
            return tuple(int(x.strip()) for x in raw.split(",") if x.strip())
        except ValueError:
            self.err(key, f"expected comma-separated integers, got {raw!r}")
            return default

    def finish(self) -> None:
        for key in self.scalars:
            self.err(key, "unknown key")


def _kwargs(tokens: list[str]) -> dict[str, str]:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ValueError(f"expected key=value, got {tok!r}")
        k, v = tok.split("=", 1)
        out[k] = v
    return out


def _size_frames(kw: dict[str, str], mib_key: str, frames_key: str,
                 where: str, errors: list[str], required=True) -> int:
    has_mib = mib_key in kw
    has_frames = frames_key in kw
    if has_mib and has_frames:
        errors.append(f"{where}: give {mib_key} or {frames_key}, not both")
        return 0
    if not has_mib and not has_frames:
        if required:
            errors.append(f"{where}: missing {mib_key} or {frames_key}")
        return 0
    try:
        if has_mib:
            return int(kw.pop(mib_key)) * FRAMES_PER_MIB
        return int(kw.pop(frames_key))
    except ValueError:
        errors.append(f"{where}: size must be an integer")
        return 0


def _parse_app(lineno: int, value: str, errors: list[str]) -> AppSpec | None:
    where = f"apps.app (line {lineno})"
    tokens = value.split()
    if len(tokens) < 4:
        errors.append(f"{where}: expected '<name> <trust> <state> anon_mib=N'")
        return None
    name, trust, state = tokens[0], tokens[1], tokens[2]
    try:
        kw = _kwargs(tokens[3:])
    except ValueError as exc:
        errors.append(f"{where}: {exc}")
        return None
    anon = _size_frames(kw, "anon_mib", "anon_frames", where, errors)
    for k in kw:
        errors.append(f"{where}: unknown argument {k!r}")
    if trust not in (t.value for t in Trust):
        errors.append(f"{where}: unknown trust class {trust!r}")
        return None
    if state not in (s.value for s in LifecycleState):
        errors.append(f"{where}: unknown lifecycle state {state!r}")
        return None
    if anon < 0:
        errors.append(f"{where}: anon size must be >= 0")
        return None
    return AppSpec(name=name, trust=trust, state=state, anon_frames=anon)


def _parse_event(lineno: int, value: str, errors: list[str]) -> EventSpec | None:
    where = f"events.event (line {lineno})"
    tokens = value.split()
    if len(tokens) < 2:
        errors.append(f"{where}: expected '<tick> <action> ...'")
        return None
    try:
        tick = int(tokens[0])
    except ValueError:
        errors.append(f"{where}: tick must be an integer")
        return None
    if tick < 0:
        errors.append(f"{where}: tick must be >= 0")
        return None
    action = tokens[1]
    rest = tokens[2:]
    if action == "spawn":
        if len(rest) < 4:
            errors.append(f"{where}: spawn needs '<name> <trust> <state> anon_mib=N'")
            return None
        app = _parse_app(lineno, " ".join(rest), errors)
        if app is None:
            return None
        return EventSpec(tick=tick, action="spawn", name=app.name,
                         trust=app.trust, state=app.state, frames=app.anon_frames)
    if action == "set_state":
        if len(rest) != 2:
            errors.append(f"{where}: set_state needs '<name> <state>'")
            return None
        name, state = rest
        if state not in (s.value for s in LifecycleState):
            errors.append(f"{where}: unknown lifecycle state {state!r}")
            return None
        return EventSpec(tick=tick, action="set_state", name=name, state=state)
    if action == "alloc_anon":
        if len(rest) < 2:
            errors.append(f"{where}: alloc_anon needs '<name> mib=N|frames=N'")
            return None
        try:
            kw = _kwargs(rest[1:])
        except ValueError as exc:
            errors.append(f"{where}: {exc}")
            return None
        frames = _size_frames(kw, "mib", "frames", where, errors)
        for k in kw:
            errors.append(f"{where}: unknown argument {k!r}")
        if frames < 1:
            errors.append(f"{where}: allocation must be >= 1 frame")
            return None
        return EventSpec(tick=tick, action="alloc_anon", name=rest[0], frames=frames)
    if action == "file_io":
        if len(rest) < 2:
            errors.append(f"{where}: file_io needs '<name> total_mib=N rate_frames=N'")
            return None
        try:
            kw = _kwargs(rest[1:])
        except ValueError as exc:
            errors.append(f"{where}: {exc}")
            return None
        total = _size_frames(kw, "total_mib", "total_frames", where, errors)
        try:
            rate = int(kw.pop("rate_frames", "0"))
            jitter = int(kw.pop("jitter_frames", "0"))
        except ValueError:
            errors.append(f"{where}: rates must be integers")
            return None
        for k in kw:
            errors.append(f"{where}: unknown argument {k!r}")
        if rate < 0 or jitter < 0 or total < 0:
            errors.append(f"{where}: sizes and rates must be >= 0")
            return None
        return EventSpec(tick=tick, action="file_io", name=rest[0],
                         total_frames=total, rate_frames=rate,
                         jitter_frames=jitter)
    errors.append(f"{where}: unknown action {action!r}")
    return None


def parse_scenario_text(text: str, origin: str = "<string>") -> Scenario:
    sections = _read_sections(text)

    for required in ("memory", "run"):
        if required not in sections:
            raise ParseError(f"{origin}: missing required section [{required}]")

    errors: list[str] = []

    mem = _SectionReader("memory", sections.pop("memory"), errors)
    total_mib = mem.get_int("total_mib", minimum=1)
    page_kib = mem.get_int("page_kib", default=PAGE_KIB)
    if page_kib != PAGE_KIB:
        mem.err("page_kib", f"only {PAGE_KIB} KiB pages are supported")
    mem.finish()
    total_frames = (total_mib or 0) * FRAMES_PER_MIB

    nodes: tuple[int, ...] = (total_frames,)
    cpus: list[tuple[int, int]] = []
    if "topology" in sections:
        topo = _SectionReader("topology", sections.pop("topology"), errors)
        raw_nodes = topo.get_str("nodes_mib", default="baseline")
        if raw_nodes != "baseline":
            try:
                sizes = [int(x.strip()) for x in raw_nodes.split(",") if x.strip()]
            except ValueError:
                topo.err("nodes_mib", f"expected 'baseline' or comma-separated MiB sizes")
                sizes = []
            if sizes:
                if any(s < 1 for s in sizes):
                    topo.err("nodes_mib", "node sizes must be >= 1 MiB")
                nodes = tuple(s * FRAMES_PER_MIB for s in sizes)
        raw_cpus = topo.get_str("cpus", default="")
        if raw_cpus:
            for part in raw_cpus.split():
                try:
                    cpu_s, node_s = part.split(":", 1)
                    cpus.append((int(cpu_s), int(node_s)))
                except ValueError:
                    topo.err("cpus", f"expected 'cpu:node' pairs, got {part!r}")
        topo.finish()

    if total_frames and sum(nodes) != total_frames:
        errors.append(f"topology.nodes_mib: node sizes sum to "
                      f"{sum(nodes) // FRAMES_PER_MIB} MiB, expected total of "
                      f"{total_frames // FRAMES_PER_MIB} MiB")
    for cpu, node in cpus:
        if not 0 <= node < len(nodes):
            errors.append(f"topology.cpus: cpu {cpu} mapped to unknown node {node}")

    wm_overrides: list[tuple[int, int, int, int]] = []
    if "watermarks" in sections:
        wms = _SectionReader("watermarks", sections.pop("watermarks"), errors)
        for key in list(wms.scalars):
            if not key.startswith("node"):
                continue
            try:
                node_id = int(key[4:])
            except ValueError:
                wms.err(key, "expected nodeN keys")
                wms.scalars.pop(key)
                continue
            values = wms.get_int_list(key)
            if values is None or len(values) != 3:
                wms.err(key, "expected 'min,low,high' frames")
                continue
            wm_overrides.append((node_id, *values))
        wms.finish()
    for node_id, mn, lo, hi in wm_overrides:
        if not 0 <= node_id < len(nodes):
            errors.append(f"watermarks.node{node_id}: unknown node")
        elif not 0 < mn <= lo <= hi < nodes[node_id]:
            errors.append(f"watermarks.node{node_id}: need 0 < min <= low <= "
                          f"high < node size ({nodes[node_id]} frames)")
    overridden = {o[0] for o in wm_overrides}
    for node_id, size in enumerate(nodes):
        if node_id in overridden or not total_frames:
            continue
        wm = default_watermarks(size)
        if wm.high >= size:
            errors.append(f"topology.nodes_mib: node {node_id} of {size} frames is "
                          f"too small for default watermarks; override them")

    minfree = DEFAULT_MINFREE
    adj_ladder = DEFAULT_ADJ_LADDER
    lmk_scope = GLOBAL_SCOPE
    if "lmk" in sections:
        lmk = _SectionReader("lmk", sections.pop("lmk"), errors)
        minfree = lmk.get_int_list("minfree_frames", DEFAULT_MINFREE)
        adj_ladder = lmk.get_int_list("adj_ladder", DEFAULT_ADJ_LADDER)
        lmk_scope = lmk.get_str("scope", GLOBAL_SCOPE)
        lmk.finish()
        if lmk_scope not in (GLOBAL_SCOPE, PER_NODE_SCOPE):
            errors.append(f"lmk.scope: must be '{GLOBAL_SCOPE}' or '{PER_NODE_SCOPE}'")
        if len(minfree) != len(adj_ladder):
            errors.append("lmk.minfree_frames: length differs from adj_ladder")
        if any(a >= b for a, b in zip(minfree, minfree[1:])):
            errors.append("lmk.minfree_frames: must be strictly ascending")
        if any(a <= b for a, b in zip(adj_ladder, adj_ladder[1:])):
            errors.append("lmk.adj_ladder: must be strictly descending")

    t_base, t_page, t_reclaim, t_kill = 50.0, 0.002, 0.01, 200.0
    if "latency" in sections:
        lat = _SectionReader("latency", sections.pop("latency"), errors)
        t_base = lat.get_float("t_base_ms", t_base)
        t_page = lat.get_float("t_page_ms", t_page)
        t_reclaim = lat.get_float("t_reclaim_ms", t_reclaim)
        t_kill = lat.get_float("t_kill_ms", t_kill)
        lat.finish()

    writeback_budget = DEFAULT_WRITEBACK_BUDGET
    if "reclaim" in sections:
        rec = _SectionReader("reclaim", sections.pop("reclaim"), errors)
        writeback_budget = rec.get_int("writeback_budget_frames",
                                       DEFAULT_WRITEBACK_BUDGET, minimum=0)
        rec.finish()

    adj_table: tuple[int, ...] = ()
    if "lifecycle" in sections:
        lc = _SectionReader("lifecycle", sections.pop("lifecycle"), errors)
        table = lc.get_int_list("adj_table")
        lc.finish()
        if table is not None:
            if len(table) != len(STATE_ORDER):
                errors.append(f"lifecycle.adj_table: expected {len(STATE_ORDER)} values")
            else:
                adj_table = table

    apps: list[AppSpec] = []
    if "apps" in sections:
        ap = _SectionReader("apps", sections.pop("apps"), errors)
        for lineno, value in ap.repeated.get("app", []):
            spec = _parse_app(lineno, value, errors)
            if spec is not None:
                apps.append(spec)
        ap.finish()

    events: list[EventSpec] = []
    if "events" in sections:
        ev = _SectionReader("events", sections.pop("events"), errors)
        for lineno, value in ev.repeated.get("event", []):
            spec = _parse_event(lineno, value, errors)
            if spec is not None:
                events.append(spec)
        ev.finish()

    run = _SectionReader("run", sections.pop("run"), errors)
    end_tick = run.get_int("end_tick", minimum=0)
    sample_every = run.get_int("sample_every", default=10, minimum=1)
    seed = run.get_int("seed", default=0)
    run.finish()

    for name in sections:
        errors.append(f"{name}: unknown section")

    # Cross-field checks.
    names = [a.name for a in apps] + [e.name for e in events if e.action == "spawn"]
    seen = set()
    for name in names:
        if name in seen:
            errors.append(f"apps: app name {name!r} declared twice")
        seen.add(name)
    spawn_tick = {a.name: 0 for a in apps}
    for e in events:
        if e.action == "spawn":
            spawn_tick[e.name] = e.tick
    for e in events:
        if e.action == "spawn":
            continue
        if e.name not in spawn_tick:
            errors.append(f"events: {e.action} at tick {e.tick} references "
                          f"unknown app {e.name!r}")
        elif spawn_tick[e.name] > e.tick:
            errors.append(f"events: {e.action} at tick {e.tick} runs before "
                          f"{e.name!r} spawns at tick {spawn_tick[e.name]}")
    if end_tick is not None and events:
        latest = max(e.tick for e in events)
        if latest > end_tick:
            errors.append(f"run.end_tick: {end_tick} is before the last event "
                          f"at tick {latest}")

    anon_total = sum(a.anon_frames for a in apps)
    if total_frames and anon_total >= total_frames:
        errors.append(f"apps: initial anon of {anon_total} frames exceeds the "
                      f"{total_frames}-frame pool")

    if errors:
        raise ValidationError(errors)

    return Scenario(
        total_frames=total_frames,
        nodes=nodes,
        cpus=tuple(cpus),
        watermarks=tuple(sorted(wm_overrides)),
        minfree=tuple(minfree),
        adj_ladder=tuple(adj_ladder),
        lmk_scope=lmk_scope,
        t_base_ms=t_base,
        t_page_ms=t_page,
        t_reclaim_ms=t_reclaim,
        t_kill_ms=t_kill,
        writeback_budget=writeback_budget,
        adj_table=adj_table,
        apps=tuple(apps),
        events=tuple(events),
        end_tick=end_tick or 0,
        sample_every=sample_every,
        seed=seed,
    )


def parse_scenario(path: str | Path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ParseError(f"cannot read scenario {path}: {exc}") from exc
    return parse_scenario_text(text, origin=str(path))


# -- canonical writer --------------------------------------------------------


def emit_scenario(s: Scenario) -> str:
    lines = ["[memory]",
             f"total_mib = {s.total_frames // FRAMES_PER_MIB}",
             f"page_kib = {PAGE_KIB}",
             "",
             "[topology]"]
    if len(s.nodes) == 1:
        lines.append("nodes_mib = baseline")
    else:
        lines.append("nodes_mib = " +
                     ",".join(str(n // FRAMES_PER_MIB) for n in s.nodes))
    if s.cpus:
        lines.append("cpus = " + " ".join(f"{c}:{n}" for c, n in s.cpus))
    if s.watermarks:
        lines.append("")
        lines.append("[watermarks]")
        for node, mn, lo, hi in s.watermarks:
            lines.append(f"node{node} = {mn},{lo},{hi}")
    lines += ["",
              "[lmk]",
              "minfree_frames = " + ",".join(str(x) for x in s.minfree),
              "adj_ladder = " + ",".join(str(x) for x in s.adj_ladder),
              f"scope = {s.lmk_scope}",
              "",
              "[latency]",
              f"t_base_ms = {s.t_base_ms}",
              f"t_page_ms = {s.t_page_ms}",
              f"t_reclaim_ms = {s.t_reclaim_ms}",
              f"t_kill_ms = {s.t_kill_ms}",
              "",
              "[reclaim]",
              f"writeback_budget_frames = {s.writeback_budget}"]
    if s.adj_table:
        lines += ["", "[lifecycle]",
                  "adj_table = " + ",".join(str(x) for x in s.adj_table)]
    if s.apps:
        lines += ["", "[apps]"]
        for a in s.apps:
            lines.append(f"app = {a.name} {a.trust} {a.state} "
                         f"anon_frames={a.anon_frames}")
    if s.events:
        lines += ["", "[events]"]
        for e in s.events:
            if e.action == "spawn":
                lines.append(f"event = {e.tick} spawn {e.name} {e.trust} "
                             f"{e.state} anon_frames={e.frames}")
            elif e.action == "set_state":
                lines.append(f"event = {e.tick} set_state {e.name} {e.state}")
            elif e.action == "alloc_anon":
                lines.append(f"event = {e.tick} alloc_anon {e.name} "
                             f"frames={e.frames}")
            else:
                extra = f" jitter_frames={e.jitter_frames}" if e.jitter_frames else ""
                lines.append(f"event = {e.tick} file_io {e.name} "
                             f"total_frames={e.total_frames} "
                             f"rate_frames={e.rate_frames}{extra}")
    lines += ["",
              "[run]",
              f"end_tick = {s.end_tick}",
              f"sample_every = {s.sample_every}",
              f"seed = {s.seed}",
              ""]
    return "\n".join(lines)


# -- runtime object construction ---------------------------------------------


def build_topology(s: Scenario) -> NodeTopology:
    ranges = []
    start = 0
    for node_id, size in enumerate(s.nodes):
        ranges.append(vnode_setup_memblock(start, start + size, node_id))
        start += size
    topo = vnode_generation(ranges, s.total_frames)
    by_node: dict[int, set[int]] = {}
    for cpu, node in s.cpus:
        by_node.setdefault(node, set()).add(cpu)
    for node, cpuset in sorted(by_node.items()):
        topo = vnode_set_cpumask(topo, node, cpuset)
    return topo


def build_watermarks(s: Scenario) -> list[Watermarks]:
    overrides = {node: (mn, lo, hi) for node, mn, lo, hi in s.watermarks}
    out = []
    for node_id, size in enumerate(s.nodes):
        if node_id in overrides:
            mn, lo, hi = overrides[node_id]
            out.append(Watermarks(min=mn, low=lo, high=hi))
        else:
            out.append(default_watermarks(size))
    return out


def build_adj_table(s: Scenario) -> dict[LifecycleState, int]:
    if not s.adj_table:
        from .lifecycle import DEFAULT_ADJ_TABLE
        return dict(DEFAULT_ADJ_TABLE)
    return dict(zip(STATE_ORDER, s.adj_table))


def builtin_scenario_path(name: str) -> Path:
    """Path to a scenario shipped with the package (no .scn suffix needed)."""
    if not name.endswith(".scn"):
        name += ".scn"
    ref = importlib.resources.files("vnodesim") / "scenarios" / name
    return Path(str(ref))
