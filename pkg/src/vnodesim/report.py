"""Run outputs: delimited traces, JSON summaries, comparisons, and figures.

Trace CSVs are the primary, byte-deterministic artifacts; figures are
rendered alongside them from the same data for quick inspection.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

from .engine import MetricsReport
from .frames import FRAMES_PER_MIB
from .scenario import Scenario, emit_scenario

FREE_TRACE = "free_trace.csv"
RECLAIM_TRACE = "reclaim_trace.csv"
KILLS_TRACE = "kills.csv"
LAUNCH_TRACE = "launches.csv"
SUMMARY = "summary.json"
RUN_FIGURE = "free_timeline.png"
COMPARISON = "comparison.json"
COMPARISON_FIGURE = "comparison.png"
SCENARIO_ECHO = "scenario.scn"

TRACE_FILES = (FREE_TRACE, RECLAIM_TRACE, KILLS_TRACE, LAUNCH_TRACE)


class IncomparableScenarios(ValueError):
    pass


def write_free_trace(report: MetricsReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "node", "free_frames", "file_frames", "anon_frames"])
        w.writerows(report.samples)


def write_reclaim_trace(report: MetricsReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "node", "reclaimed", "written_back"])
        w.writerows(report.reclaim_rows)


def write_kills_trace(report: MetricsReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "killer", "pid", "name", "adj", "frames_released",
                    "scope"])
        for k in report.kills:
            w.writerow([k.tick, k.killer, k.pid, k.name, k.adj,
                        k.frames_released, k.scope])


def write_launch_trace(report: MetricsReport, path: Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["tick", "name", "trust", "frames", "reclaimed", "kills",
                    "failed", "ms"])
        for l in report.launches:
            w.writerow([l.tick, l.name, l.trust, l.frames, l.reclaimed,
                        l.kills, int(l.failed), f"{l.ms:.6f}"])


def summary_dict(report: MetricsReport) -> dict:
    per_node = [round(n["free_mib"], 6) for n in report.final_free["nodes"]]
    means = {}
    for trust in ("official", "untrusted"):
        m = report.mean_launch_ms(trust)
        means[trust] = None if m is None else round(m, 6)
    return {
        "kills_lmk": report.kill_count("lmk"),
        "kills_oomk": report.kill_count("oomk"),
        "alloc_stalls": report.alloc_stalls,
        "stalled_frames": report.stalled_frames,
        "final_free_mib_per_node": per_node,
        "final_free_mib_global": round(
            report.final_free["global"]["free_mib"], 6),
        "mean_launch_ms_by_trust": means,
        "total_reclaimed": report.total_reclaimed,
        "total_written_back": report.total_written_back,
        "applied_io_frames": report.applied_io_frames,
        "seed": report.seed,
    }


def write_run_outputs(report: MetricsReport, outdir: Path, plot: bool = True) -> None:
    outdir = Path(outdir)
    write_free_trace(report, outdir / FREE_TRACE)
    write_reclaim_trace(report, outdir / RECLAIM_TRACE)
    write_kills_trace(report, outdir / KILLS_TRACE)
    write_launch_trace(report, outdir / LAUNCH_TRACE)
    (outdir / SUMMARY).write_text(
        json.dumps(summary_dict(report), indent=2, sort_keys=True) + "\n")
    (outdir / SCENARIO_ECHO).write_text(emit_scenario(report.scenario))
    if plot:
        render_run_figure(report, outdir / RUN_FIGURE)


def check_comparable(a: Scenario, b: Scenario) -> None:
    if a.total_frames != b.total_frames:
        raise IncomparableScenarios(
            f"total memory differs: {a.total_mib} MiB vs {b.total_mib} MiB")
    if a.file_io_volume() != b.file_io_volume():
        raise IncomparableScenarios(
            f"file I/O volume differs: {a.file_io_volume()} vs "
            f"{b.file_io_volume()} frames")


def comparison_dict(a: MetricsReport, b: MetricsReport) -> dict:
    """Deltas are second-minus-first, so improvements show as +free, -kills."""
    free_a = a.final_free["global"]["free_mib"]
    free_b = b.final_free["global"]["free_mib"]
    mean_a = a.mean_launch_ms("official")
    mean_b = b.mean_launch_ms("official")
    delta_launch = None
    if mean_a is not None and mean_b is not None:
        delta_launch = round(mean_b - mean_a, 6)
    return {
        "delta_free_end_mib": round(free_b - free_a, 6),
        "delta_kills_lmk": b.kill_count("lmk") - a.kill_count("lmk"),
        "delta_kills_oomk": b.kill_count("oomk") - a.kill_count("oomk"),
        "delta_kills_total": len(b.kills) - len(a.kills),
        "delta_mean_official_launch_ms": delta_launch,
        "runs": {"a": summary_dict(a), "b": summary_dict(b)},
    }


def write_compare_outputs(a: MetricsReport, b: MetricsReport, outdir: Path,
                          plot: bool = True) -> None:
    outdir = Path(outdir)
    for label, rep in (("run_a", a), ("run_b", b)):
        sub = outdir / label
        sub.mkdir(parents=True, exist_ok=True)
        write_run_outputs(rep, sub, plot=plot)
    (outdir / COMPARISON).write_text(
        json.dumps(comparison_dict(a, b), indent=2, sort_keys=True) + "\n")
    if plot:
        render_compare_figure(a, b, outdir / COMPARISON_FIGURE)


# -- figures ------------------------------------------------------------------


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def _series(report: MetricsReport):
    """Global and per-node free MiB keyed by sample tick."""
    per_node: dict[int, tuple[list[int], list[float]]] = {}
    glob: dict[int, float] = {}
    for tick, node, free, _file, _anon in report.samples:
        xs, ys = per_node.setdefault(node, ([], []))
        xs.append(tick)
        ys.append(free / FRAMES_PER_MIB)
        glob[tick] = glob.get(tick, 0.0) + free / FRAMES_PER_MIB
    ticks = sorted(glob)
    return per_node, ticks, [glob[t] for t in ticks]


def render_run_figure(report: MetricsReport, path: Path) -> None:
    plt = _pyplot()
    per_node, ticks, global_free = _series(report)
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for node, (xs, ys) in sorted(per_node.items()):
        ax.plot(xs, ys, label=f"node {node}")
    if len(per_node) > 1:
        ax.plot(ticks, global_free, label="global", color="black",
                linestyle="--", linewidth=1)
    for k in report.kills:
        ax.axvline(k.tick, color="red", alpha=0.4, linewidth=1)
    ax.set_xlabel("tick")
    ax.set_ylabel("free memory (MiB)")
    ax.set_title("Free memory per node" +
                 (f"  ({len(report.kills)} kills)" if report.kills else ""))
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)


def render_compare_figure(a: MetricsReport, b: MetricsReport, path: Path) -> None:
    plt = _pyplot()
    fig, ax = plt.subplots(figsize=(8, 4.5))
    for label, rep, color in (("run A", a, "tab:orange"), ("run B", b, "tab:blue")):
        _nodes, ticks, global_free = _series(rep)
        ax.plot(ticks, global_free, label=f"{label} global free", color=color)
        for k in rep.kills:
            ax.axvline(k.tick, color=color, alpha=0.35, linewidth=1)
    ax.set_xlabel("tick")
    ax.set_ylabel("free memory (MiB)")
    ax.set_title("Global free memory, run A vs run B (vertical lines: kills)")
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=110)
    plt.close(fig)
