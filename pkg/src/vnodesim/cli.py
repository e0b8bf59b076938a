"""Command-line front end: validate scenarios, run them, compare two runs.

Exit codes: 0 success, 2 scenario validation/parse failure, 1 internal
error (I/O and everything else). Output directories are staged in a
temporary directory and only moved into place on success.
"""

from __future__ import annotations

import argparse
import os
import shutil
import sys
import tempfile
from pathlib import Path

from .engine import ScenarioError, run
from .report import (IncomparableScenarios, check_comparable,
                     write_compare_outputs, write_run_outputs)
from .scenario import ParseError, Scenario, ValidationError, parse_scenario, with_overrides

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_INVALID = 2


def _fail(msg: str) -> None:
    print(f"vnodesim: {msg}", file=sys.stderr)


def _load(path: str, seed: int | None = None,
          sample_every: int | None = None) -> Scenario:
    return with_overrides(parse_scenario(path), seed=seed,
                          sample_every=sample_every)


def _publish(build, outdir: str) -> None:
    """Build outputs in a staging directory, then move them into place."""
    target = Path(outdir)
    parent = target.resolve().parent
    parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{target.name}-", dir=parent))
    try:
        build(staging)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise
    if not target.exists():
        os.replace(staging, target)
        return
    for child in sorted(staging.iterdir()):
        dest = target / child.name
        if dest.is_dir():
            shutil.rmtree(dest)
        elif dest.exists():
            dest.unlink()
        shutil.move(str(child), str(dest))
    staging.rmdir()


def cmd_validate(args) -> int:
    scenario = parse_scenario(args.scenario)
    print(f"{args.scenario}: OK ({scenario.total_mib} MiB, "
          f"{scenario.num_nodes} node(s), {len(scenario.apps)} apps, "
          f"{len(scenario.events)} events)")
    return EXIT_OK


def cmd_run(args) -> int:
    scenario = _load(args.scenario, args.seed, args.sample_every)
    report = run(scenario)
    _publish(lambda d: write_run_outputs(report, d, plot=not args.no_plot),
             args.output)
    summary = {"kills_lmk": report.kill_count("lmk"),
               "kills_oomk": report.kill_count("oomk"),
               "final_free_mib": report.final_free["global"]["free_mib"]}
    print(f"run complete: kills_lmk={summary['kills_lmk']} "
          f"kills_oomk={summary['kills_oomk']} "
          f"final_free={summary['final_free_mib']:.1f} MiB -> {args.output}")
    return EXIT_OK


def cmd_compare(args) -> int:
    scen_a = _load(args.scenario_a)
    scen_b = _load(args.scenario_b)
    check_comparable(scen_a, scen_b)
    rep_a = run(scen_a)
    rep_b = run(scen_b)
    _publish(lambda d: write_compare_outputs(rep_a, rep_b, d,
                                             plot=not args.no_plot),
             args.output)
    dfree = (rep_b.final_free["global"]["free_mib"] -
             rep_a.final_free["global"]["free_mib"])
    dkills = len(rep_b.kills) - len(rep_a.kills)
    print(f"compare complete: delta_free={dfree:+.1f} MiB "
          f"delta_kills={dkills:+d} -> {args.output}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vnodesim",
        description="Simulate partitioned-memory scenarios and report "
                    "free-memory, reclaim, and kill behavior.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    p_run.add_argument("scenario")
    p_run.add_argument("-o", "--output", required=True,
                       help="output directory for traces and reports")
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--sample-every", type=int, default=None)
    p_run.add_argument("--no-plot", action="store_true",
                       help="skip figure rendering")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="run two scenarios and diff them")
    p_cmp.add_argument("scenario_a")
    p_cmp.add_argument("scenario_b")
    p_cmp.add_argument("-o", "--output", required=True)
    p_cmp.add_argument("--no-plot", action="store_true")
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate", help="parse and validate a scenario")
    p_val.add_argument("scenario")
    p_val.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        for err in exc.errors:
            _fail(err)
        return EXIT_INVALID
    except (ParseError, IncomparableScenarios, ScenarioError) as exc:
        _fail(str(exc))
        return EXIT_INVALID
    except OSError as exc:
        _fail(f"I/O error: {exc}")
        return EXIT_INTERNAL
    except Exception as exc:  # pragma: no cover - last-resort diagnostics
        _fail(f"internal error: {exc!r}")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
