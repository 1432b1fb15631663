"""``fedharness run <scenario-file>`` exits nonzero when any expectation fails."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .generate import permanence_scenario
from .runner import run
from .scenario import ScenarioInvalid, load_scenario


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="fedharness", description="Run federation scenarios.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_cmd = sub.add_parser("run", help="execute a scenario file")
    run_cmd.add_argument("scenario", type=Path)
    run_cmd.add_argument("--report", type=Path, help="also write the full report here")
    run_cmd.add_argument("--golden", type=Path, help="compare the report with this file")
    run_cmd.add_argument("--no-trace", action="store_true", help="omit request traces from stdout")

    gen = sub.add_parser("generate", help="print a generated permanence scenario")
    gen.add_argument("--seed", type=int, default=2006)
    gen.add_argument("--datasets", type=int, default=60)
    gen.add_argument("--migrations", type=int, default=3)
    gen.add_argument("--updates", type=int, default=12)
    gen.add_argument("--no-outage", action="store_true")

    args = parser.parse_args(argv)

    if args.command == "generate":
        sys.stdout.write(
            permanence_scenario(args.seed, args.datasets, args.migrations, args.updates, not args.no_outage)
        )
        return 0

    try:
        scenario = load_scenario(args.scenario)
    except (OSError, ScenarioInvalid) as exc:
        sys.stderr.write(f"fedharness: {exc}\n")
        return 2
    report = run(scenario)
    text = report.to_text()
    sys.stdout.write(report.to_text(traces=not args.no_trace))
    if args.report:
        args.report.write_text(text, encoding="utf-8")
    status = 0 if report.passed else 1
    if args.golden:
        golden = args.golden.read_text(encoding="utf-8")
        if golden != text:
            sys.stderr.write(f"fedharness: report differs from {args.golden}\n")
            status = 1
    return status


if __name__ == "__main__":
    sys.exit(main())
