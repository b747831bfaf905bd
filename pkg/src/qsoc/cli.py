"""Command-line interface.

    qsoc run --config cfg.json [--out DIR] [--suite NAME]... [--seed S] [--threads T]
    qsoc validate --config cfg.json

Exit codes: 0 suites passed, 1 at least one suite failed, 2 configuration or
capacity error.  ``--threads`` (or the QSOC_THREADS variable) is accepted as a
scheduling hint; suites currently execute sequentially, which guarantees the
byte-identical reports the determinism contract requires, so the value never
influences results and is deliberately kept out of the report.
"""

from __future__ import annotations

import argparse
import os
import sys
import time

from . import __version__
from .config import SUITE_ORDER, load_config
from .errors import BudgetError, CapacityError, ConfigError, QsocError
from .report import write_report_files
from .suites import run_suite

__all__ = ["main", "build_report"]


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qsoc",
                                     description="quantum stochastic optimal control checks")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="execute verification suites and write reports")
    run.add_argument("--config", required=True, help="path to the JSON run configuration")
    run.add_argument("--out", default=None, help="output directory (overrides config)")
    run.add_argument("--suite", action="append", default=None, choices=SUITE_ORDER,
                     help="restrict to one suite (repeatable)")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")
    run.add_argument("--threads", type=int, default=None,
                     help="worker hint; results are independent of it")

    val = sub.add_parser("validate", help="check a configuration without running")
    val.add_argument("--config", required=True)
    return parser


def build_report(cfg, results) -> dict:
    return {
        "artifact": {"name": "qsoc", "version": __version__},
        "config": cfg.echo(),
        "suites": [{"name": r.name, "status": r.status, "metrics": r.metrics}
                   for r in results],
        "verdict": "pass" if all(r.passed for r in results) else "fail",
    }


def _resolve_threads(value) -> int:
    if value is None:
        value = os.environ.get("QSOC_THREADS", "1")
    try:
        threads = int(value)
    except (TypeError, ValueError):
        raise ConfigError([("threads", f"expected an integer, got {value!r}")])
    if threads < 1:
        raise ConfigError([("threads", "must be >= 1")])
    return threads


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "validate":
            print(f"config ok: problem={cfg.problem.name} N={cfg.n_steps} "
                  f"suites={','.join(cfg.suites)}")
            return 0

        _resolve_threads(args.threads)
        if args.seed is not None:
            cfg.seed = int(args.seed)
        if args.suite:
            cfg.suites = [s for s in SUITE_ORDER if s in set(args.suite)]
        outdir = args.out or cfg.output or "qsoc-out"

        results = []
        timings = {}
        plotdata = {}
        for name in cfg.suites:
            started = time.perf_counter()
            res = run_suite(cfg, name)
            timings[name] = time.perf_counter() - started
            results.append(res)
            if res.plotdata:
                plotdata.update(res.plotdata)
            print(f"{name}: {res.status}")

        report = build_report(cfg, results)
        written = write_report_files(report, outdir, cfg.emit,
                                     plotdata=plotdata, timings=timings)
        for kind, path in written.items():
            print(f"wrote {kind}: {path}")
        print(f"verdict: {report['verdict']}")
        return 0 if report["verdict"] == "pass" else 1
    except ConfigError as exc:
        for path, msg in exc.errors:
            print(f"config error: {path + ': ' if path else ''}{msg}", file=sys.stderr)
        return 2
    except (CapacityError, BudgetError) as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return 2
    except QsocError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
