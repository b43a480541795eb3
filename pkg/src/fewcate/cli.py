"""Command-line entry point.

    fewcate run --config sweep.cfg [--workers N]
    fewcate report --in rows.csv --format md --out-dir tables/
"""

from __future__ import annotations

import argparse
from dataclasses import replace

from fewcate.harness import (
    SweepReport,
    emit_report,
    parse_config,
    read_rows_csv,
    run_sweep,
)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="fewcate",
        description="Sweep CATE estimators over few-placebo benchmark designs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run a sweep described by a config file")
    run_p.add_argument("--config", required=True, help="flat key = value config file")
    run_p.add_argument("--workers", type=int, default=None, help="override worker count")
    run_p.add_argument("--format", choices=("md", "csv"), default="md")

    rep_p = sub.add_parser("report", help="re-emit aggregate tables from a rows CSV")
    rep_p.add_argument("--in", dest="infile", required=True, help="rows.csv from a run")
    rep_p.add_argument("--format", choices=("md", "csv"), default="md")
    rep_p.add_argument("--out-dir", default=".", help="where to write the tables")

    args = parser.parse_args(argv)
    if args.command == "run":
        config = parse_config(args.config)
        if args.workers is not None:
            config = replace(config, workers=args.workers)
        report = run_sweep(config)
        paths = emit_report(
            report, format="markdown" if args.format == "md" else "csv"
        )
        for p in paths:
            print(p)
        return 0

    rows = read_rows_csv(args.infile)
    from fewcate.harness import SweepConfig

    methods = tuple(dict.fromkeys(r.method for r in rows))
    designs = tuple(dict.fromkeys(r.design for r in rows))
    n0s = tuple(sorted({r.n0 for r in rows}))
    config = SweepConfig(designs=designs, n0_list=n0s, methods=methods, out_dir=args.out_dir)
    report = SweepReport(config=config, rows=rows)
    paths = emit_report(
        report, out_dir=args.out_dir, format="markdown" if args.format == "md" else "csv"
    )
    for p in paths:
        print(p)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
