"""Command-line front end: ``adabfgs {run,check,report,refsol}``."""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import experiment
from .diagnostics import NOT_APPLICABLE, NOT_REACHED, VIOLATED
from .traces import TraceFormatError

EXIT_OK = 0
EXIT_VIOLATION = 1
EXIT_USAGE = 2


def _config_errors():
    return (experiment.ConfigError, TraceFormatError, FileNotFoundError, KeyError,
            json.JSONDecodeError)


def cmd_run(args):
    exp = experiment.load_config(args.config)
    out = Path(args.out)
    summary = experiment.run_matrix(exp, out, threads=args.threads, allow_large=args.allow_large)
    for name, reason in summary["refused"].items():
        print(f"refused {name}: {reason}")
    for rid, e in sorted(summary["runs"].items()):
        gap = "" if e["best_gap"] is None else f" best_gap={e['best_gap']:.3e}"
        print(f"{rid}: {e['termination']} after {e['iterations']} iterations,"
              f" {e['evaluations']} evaluations{gap}")
    print(f"wrote {len(summary['runs'])} traces and summary.json to {out}")
    return EXIT_OK


def cmd_check(args):
    trace_dir = Path(args.out)
    report, failed = experiment.check_dir(trace_dir)
    (trace_dir / "check_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    for rid, entry in report.items():
        tag = "FAIL" if rid in failed else "ok"
        cert = "" if entry["certified"] else " (tuned constants: theory checks informational)"
        print(f"[{tag}] {rid}{cert}")
        for cid, s in entry["checks"].items():
            if s["status"] in (NOT_APPLICABLE,):
                continue
            note = "" if s["enforced"] else " [not enforced]"
            extra = ""
            if s["status"] == VIOLATED:
                extra = f" at k={s['violations'][:5]}"
            elif s["status"] != NOT_REACHED:
                extra = f" ({s['checked']} checked, {s['vacuous']} vacuous)"
            print(f"    {cid}: {s['status']}{extra}{note}")
    for rid in failed:
        hit = report[rid]["first_violation"]
        print(f"FAIL {rid}: check {hit['check']} violated at iteration {hit['k']}")
    print(f"{len(report) - len(failed)}/{len(report)} runs pass; report in "
          f"{trace_dir / 'check_report.json'}")
    return EXIT_VIOLATION if failed else EXIT_OK


def cmd_report(args):
    out = Path(args.report_dir) if args.report_dir else Path(args.out) / "report"
    index = experiment.write_report(args.out, out)
    for cell, curves in index.items():
        print(f"{cell}: " + ", ".join(f"{m} <- {rid}" for m, rid in curves.items()))
    print(f"plot data written to {out}")
    return EXIT_OK


def cmd_refsol(args):
    exp = experiment.load_config(args.config)
    sols, refused = experiment.refsol(exp, allow_large=args.allow_large)
    for name, info in sols.items():
        src = "cache" if info["cached"] else "computed"
        print(f"{name}: n={info['n']} f_star={info['f_star']!r} ({src})")
    for name, reason in refused.items():
        print(f"refused {name}: {reason}")
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(prog="adabfgs", description=__doc__)
    sub = p.add_subparsers(dest="verb", required=True)

    def common(sp, config=True):
        if config:
            sp.add_argument("--config", required=True, help="experiment file (INI sections)")
        sp.add_argument("--threads", type=int, default=1, help="worker processes")
        sp.add_argument("--allow-large", action="store_true",
                        help="permit dense estimators above n = 4000")
        sp.add_argument("-v", "--verbose", action="store_true")

    sp = sub.add_parser("run", help="execute an experiment matrix and write traces")
    common(sp)
    sp.add_argument("--out", required=True, help="trace directory")
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("check", help="replay every inequality on the traces in --out")
    common(sp, config=False)
    sp.add_argument("--out", required=True, help="trace directory")
    sp.set_defaults(func=cmd_check)

    sp = sub.add_parser("report", help="emit plot data and gnuplot stubs")
    common(sp, config=False)
    sp.add_argument("--out", required=True, help="trace directory")
    sp.add_argument("--report-dir", help="destination (default: <out>/report)")
    sp.set_defaults(func=cmd_report)

    sp = sub.add_parser("refsol", help="compute or load cached reference solutions")
    common(sp)
    sp.set_defaults(func=cmd_refsol)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except _config_errors() as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
