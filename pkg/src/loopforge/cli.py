"""Command-line driver.

subcommands:
  build  SRC  — parse a source file, apply its transform script, emit
                device source, kernel/schedule dumps and a cost report
  bench       — build one corpus configuration and report static costs
  check       — full interpreter-vs-oracle equivalence suite
"""

from __future__ import annotations

import argparse
import sys

from . import kernel as kn
from . import schedule as sch
from .bench.driver import BenchReport, corpus_source, full_check, run_benchmark
from .bench.inputs import BenchmarkConfig
from .codegen import count_cost, emit_source
from .diagnostics import LoopforgeError
from .frontend import lower_to_kernels, parse_source, parse_transform_script
from .transforms import apply_script


def _parse_int_list(text: str) -> list[int]:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(p) for p in text.split(",") if p.strip()]


def _cmd_build(args: argparse.Namespace) -> int:
    text = open(args.source).read() if args.source != "-" else sys.stdin.read()
    unit = parse_source(text)
    kernels = lower_to_kernels(unit)
    if args.script:
        script_text = open(args.script).read()
    else:
        script_text = unit.transform_block or ""
    commands = parse_transform_script(script_text)
    kernels = apply_script(kernels, commands)
    if len(kernels) != 1:
        print(f"error: script left {len(kernels)} kernels; expected one "
              f"fused kernel", file=sys.stderr)
        return 1
    k = kernels[0]
    problems = kn.check_consistency(k)
    if problems:
        for p in problems:
            print(f"error: {p}", file=sys.stderr)
        return 1
    s = sch.linearize(k)
    diags = sch.validate_schedule(k, s)
    if diags:
        for d in diags:
            print(f"error: {d}", file=sys.stderr)
        return 1
    source = emit_source(k, s)
    if args.emit:
        with open(args.emit, "w") as f:
            f.write(source)
    else:
        print(source, end="")
    if args.dump_kernel:
        print(kn.dump_kernel(k), end="")
    if args.dump_schedule:
        print(s.dump(), end="")
    params = {}
    for p in args.params or []:
        name, _, value = p.partition("=")
        params[name] = int(value)
    if params:
        print(count_cost(k, s, params).text(), end="")
    return 0


def _cmd_bench(args: argparse.Namespace) -> int:
    cfg = BenchmarkConfig(nq=args.nq, ne=args.ne, level=args.level,
                          seed=args.seed)
    report = run_benchmark(cfg, check=True if args.check else None)
    if args.emit:
        with open(args.emit, "w") as f:
            f.write(report.source)
    if args.report == "csv":
        print(BenchReport.csv_header())
        print(report.row_csv())
    else:
        print(report.row_text())
    if report.equivalence_error is not None \
            and report.equivalence_error > 1e-5:
        print(f"error: equivalence failed "
              f"({report.equivalence_error:.3e} > 1e-5)", file=sys.stderr)
        return 1
    return 0


def _cmd_check(args: argparse.Namespace) -> int:
    kernels = None
    if args.source:
        kernels = lower_to_kernels(parse_source(open(args.source).read()))
    else:
        kernels = lower_to_kernels(parse_source(corpus_source()))
    levels = _parse_int_list(args.levels)
    nqs = _parse_int_list(args.nq)
    nes = _parse_int_list(args.ne)
    seeds = _parse_int_list(args.seeds)
    failed = 0
    for cfg, err, ok in full_check(levels, nqs, nes, seeds, kernels=kernels):
        mark = "PASS" if ok else "FAIL"
        print(f"level={cfg.level} Nq={cfg.nq} Ne={cfg.ne} seed={cfg.seed} "
              f"rel_err={err:.3e} {mark}")
        if not ok:
            failed += 1
    if failed:
        print(f"error: {failed} configuration(s) failed", file=sys.stderr)
        return 1
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="loopforge",
        description="user-guided transformation of array kernels")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="transform a source file and emit code")
    b.add_argument("source", help="source file in the supported subset")
    b.add_argument("--script", help="transform script file (default: the "
                                    "source's embedded block)")
    b.add_argument("--emit", metavar="FILE", help="write device source here")
    b.add_argument("--dump-kernel", action="store_true")
    b.add_argument("--dump-schedule", action="store_true")
    b.add_argument("--params", nargs="*", metavar="NAME=VALUE",
                   help="parameter values for a cost report")
    b.set_defaults(fn=_cmd_build)

    e = sub.add_parser("bench", help="cost-report one corpus configuration")
    e.add_argument("--nq", type=int, required=True)
    e.add_argument("--ne", type=int, required=True)
    e.add_argument("--level", type=int, default=8)
    e.add_argument("--seed", type=int, default=1)
    e.add_argument("--check", action="store_true",
                   help="force the interpreter equivalence check")
    e.add_argument("--emit", metavar="FILE")
    e.add_argument("--report", choices=("text", "csv"), default="text")
    e.set_defaults(fn=_cmd_bench)

    c = sub.add_parser("check", help="full equivalence suite")
    c.add_argument("source", nargs="?",
                   help="source file (default: bundled corpus)")
    c.add_argument("--levels", default="1..8")
    c.add_argument("--nq", default="2,3,4")
    c.add_argument("--ne", default="1,2,5")
    c.add_argument("--seeds", default="1")
    c.set_defaults(fn=_cmd_check)

    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except LoopforgeError as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
