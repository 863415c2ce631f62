"""Command line front end: generate, load, repl, query, bench, oracle-check, stats."""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .bench import QUERY_TEMPLATES, BenchConfig, bench, read_query_file
from .checks import GC_MODES, oracle_check
from .db import Config, Database, parse_gc_interval
from .errors import ParseError, TempographError
from .history import AnchorPolicy
from .results import format_value
from .workload import Loader, WorkloadConfig, read_ops, write_workload

HELP = """\
statements: MATCH ... [FOR TT AS OF t | FOR TT FROM t1 TO t2] RETURN ...,
            CREATE, MATCH ... SET, MATCH ... [DETACH] DELETE
meta:       :stats  show storage statistics
            :gc     force one migration batch
            :help   this text
            :quit   leave"""


# -- argument helpers ---------------------------------------------------------

def _store_options(p):
    p.add_argument("--store", help="directory for the historical log and current-state snapshot")
    p.add_argument("--anchor", default="adaptive", help="adaptive | fixed:<u> (default adaptive)")
    p.add_argument("--tau1", type=float, default=1000)
    p.add_argument("--tau2", type=float, default=10000)
    p.add_argument("--c", type=float, default=0.01)
    p.add_argument("--gc-interval-ms", default="0",
                   help="0 migrates after every commit, off disables, N runs every N ms")
    p.add_argument("--retention-ms", type=int, default=0, help="0 keeps all history")


def _workload_options(p):
    p.add_argument("--ops", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--zipf", type=float, default=1.1)
    p.add_argument("--initial-vertices", type=int, default=60)
    p.add_argument("--initial-edges", type=int, default=120)


def _config(args) -> Config:
    policy = AnchorPolicy.parse(args.anchor, tau1=args.tau1, tau2=args.tau2, c=args.c)
    return Config(store_dir=args.store, anchor=policy, gc_interval_ms=parse_gc_interval(args.gc_interval_ms),
                  retention_ms=args.retention_ms)


def _print_result(result, tsv: bool, out) -> None:
    if not result.columns:
        counts = {k: v for k, v in result.summary.items() if k != "commit_ts" and v}
        print(", ".join(f"{k}: {v}" for k, v in counts.items()) or "ok", file=out)
        return
    table = [[format_value(v) for v in row] for row in result.rows]
    if tsv:
        print("\t".join(result.columns), file=out)
        for row in table:
            print("\t".join(row), file=out)
        return
    widths = [max([len(c)] + [len(r[i]) for r in table]) for i, c in enumerate(result.columns)]
    print(" | ".join(c.ljust(w) for c, w in zip(result.columns, widths)), file=out)
    print("-+-".join("-" * w for w in widths), file=out)
    for row in table:
        print(" | ".join(v.ljust(w) for v, w in zip(row, widths)), file=out)
    print(f"({len(table)} row{'s' if len(table) != 1 else ''})", file=out)


def _print_stats(stats, out) -> None:
    print(json.dumps(stats, indent=2, sort_keys=True), file=out)


def _gc_line(result) -> str:
    if result.error:
        return f"migration failed: {result.error}"
    return f"migrated {result.versions_migrated} versions"


# -- commands -------------------------------------------------------------------

def cmd_generate(args) -> int:
    cfg = WorkloadConfig(ops=args.ops, seed=args.seed, zipf=args.zipf,
                         initial_vertices=args.initial_vertices, initial_edges=args.initial_edges)
    n = write_workload(cfg, args.out)
    print(f"wrote {n} ops to {args.out}")
    return 0


def cmd_load(args) -> int:
    ops = read_ops(args.file)
    with Database(_config(args)) as db:
        loader = Loader(db)
        loader.apply(ops)
        print(f"applied {loader.applied} ops in {loader.groups} transactions, "
              f"created {loader.created} objects")
        if args.query_file:
            for qid, text in read_query_file(args.query_file).items():
                print(f"# {qid}: {text}")
                _print_result(db.execute(text), args.tsv, sys.stdout)
    return 0


def cmd_query(args) -> int:
    params = json.loads(args.params) if args.params else {}
    with Database(_config(args)) as db:
        _print_result(db.execute(args.statement, params), args.tsv, sys.stdout)
    return 0


def run_repl(db: Database, lines, out, tsv: bool = False) -> None:
    """Read statements from ``lines`` until EOF or ``:quit``; errors never end the session."""
    for raw in lines:
        text = raw.strip()
        if not text or text.startswith("#") or text.startswith("//"):
            continue
        if text.startswith(":"):
            cmd = text[1:].strip().lower()
            if cmd in ("quit", "q", "exit"):
                return
            if cmd == "stats":
                _print_stats(db.stats(), out)
            elif cmd == "gc":
                print(_gc_line(db.collect_garbage()), file=out)
            elif cmd == "help":
                print(HELP, file=out)
            else:
                print(f"unknown command :{cmd} (try :help)", file=out)
            continue
        try:
            _print_result(db.execute(text), tsv, out)
        except ParseError as exc:
            exc.text = exc.text or text
            print(exc.diagnostic(), file=out)
        except TempographError as exc:
            print(exc.reason(), file=out)


def cmd_repl(args) -> int:
    with Database(_config(args)) as db:
        interactive = sys.stdin.isatty()
        if interactive:
            print(f"tempograph {__version__}; :help for commands")
        run_repl(db, _stdin_lines(interactive), sys.stdout, args.tsv)
    return 0


def _stdin_lines(interactive):
    while True:
        if interactive:
            try:
                line = input("tg> ")
            except EOFError:
                return
        else:
            line = sys.stdin.readline()
            if not line:
                return
        yield line


def cmd_bench(args) -> int:
    cfg = BenchConfig(tau1=args.tau1, tau2=args.tau2, c=args.c, anchor=args.anchor,
                      gc_interval_ms=parse_gc_interval(args.gc_interval_ms), gc_every=args.gc_every,
                      retention_ms=args.retention_ms, zipf=args.zipf, ops=args.ops,
                      initial_vertices=args.initial_vertices, initial_edges=args.initial_edges,
                      seed=args.seed, queries_per_template=args.queries, slice_length=args.slice_length,
                      clients=args.clients, store_dir=args.store)
    statements = read_query_file(args.query_file) if args.query_file else QUERY_TEMPLATES
    if args.queries == 0:
        statements = {}
    report = bench(cfg, statements)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(report.to_csv())
    else:
        sys.stdout.write(report.to_csv())
    if args.stats_out:
        with open(args.stats_out, "w", encoding="utf-8") as fh:
            json.dump(report.stats, fh, indent=2, sort_keys=True)
    else:
        _print_stats(report.stats, sys.stderr)
    return 0


def cmd_oracle_check(args) -> int:
    modes = GC_MODES if args.gc == "all" else (args.gc,)
    failed = False
    for seed in range(args.seed, args.seed + args.seeds):
        report = oracle_check(seed, args.ops, args.queries, modes, grid=not args.no_grid,
                              workload={"initial_vertices": args.initial_vertices,
                                        "initial_edges": args.initial_edges, "zipf": args.zipf})
        if report.passed:
            print(f"seed {seed}: PASS ({report.queries} queries, {report.elapsed:.1f}s)")
        else:
            failed = True
            print(f"seed {seed}: FAIL")
            print(report.divergences[0].reproducer(seed, args.ops))
    return 1 if failed else 0


def cmd_stats(args) -> int:
    with Database(_config(args)) as db:
        _print_stats(db.stats(), sys.stdout)
    return 0


# -- entry point --------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"UsageError: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="tempograph", description="Transaction-time property graph store.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a seeded workload file")
    _workload_options(p)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("load", help="apply a workload file, optionally run a query file")
    p.add_argument("file")
    p.add_argument("--query-file")
    p.add_argument("--tsv", action="store_true")
    _store_options(p)
    p.set_defaults(func=cmd_load)

    p = sub.add_parser("query", help="run one statement")
    p.add_argument("statement")
    p.add_argument("--params", help="JSON object of $parameters")
    p.add_argument("--tsv", action="store_true")
    _store_options(p)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("repl", help="interactive statement loop")
    p.add_argument("--tsv", action="store_true")
    _store_options(p)
    p.set_defaults(func=cmd_repl)

    p = sub.add_parser("bench", help="workload plus query mix, CSV report")
    _store_options(p)
    _workload_options(p)
    p.add_argument("--queries", type=int, default=100, help="runs per query template")
    p.add_argument("--query-file", help="statements to run instead of the standard four")
    p.add_argument("--slice-length", type=int, default=100)
    p.add_argument("--gc-every", type=int, default=50, help="force migration after every N transactions")
    p.add_argument("--clients", type=int, default=1)
    p.add_argument("--out", help="CSV path (default stdout)")
    p.add_argument("--stats-out", help="JSON path for the storage breakdown (default stderr)")
    # forced batches keep counters deterministic; a background interval is opt-in
    p.set_defaults(func=cmd_bench, gc_interval_ms="off")

    p = sub.add_parser("oracle-check", help="compare the engine with the reference oracle")
    _workload_options(p)
    p.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    p.add_argument("--queries", type=int, default=100, help="random slice queries per workload")
    p.add_argument("--gc", choices=GC_MODES + ("all",), default="all")
    p.add_argument("--no-grid", action="store_true", help="skip the commit-timestamp grid")
    p.set_defaults(func=cmd_oracle_check, initial_vertices=40, initial_edges=80)

    p = sub.add_parser("stats", help="print storage statistics of a store")
    _store_options(p)
    p.set_defaults(func=cmd_stats)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TempographError as exc:
        print(exc.reason().splitlines()[0], file=sys.stderr)
    except (OSError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}".splitlines()[0], file=sys.stderr)
    return 2


if __name__ == "__main__":
    sys.exit(main())
