"""Command line front end: ``generate``, ``solve`` and ``bench``.

Exit codes: 0 on success, 2 when some runs failed, 1 on configuration errors.
"""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import List, Optional


from . import bench
from .graph import GraphError, load_instance
from .hsvi import FAILED

logger = logging.getLogger("compact_posg")

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL = 0, 1, 2


class ConfigError(ValueError):
    pass


def parse_vertices(text: str) -> List[int]:
    """``"5..8"`` -> [5, 6, 7, 8]; ``"7"`` -> [7]; an empty range gives []."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            return list(range(int(lo), int(hi) + 1))
        return [int(text)]
    except ValueError:
        raise ConfigError(f"bad vertex range {text!r}; expected A..B or N")


def _budget(value: Optional[float]) -> Optional[float]:
    if value is not None and value < 0:
        raise ConfigError("budget must be nonnegative")
    return value


def _config(args, engines) -> bench.ExperimentConfig:
    vertices = parse_vertices(args.vertices)
    if any(n < 2 for n in vertices):
        raise ConfigError("instances need at least 2 vertices")
    try:
        return bench.ExperimentConfig(vertices=vertices, instances=args.instances, p=args.p,
                                      epsilon=args.epsilon, seed=args.seed,
                                      budget_secs=_budget(args.budget_secs), engines=engines,
                                      out=Path(args.out), max_states=args.max_states,
                                      jobs=getattr(args, "jobs", 1))
    except ValueError as exc:
        raise ConfigError(str(exc))


def cmd_generate(args) -> int:
    config = _config(args, ())
    try:
        paths = bench.write_batch(config)
    except OSError as exc:
        print(f"error: cannot write instances to {config.out}: {exc}", file=sys.stderr)
        return EXIT_PARTIAL
    print(f"wrote {len(paths)} instance files to {config.out}")
    return EXIT_OK


def _dump_solution(solution, engine: str, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    res = solution.result
    with open(directory / "trace.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "depth", "lb", "ub", "gap", "elapsed_s"])
        for t in res.trace:
            w.writerow([t.trial, t.depth, repr(t.lb), repr(t.ub), repr(t.gap), f"{t.elapsed:.6f}"])
    b = solution.bounds
    with open(directory / "lower_bound.txt", "w") as fh:
        if engine == "exact":
            fh.write("# alpha vector: one value per state\n")
            for alpha in b.alphas:
                fh.write(" ".join(repr(float(x)) for x in alpha) + "\n")
        else:
            fh.write("# z a_1 ... a_n\n")
            for a, z in zip(b.A, b.Z):
                fh.write(" ".join(repr(float(x)) for x in [z, *a]) + "\n")
    with open(directory / "upper_bound.txt", "w") as fh:
        pts, ys = (b.points, b.values) if engine == "exact" else (b.X, b.Y)
        fh.write("# y x_1 ... x_k\n")
        for x, y in zip(pts, ys):
            fh.write(" ".join(repr(float(v)) for v in [y, *x]) + "\n")


def cmd_solve(args) -> int:
    budget = _budget(args.budget_secs)
    if args.epsilon <= 0:
        raise ConfigError("epsilon must be positive")
    try:
        g = load_instance(args.instance)
    except (OSError, GraphError) as exc:
        print(f"error: cannot load {args.instance}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    rec, solution = bench.run_engine(g, args.engine, args.epsilon, budget, Path(args.instance).stem,
                                     -1, args.max_states, keep_solution=True)
    out = sys.stdout
    fh = None
    if args.out:
        path = Path(args.out)
        if path.suffix != ".csv":
            path.mkdir(parents=True, exist_ok=True)
            path = path / "results.csv"
        new = not path.exists()
        fh = open(path, "a", newline="")
        out = fh
    w = csv.DictWriter(out, fieldnames=bench.CSV_COLUMNS, lineterminator="\n")
    if fh is None or new:
        w.writeheader()
    w.writerow(rec.row())
    if fh:
        fh.close()
    if args.dump and solution is not None:
        _dump_solution(solution, args.engine, Path(args.dump))
    if rec.message and rec.status != "converged":
        print(f"{rec.status}: {rec.message}", file=sys.stderr)
    return EXIT_PARTIAL if rec.status == FAILED else EXIT_OK


def cmd_bench(args) -> int:
    engines = tuple(args.engine or ("exact", "compact"))
    config = _config(args, engines)

    def progress(rec):
        logger.info("%s %-8s %-9s lb=%.6f ub=%.6f %.2fs", rec.instance, rec.engine, rec.status,
                    rec.lb, rec.ub, rec.runtime_s)

    records = bench.run_bench(config, progress)
    print(bench.format_summary(bench.summarize(records)))
    failed = sum(r.status == FAILED for r in records)
    if failed:
        print(f"{failed} run(s) failed; see {config.out / 'results.csv'}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="compact-posg",
                                     description="HSVI solvers for the lateral-movement honeypot game.")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def batch_args(p, default_vertices):
        p.add_argument("--vertices", default=default_vertices, help="vertex range A..B (default %(default)s)")
        p.add_argument("--instances", type=int, default=20)
        p.add_argument("--p", type=float, default=0.5, help="probability of each shortcut edge")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default="results")
        p.add_argument("--epsilon", type=float, default=0.1)
        p.add_argument("--budget-secs", type=float, default=300.0)
        p.add_argument("--max-states", type=int, default=bench.DEFAULT_MAX_STATES)

    p = sub.add_parser("generate", help="write random instance files")
    batch_args(p, "5..12")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("solve", help="solve one instance file, print a CSV row")
    p.add_argument("instance")
    p.add_argument("--engine", choices=bench.ENGINES, default="compact")
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--budget-secs", type=float, default=None)
    p.add_argument("--max-states", type=int, default=bench.DEFAULT_MAX_STATES)
    p.add_argument("--out", default=None, help="CSV file or directory to append the row to")
    p.add_argument("--dump", default=None, help="directory for the trace and converged bounds")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("bench", help="run engines over a generated batch")
    batch_args(p, "5..12")
    p.add_argument("--engine", action="append", choices=bench.ENGINES,
                   help="engine to run; repeat for several (default: exact and compact)")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
